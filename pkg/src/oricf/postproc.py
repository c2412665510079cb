"""Post-processing operators and chains.

Every operator is a pure function of ``(input, params)``.  A chain runs
operators in order, publishing intermediate products on their bound
channels as it goes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from .payloads import Detection, DetectionSet, Scalar, Tensor, Text, render_text
from .template import TemplateError, parse_template, render_template, template_channels

logger = logging.getLogger(__name__)

OPS = ("label_map", "count", "annotate", "to_text", "format")


class PostProcError(ValueError):
    pass


def label_map(d: DetectionSet, mapping: Mapping[str, str]) -> DetectionSet:
    return DetectionSet(tuple(
        Detection(mapping.get(x.label, x.label), x.score, x.bbox) for x in d
    ))


def count(d: DetectionSet, label: str, min_score: float = 0.0) -> Scalar:
    if not 0.0 <= min_score <= 1.0:
        raise PostProcError(f"min_score {min_score} outside [0, 1]")
    return Scalar(sum(1 for x in d if x.label == label and x.score >= min_score))


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def box_pixels(bbox, width: int, height: int) -> tuple[int, int, int, int]:
    """Denormalize *bbox* to inclusive pixel bounds, clamped to the image."""
    x0, y0, x1, y1 = bbox
    cx = lambda v: min(max(_round_half_up(v * width), 0), width - 1)  # noqa: E731
    cy = lambda v: min(max(_round_half_up(v * height), 0), height - 1)  # noqa: E731
    return cx(x0), cy(y0), cx(x1), cy(y1)


def annotate(img: Tensor, d: DetectionSet, value: int = 255) -> Tensor:
    """Draw the 1-pixel border of every detection box onto a copy of *img*."""
    if not isinstance(img, Tensor) or img.dtype != "u8" or img.array.ndim != 3:
        raise PostProcError("annotate needs a u8 [H, W, C] image")
    if not 0 <= value <= 255:
        raise PostProcError(f"value {value} outside [0, 255]")
    out = img.array.copy()
    h, w = out.shape[:2]
    if h == 0 or w == 0:
        return Tensor(out)
    for det in d:
        px0, py0, px1, py1 = box_pixels(det.bbox, w, h)
        out[py0, px0:px1 + 1] = value
        out[py1, px0:px1 + 1] = value
        out[py0:py1 + 1, px0] = value
        out[py0:py1 + 1, px1] = value
    return Tensor(out)


def to_text(p) -> Text:
    if not isinstance(p, (DetectionSet, Scalar)):
        raise PostProcError(f"to_text needs detections or a scalar, got {getattr(p, 'kind', p)!r}")
    return Text(render_text(p))


def format_payload(p, template: str, ctx: Mapping) -> Text:
    """Template substitution with ``{query}`` bound to the rendered input."""
    return Text(render_template(parse_template(template), render_text(p), ctx))


# -- static checking ----------------------------------------------------------

# input kinds each op accepts, and its output kind as a function of input kind
_OP_INPUTS = {
    "label_map": ("detections",),
    "count": ("detections",),
    "annotate": ("detections",),
    "to_text": ("detections", "scalar"),
    "format": ("tensor", "image", "text", "audio", "detections", "scalar"),
}
_OP_OUTPUT = {
    "label_map": "detections",
    "count": "scalar",
    "annotate": "image",
    "to_text": "text",
    "format": "text",
}


def _is_str_map(m) -> bool:
    return isinstance(m, Mapping) and all(
        isinstance(k, str) and isinstance(v, str) and v for k, v in m.items()
    )


def check_params(op: str, params: Mapping[str, Any]) -> list[tuple[str, str]]:
    """Problems with *params* for *op* as ``(key, message)`` pairs."""
    if op not in OPS:
        return [("op", f"unknown post op {op!r}")]
    if not isinstance(params, Mapping):
        return [("params", "params must be a mapping")]
    allowed = {
        "label_map": {"map"},
        "count": {"label", "min_score"},
        "annotate": {"value"},
        "to_text": set(),
        "format": {"template"},
    }[op]
    problems = [(k, f"unknown param {k!r} for {op}") for k in params if k not in allowed]
    if op == "label_map":
        if "map" not in params:
            problems.append(("map", "label_map needs 'map'"))
        elif not _is_str_map(params["map"]):
            problems.append(("map", "map must be a string-to-nonempty-string mapping"))
    elif op == "count":
        if not isinstance(params.get("label"), str) or not params.get("label"):
            problems.append(("label", "count needs a nonempty 'label'"))
        ms = params.get("min_score", 0.0)
        if isinstance(ms, bool) or not isinstance(ms, (int, float)) or not 0.0 <= ms <= 1.0:
            problems.append(("min_score", "min_score must be a number in [0, 1]"))
    elif op == "annotate":
        v = params.get("value", 255)
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v <= 255:
            problems.append(("value", "value must be an integer in [0, 255]"))
    elif op == "format":
        if "template" not in params:
            problems.append(("template", "format needs 'template'"))
        else:
            try:
                parse_template(params["template"])
            except TemplateError as exc:
                problems.append(("template", str(exc)))
    return problems


def step_output_kind(op: str, input_kind: str) -> Optional[str]:
    """Output kind of *op* on *input_kind*, or ``None`` if not applicable."""
    accepted = _OP_INPUTS[op]
    if input_kind in accepted or (input_kind == "image" and "tensor" in accepted):
        return _OP_OUTPUT[op]
    return None


def publish_compatible(output_kind: str, channel_kind: str) -> bool:
    return output_kind == channel_kind or (output_kind == "image" and channel_kind == "tensor")


# -- chains -------------------------------------------------------------------


@dataclass(frozen=True)
class PostStep:
    op: str
    params: Mapping[str, Any] = field(default_factory=dict)
    publish: Optional[str] = None

    def channels(self) -> list[str]:
        """Context channels read by this step."""
        if self.op == "format":
            return template_channels(self.params["template"])
        return []

    def apply(self, value, trigger=None, ctx: Optional[Mapping] = None):
        p = self.params
        if self.op == "label_map":
            return label_map(value, p["map"])
        if self.op == "count":
            return count(value, p["label"], float(p.get("min_score", 0.0)))
        if self.op == "annotate":
            if trigger is None:
                raise PostProcError("annotate needs the node's input image")
            return annotate(trigger, value, int(p.get("value", 255)))
        if self.op == "to_text":
            return to_text(value)
        if self.op == "format":
            return format_payload(value, p["template"], ctx or {})
        raise PostProcError(f"unknown post op {self.op!r}")


class PostChain:
    """Ordered post steps with their publish bindings."""

    def __init__(self, steps=(), producer: Optional[str] = None):
        self.steps = [s if isinstance(s, PostStep) else PostStep(**s) for s in steps]
        for s in self.steps:
            problems = check_params(s.op, s.params)
            if problems:
                raise PostProcError("; ".join(msg for _, msg in problems))
        self.producer = producer

    def context_channels(self) -> list[str]:
        out: list[str] = []
        for s in self.steps:
            out.extend(c for c in s.channels() if c not in out)
        return out

    def run(self, node_output, bus=None, trigger=None, ctx: Optional[Mapping] = None,
            publish: Optional[Callable[[str, Any], Any]] = None):
        """Apply every step; publish bound intermediates before moving on."""
        if publish is None and bus is not None:
            publish = lambda ch, v: bus.publish(ch, v, producer=self.producer)  # noqa: E731
        value = node_output
        for step in self.steps:
            if step.op == "format" and ctx is None and bus is not None:
                step_ctx = {}
                for c in step.channels():
                    m = bus.latest(c)
                    if m is not None:
                        step_ctx[c] = m.payload
            else:
                step_ctx = ctx
            value = step.apply(value, trigger=trigger, ctx=step_ctx)
            if step.publish is not None and publish is not None:
                publish(step.publish, value)
        return value


def run_chain(chain: PostChain, node_output, bus=None, **kwargs):
    return chain.run(node_output, bus, **kwargs)
