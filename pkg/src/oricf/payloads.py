"""Typed payloads carried on channels.

Five payload variants exist: :class:`Tensor`, :class:`Text`,
:class:`AudioChunk`, :class:`DetectionSet` and :class:`Scalar`.  Images are
plain ``u8`` tensors of shape ``[H, W, C]`` with ``C`` in ``{1, 3}``.

Detection scores and box coordinates are stored at float32 precision so
that a detection set survives the binary offload encoding bit for bit.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

KINDS = ("tensor", "image", "text", "audio", "detections", "scalar")

DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4"), "i64": np.dtype("<i8")}
_DTYPE_NAMES = {v: k for k, v in DTYPES.items()}


class PayloadError(ValueError):
    """A payload violates its type invariants."""


def _f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True, eq=False)
class Tensor:
    """Dense row-major array with dtype ``u8``, ``f32`` or ``i64``."""

    array: np.ndarray

    kind = "tensor"

    def __post_init__(self):
        arr = np.asarray(self.array)
        name = next(
            (n for n, dt in DTYPES.items()
             if arr.dtype.kind == dt.kind and arr.dtype.itemsize == dt.itemsize),
            None,
        )
        if name is None:
            raise PayloadError(f"unsupported tensor dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr, dtype=DTYPES[name]).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)

    @classmethod
    def from_values(cls, dtype: str, shape, data) -> "Tensor":
        """Build a tensor from a flat value sequence, checking its length."""
        if dtype not in DTYPES:
            raise PayloadError(f"unknown tensor dtype {dtype!r}")
        shape = tuple(int(d) for d in shape)
        if any(d < 0 for d in shape):
            raise PayloadError(f"negative dimension in shape {shape}")
        flat = np.asarray(data, dtype=DTYPES[dtype]).reshape(-1)
        if flat.size != math.prod(shape):
            raise PayloadError(
                f"tensor data has {flat.size} values, shape {list(shape)} needs {math.prod(shape)}"
            )
        return cls(flat.reshape(shape))

    @classmethod
    def from_bytes(cls, dtype: str, shape, raw: bytes) -> "Tensor":
        if dtype not in DTYPES:
            raise PayloadError(f"unknown tensor dtype {dtype!r}")
        shape = tuple(int(d) for d in shape)
        need = math.prod(shape) * DTYPES[dtype].itemsize
        if len(raw) != need:
            raise PayloadError(f"tensor needs {need} bytes, got {len(raw)}")
        return cls(np.frombuffer(raw, dtype=DTYPES[dtype]).reshape(shape))

    @property
    def dtype(self) -> str:
        return _DTYPE_NAMES[self.array.dtype]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    def is_image(self) -> bool:
        return self.dtype == "u8" and self.array.ndim == 3 and self.shape[2] in (1, 3)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.array.tobytes() == other.array.tobytes()
        )

    def __hash__(self):
        return hash((self.dtype, self.shape, self.array.tobytes()))

    def __repr__(self):
        return f"Tensor(dtype={self.dtype}, shape={list(self.shape)})"


@dataclass(frozen=True)
class Text:
    text: str

    kind = "text"

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise PayloadError("Text payload needs a str")


@dataclass(frozen=True)
class AudioChunk:
    sample_rate_hz: int
    samples: tuple[int, ...]

    kind = "audio"

    def __post_init__(self):
        samples = tuple(int(s) for s in self.samples)
        if self.sample_rate_hz <= 0 or self.sample_rate_hz >= 2**32:
            raise PayloadError(f"sample rate must be in (0, 2^32), got {self.sample_rate_hz}")
        if any(s < -32768 or s > 32767 for s in samples):
            raise PayloadError("audio samples must fit in signed 16 bits")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))


@dataclass(frozen=True)
class Detection:
    label: str
    score: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label:
            raise PayloadError("detection label must be a nonempty string")
        score = _f32(self.score)
        bbox = tuple(_f32(v) for v in self.bbox)
        if len(bbox) != 4:
            raise PayloadError("bbox needs exactly 4 coordinates")
        if not 0.0 <= score <= 1.0:
            raise PayloadError(f"detection score {self.score} outside [0, 1]")
        x0, y0, x1, y1 = bbox
        if not all(0.0 <= v <= 1.0 for v in bbox) or x0 > x1 or y0 > y1:
            raise PayloadError(f"invalid normalized bbox {self.bbox}")
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "bbox", bbox)


@dataclass(frozen=True)
class DetectionSet:
    items: tuple[Detection, ...] = field(default_factory=tuple)

    kind = "detections"

    def __post_init__(self):
        items = tuple(self.items)
        if not all(isinstance(d, Detection) for d in items):
            raise PayloadError("DetectionSet items must be Detection instances")
        object.__setattr__(self, "items", items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass(frozen=True, eq=False)
class Scalar:
    value: float

    kind = "scalar"

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    # bitwise equality so NaN payloads compare equal to themselves
    def __eq__(self, other):
        if not isinstance(other, Scalar):
            return NotImplemented
        return np.float64(self.value).tobytes() == np.float64(other.value).tobytes()

    def __hash__(self):
        return hash(np.float64(self.value).tobytes())


Payload = Union[Tensor, Text, AudioChunk, DetectionSet, Scalar]
PAYLOAD_TYPES = (Tensor, Text, AudioChunk, DetectionSet, Scalar)


def kind_matches(channel_kind: str, payload) -> bool:
    """Whether *payload* may travel on a channel declared with *channel_kind*."""
    if channel_kind == "image":
        return isinstance(payload, Tensor) and payload.is_image()
    return getattr(payload, "kind", None) == channel_kind


def kind_accepts(accepted, channel_kind: str) -> bool:
    """Whether a consumer accepting *accepted* kinds can read *channel_kind*."""
    return channel_kind in accepted or (channel_kind == "image" and "tensor" in accepted)


def format_number(value: float) -> str:
    """Shortest round-trip decimal; integral values print without a fraction."""
    value = float(value)
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(value)


def render_text(payload) -> str:
    """Symbolic text rendering of any payload."""
    if isinstance(payload, Text):
        return payload.text
    if isinstance(payload, Scalar):
        return format_number(payload.value)
    if isinstance(payload, DetectionSet):
        return "\n".join(
            f"{d.label} {d.score:.4f} " + " ".join(f"{v:.4f}" for v in d.bbox) for d in payload
        )
    if isinstance(payload, Tensor):
        return f"tensor {payload.dtype} {'x'.join(str(d) for d in payload.shape)}"
    if isinstance(payload, AudioChunk):
        return f"audio {payload.sample_rate_hz}Hz {len(payload.samples)} samples"
    raise PayloadError(f"not a payload: {payload!r}")


# -- newline-delimited JSON form used by the ``file`` adapter -----------------


def to_json_obj(payload) -> dict[str, Any]:
    if isinstance(payload, Tensor):
        return {
            "kind": "tensor",
            "dtype": payload.dtype,
            "shape": list(payload.shape),
            "data": base64.b64encode(payload.array.tobytes()).decode("ascii"),
        }
    if isinstance(payload, Text):
        return {"kind": "text", "text": payload.text}
    if isinstance(payload, AudioChunk):
        return {
            "kind": "audio",
            "sample_rate_hz": payload.sample_rate_hz,
            "samples": list(payload.samples),
        }
    if isinstance(payload, DetectionSet):
        return {
            "kind": "detections",
            "items": [
                {"label": d.label, "score": d.score, "bbox": list(d.bbox)} for d in payload
            ],
        }
    if isinstance(payload, Scalar):
        return {"kind": "scalar", "value": payload.value}
    raise PayloadError(f"not a payload: {payload!r}")


def from_json_obj(obj: dict[str, Any]):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise PayloadError("payload object needs a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "tensor":
            raw = base64.b64decode(obj["data"], validate=True)
            return Tensor.from_bytes(obj["dtype"], obj["shape"], raw)
        if kind == "text":
            return Text(obj["text"])
        if kind == "audio":
            return AudioChunk(obj["sample_rate_hz"], obj["samples"])
        if kind == "detections":
            return DetectionSet(
                tuple(Detection(d["label"], d["score"], tuple(d["bbox"])) for d in obj["items"])
            )
        if kind == "scalar":
            return Scalar(obj["value"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PayloadError):
            raise
        raise PayloadError(f"bad {kind} payload: {exc}") from exc
    raise PayloadError(f"unknown payload kind {kind!r}")


def dumps_line(payload) -> str:
    return json.dumps(to_json_obj(payload), separators=(",", ":"), ensure_ascii=False)


def loads_line(line: str):
    return from_json_obj(json.loads(line))
