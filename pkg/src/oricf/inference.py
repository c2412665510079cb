"""Uniform model interface and the reference backends.

A backend is a class with a :class:`BackendDescriptor`, a constructor taking
its config mapping, and ``infer(inputs, ctx)``.  Backends are registered by
name in a :class:`BackendRegistry`; :class:`ModelRegistry` loads models and
hands out :class:`ModelHandle` ids.

The reference backends are pure functions of ``(inputs, ctx, config)``:

``stub-detector``
    tiles an image into ``block x block`` squares and reports every tile
    whose mean (over pixels and channels) is strictly above ``threshold``.
``template-llm``
    fills ``{query}`` / ``{chan:<channel>}`` placeholders.
``token-asr``
    maps the first sample of an audio chunk to a vocabulary word.
``identity``, ``identity-tensor``, ``identity-detections``
    pass-through backends, useful for plumbing tests.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping, Optional, Sequence

import numpy as np
import yaml

from .payloads import AudioChunk, Detection, DetectionSet, PayloadError, Tensor, Text, kind_matches
from .template import TemplateError, parse_template, render_template, template_channels


class InferenceError(Exception):
    """Backend failure while running a model."""


class UnknownBackend(KeyError):
    def __str__(self):
        return f"unknown backend {self.args[0]!r}"


class ConfigError(ValueError):
    pass


class InputKindError(InferenceError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    input_kinds: tuple[str, ...]
    output_kind: str
    context_channels_allowed: bool = False

    def __post_init__(self):
        if not self.input_kinds:
            raise ValueError("a backend must accept at least one input kind")


class Backend:
    """Base class for backend plugins."""

    descriptor: ClassVar[BackendDescriptor]

    def __init__(self, config: Mapping[str, Any]):
        problems = self.check_config(config)
        if problems:
            raise ConfigError(f"{self.descriptor.name}: " + "; ".join(problems))
        self.config = dict(config)

    @classmethod
    def check_config(cls, config: Mapping[str, Any]) -> list[str]:
        """Return a list of problems with *config*; empty when valid."""
        return []

    @classmethod
    def context_channels(cls, config: Mapping[str, Any]) -> list[str]:
        """Channels whose latest value this config reads from the context."""
        return []

    def infer(self, inputs: Sequence, ctx: Mapping):
        raise NotImplementedError


def _unknown_keys(config, allowed) -> list[str]:
    if not isinstance(config, Mapping):
        return ["config must be a mapping"]
    return [f"unknown config key {k!r}" for k in config if k not in allowed]


class BackendRegistry:
    """Name to backend class table."""

    def __init__(self):
        self._backends: dict[str, type[Backend]] = {}

    def register(self, cls: type[Backend]) -> type[Backend]:
        self._backends[cls.descriptor.name] = cls
        return cls

    def get(self, name: str) -> type[Backend]:
        try:
            return self._backends[name]
        except KeyError:
            raise UnknownBackend(name) from None

    def __contains__(self, name) -> bool:
        return name in self._backends

    def names(self) -> list[str]:
        return sorted(self._backends)

    def descriptor(self, name: str) -> BackendDescriptor:
        return self.get(name).descriptor

    def copy(self) -> "BackendRegistry":
        other = BackendRegistry()
        other._backends.update(self._backends)
        return other


BACKENDS = BackendRegistry()


@dataclass(frozen=True)
class ModelHandle:
    id: int
    model_id: str
    backend: str


def canonical_config(config: Mapping[str, Any]) -> str:
    return yaml.safe_dump(dict(config), sort_keys=True, allow_unicode=True)


class ModelRegistry:
    """Loaded models.  Safe for concurrent load and infer."""

    def __init__(self, backends: Optional[BackendRegistry] = None):
        self.backends = backends or BACKENDS
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._handles: dict[int, Backend] = {}
        self._instances: dict[tuple[str, str, str], Backend] = {}

    def load_model(self, model_id: str, backend: str, config: Optional[Mapping] = None) -> ModelHandle:
        config = dict(config or {})
        cls = self.backends.get(backend)
        key = (model_id, backend, canonical_config(config))
        with self._lock:
            instance = self._instances.get(key)
        if instance is None:
            instance = cls(config)
        with self._lock:
            instance = self._instances.setdefault(key, instance)
            handle = ModelHandle(next(self._ids) & 0xFFFFFFFF, model_id, backend)
            self._handles[handle.id] = instance
        return handle

    def instance(self, handle) -> Backend:
        hid = handle.id if isinstance(handle, ModelHandle) else int(handle)
        with self._lock:
            try:
                return self._handles[hid]
            except KeyError:
                raise KeyError(f"unknown model handle {hid}") from None

    def infer(self, handle, inputs: Sequence, ctx: Optional[Mapping] = None):
        return run_backend(self.instance(handle), inputs, ctx or {})


def run_backend(instance: Backend, inputs: Sequence, ctx: Mapping):
    """Call *instance* with input and output kind checks."""
    desc = instance.descriptor
    if not inputs:
        raise InputKindError(f"{desc.name}: no inputs")
    first = inputs[0]
    if not any(kind_matches(k, first) for k in desc.input_kinds):
        raise InputKindError(
            f"{desc.name} accepts {list(desc.input_kinds)}, got {getattr(first, 'kind', type(first).__name__)}"
        )
    try:
        out = instance.infer(inputs, ctx)
    except (InferenceError, PayloadError, TemplateError):
        raise
    except Exception as exc:  # plugin code is untrusted
        raise InferenceError(f"{desc.name}: {exc}") from exc
    if not kind_matches(desc.output_kind, out):
        raise InferenceError(f"{desc.name} returned {getattr(out, 'kind', out)!r}, expected {desc.output_kind}")
    return out


# -- reference backends -------------------------------------------------------


@BACKENDS.register
class StubDetector(Backend):
    descriptor = BackendDescriptor("stub-detector", ("image",), "detections")

    @classmethod
    def check_config(cls, config):
        problems = _unknown_keys(config, {"threshold", "block", "label"})
        if problems:
            return problems
        t = config.get("threshold", 200)
        if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t <= 255:
            problems.append("threshold must be an integer in [0, 255]")
        b = config.get("block", 8)
        if not isinstance(b, int) or isinstance(b, bool) or b < 1:
            problems.append("block must be a positive integer")
        label = config.get("label", "person")
        if not isinstance(label, str) or not label:
            problems.append("label must be a nonempty string")
        return problems

    def infer(self, inputs, ctx):
        return stub_detect(
            inputs[0],
            threshold=self.config.get("threshold", 200),
            block=self.config.get("block", 8),
            label=self.config.get("label", "person"),
        )


def stub_detect(image: Tensor, threshold: int = 200, block: int = 8, label: str = "person") -> DetectionSet:
    """Report every ``block x block`` tile whose mean exceeds *threshold*.

    Trailing partial tiles are ignored.  Tiles are scanned row-major.
    """
    if not isinstance(image, Tensor) or image.dtype != "u8" or image.array.ndim != 3:
        raise InputKindError("stub-detector needs a u8 [H, W, C] tensor")
    h, w, c = image.shape
    rows, cols = h // block, w // block
    if rows == 0 or cols == 0 or c == 0:
        return DetectionSet(())
    tiles = image.array[: rows * block, : cols * block].reshape(rows, block, cols, block, c)
    sums = tiles.sum(axis=(1, 3, 4), dtype=np.int64)
    n = block * block * c
    items = []
    for r, col in zip(*np.nonzero(sums > threshold * n)):
        mean = int(sums[r, col]) / n
        items.append(Detection(
            label,
            mean / 255,
            (col * block / w, r * block / h, (col + 1) * block / w, (r + 1) * block / h),
        ))
    return DetectionSet(tuple(items))


@BACKENDS.register
class TemplateLLM(Backend):
    descriptor = BackendDescriptor("template-llm", ("text",), "text", context_channels_allowed=True)

    @classmethod
    def check_config(cls, config):
        problems = _unknown_keys(config, {"template"})
        if problems:
            return problems
        if "template" not in config:
            return ["missing required config key 'template'"]
        try:
            parse_template(config["template"])
        except TemplateError as exc:
            problems.append(f"template: {exc}")
        return problems

    @classmethod
    def context_channels(cls, config):
        return template_channels(config["template"])

    def __init__(self, config):
        super().__init__(config)
        self._parts = parse_template(self.config["template"])

    def infer(self, inputs, ctx):
        return Text(render_template(self._parts, inputs[0].text, ctx))


@BACKENDS.register
class TokenASR(Backend):
    descriptor = BackendDescriptor("token-asr", ("audio",), "text")

    @classmethod
    def check_config(cls, config):
        problems = _unknown_keys(config, {"vocab"})
        if problems:
            return problems
        vocab = config.get("vocab")
        if not isinstance(vocab, list) or not all(isinstance(v, str) for v in vocab):
            problems.append("vocab must be a list of strings")
        return problems

    def infer(self, inputs, ctx):
        chunk: AudioChunk = inputs[0]
        if not chunk.samples:
            raise InferenceError("token-asr: audio chunk has no samples")
        token = chunk.samples[0]
        if token < 0:
            raise InferenceError(f"token-asr: negative token id {token}")
        vocab = self.config["vocab"]
        return Text(vocab[token] if token < len(vocab) else "")


@BACKENDS.register
class Identity(Backend):
    descriptor = BackendDescriptor("identity", ("text",), "text")

    @classmethod
    def check_config(cls, config):
        return _unknown_keys(config, ())

    def infer(self, inputs, ctx):
        return inputs[0]


@BACKENDS.register
class IdentityTensor(Identity):
    descriptor = BackendDescriptor("identity-tensor", ("tensor",), "tensor")


@BACKENDS.register
class IdentityDetections(Backend):
    """Passes detection sets through; answers images with a canned set."""

    descriptor = BackendDescriptor("identity-detections", ("image", "detections"), "detections")

    @classmethod
    def check_config(cls, config):
        problems = _unknown_keys(config, {"detections"})
        if problems:
            return problems
        try:
            cls._canned(config)
        except (PayloadError, TypeError, KeyError, ValueError) as exc:
            problems.append(f"detections: {exc}")
        return problems

    @staticmethod
    def _canned(config) -> DetectionSet:
        return DetectionSet(tuple(
            Detection(d["label"], d["score"], tuple(d["bbox"]))
            for d in config.get("detections", [])
        ))

    def infer(self, inputs, ctx):
        first = inputs[0]
        if isinstance(first, DetectionSet):
            return first
        return self._canned(self.config)
