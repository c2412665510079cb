"""Declarative, model-agnostic orchestration of multimodal inference pipelines."""

from importlib import resources

from .bus import Bus, Message, Subscription
from .inference import BACKENDS, Backend, BackendDescriptor, ModelHandle, ModelRegistry
from .orchestrator import Pipeline, RunReport, StartupError, build_runtime, graph_dot
from .payloads import AudioChunk, Detection, DetectionSet, Scalar, Tensor, Text
from .pipeline import PipelineSpec, SpecError, parse_spec, serialize_spec, validate_graph

__version__ = "0.1.0"


def demo_spec_path():
    """Path of the shipped people-counting demo spec."""
    return resources.files(__name__).joinpath("specs/demo.yaml")


def demo_spec_text() -> str:
    return demo_spec_path().read_text(encoding="utf-8")


__all__ = [
    "AudioChunk", "BACKENDS", "Backend", "BackendDescriptor", "Bus", "Detection", "DetectionSet",
    "Message", "ModelHandle", "ModelRegistry", "Pipeline", "PipelineSpec", "RunReport", "Scalar",
    "SpecError", "StartupError", "Subscription", "Tensor", "Text", "build_runtime",
    "demo_spec_path", "demo_spec_text", "graph_dot", "parse_spec", "serialize_spec", "validate_graph",
]
