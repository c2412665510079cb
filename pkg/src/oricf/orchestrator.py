"""Turn a validated spec into running adapters and node tasks.

Each node consumes its first input channel as the trigger; the remaining
inputs are context channels whose latest values are handed to the backend.
Nodes run locally or on an edge worker depending on their placement, and the
rest of the pipeline cannot tell the difference.

Sources run in one of two modes.  Without a ``schedule`` they free-run, one
thread each.  With a ``schedule`` the sources are *sequenced*: one item is
published at a time in the listed order, and the next is held back until the
whole pipeline is idle again, which makes end-to-end outputs reproducible.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Union

from . import adapters as _adapters
from .bus import Bus, BusClosed
from .inference import BACKENDS, BackendRegistry, ModelHandle, ModelRegistry, run_backend
from .offload.proxy import RETRY_ATTEMPTS, RETRY_BACKOFF_S, RemoteModelProxy, WorkerUnavailable
from .pipeline import NodeSpec, Placement, PipelineSpec, _graph, parse_placement, validate_graph
from .postproc import PostChain

logger = logging.getLogger(__name__)


class StartupError(RuntimeError):
    pass


@dataclass
class NodeRuntime:
    spec: NodeSpec
    placement: Placement
    executor: Union[ModelHandle, RemoteModelProxy]
    registry: Optional[ModelRegistry]
    chain: PostChain
    context_channels: list[str]
    messages_in: int = 0
    messages_out: int = 0
    errors: int = 0
    failed: bool = False
    last_error: Optional[str] = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def is_remote(self) -> bool:
        return isinstance(self.executor, RemoteModelProxy)

    def infer(self, inputs, ctx):
        if self.is_remote:
            return self.executor.infer(inputs, ctx)
        return run_backend(self.registry.instance(self.executor), inputs, ctx)

    def close(self) -> None:
        if self.is_remote:
            self.executor.close()


def build_runtime(spec: PipelineSpec, registry: Optional[ModelRegistry] = None,
                  bus: Optional[Bus] = None, attempts: int = RETRY_ATTEMPTS,
                  backoff: float = RETRY_BACKOFF_S) -> list[NodeRuntime]:
    """One runtime per node, in topological order.

    Edge nodes connect to their worker and load the model there; an
    unreachable worker fails startup with a :class:`StartupError`.
    """
    registry = registry or ModelRegistry()
    backends = registry.backends
    runtimes: list[NodeRuntime] = []
    try:
        for name in validate_graph(spec):
            node = spec.node(name)
            cls = backends.get(node.backend)
            ctx_channels = list(node.context_inputs)
            chain = PostChain(node.post, producer=node.name)
            for c in cls.context_channels(node.config) + chain.context_channels():
                if c not in ctx_channels:
                    ctx_channels.append(c)
            place = spec.placement_of(name)
            if place.is_edge:
                proxy = RemoteModelProxy(place.address, node.model, node.backend, node.config,
                                         node=name, attempts=attempts, backoff=backoff)
                try:
                    proxy.connect()
                except WorkerUnavailable as exc:
                    raise StartupError(f"node {name}: cannot reach worker at {place}: {exc}") from exc
                except Exception as exc:
                    raise StartupError(f"node {name}: remote load on {place} failed: {exc}") from exc
                rt = NodeRuntime(node, place, proxy, None, chain, ctx_channels)
            else:
                try:
                    handle = registry.load_model(node.model, node.backend, node.config)
                except Exception as exc:
                    raise StartupError(f"node {name}: cannot load model: {exc}") from exc
                rt = NodeRuntime(node, place, handle, registry, chain, ctx_channels)
            runtimes.append(rt)
            if bus is not None:
                for ch in node.outputs():
                    bus.claim(ch, node.name)
    except BaseException:
        for rt in runtimes:
            rt.close()
        raise
    return runtimes


@dataclass
class NodeReport:
    placement: str
    messages_in: int
    messages_out: int
    errors: int
    failed: bool


@dataclass
class RunReport:
    nodes: dict[str, NodeReport] = field(default_factory=dict)
    sources: dict[str, int] = field(default_factory=dict)
    sinks: dict[str, int] = field(default_factory=dict)
    channels: dict[str, int] = field(default_factory=dict)
    stopped_by: str = "exhausted"
    wall_time_s: float = 0.0
    telemetry_trace: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not any(n.failed for n in self.nodes.values())

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            del d["wall_time_s"]
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)


def _node_loop(rt: NodeRuntime, sub, bus: Bus, stop: threading.Event) -> None:
    try:
        while not stop.is_set():
            msg = sub.get(timeout=0.1)
            if msg is None:
                if sub.ended or bus._shutdown:
                    break
                continue
            rt.messages_in += 1
            if rt.failed:
                rt.errors += 1
                continue
            ctx = {}
            for c in rt.context_channels:
                latest = bus.latest(c)
                if latest is not None:
                    ctx[c] = latest.payload
            try:
                out = rt.infer([msg.payload], ctx)
                if rt.spec.publish_raw is not None:
                    bus.publish(rt.spec.publish_raw, out, producer=rt.name)
                rt.chain.run(out, bus, trigger=msg.payload, ctx=ctx)
                rt.messages_out += 1
            except BusClosed:
                break
            except WorkerUnavailable as exc:
                rt.errors += 1
                rt.failed = True
                rt.last_error = str(exc)
                logger.error("%s", exc)
            except Exception as exc:
                rt.errors += 1
                rt.last_error = str(exc)
                logger.warning("node %s: dropped message %s#%d: %s", rt.name, msg.channel, msg.seq, exc)
    finally:
        sub.close()
        if not bus._shutdown:
            for ch in rt.spec.outputs():
                bus.close_channel(ch)


class Pipeline:
    """A runnable pipeline.  Every :meth:`run` uses a fresh bus.

    ``placement`` overrides the pipeline's placements (values may be strings
    such as ``"edge://127.0.0.1:7070"``).  With ``record=True`` the bus of the
    last run keeps every message, see :attr:`bus`.
    """

    def __init__(self, spec: PipelineSpec, backends: Optional[BackendRegistry] = None,
                 placement: Optional[Mapping[str, Union[Placement, str]]] = None,
                 record: bool = False, capacity: int = 64,
                 attempts: int = RETRY_ATTEMPTS, backoff: float = RETRY_BACKOFF_S):
        overrides = {}
        names = {n.name for n in spec.nodes}
        for node, target in (placement or {}).items():
            if node not in names:
                raise KeyError(f"placement override for unknown node {node!r}")
            overrides[node] = target if isinstance(target, Placement) else parse_placement(target)
        self.spec = spec.with_placement(overrides) if overrides else spec
        self.backends = backends or BACKENDS
        self.record = record
        self.capacity = capacity
        self.attempts = attempts
        self.backoff = backoff
        self.bus: Optional[Bus] = None
        self.sinks: dict[str, _adapters.AdapterHandle] = {}
        self.runtimes: list[NodeRuntime] = []

    def sink(self, channel: str):
        """The adapter object of the sink on *channel* (e.g. a collect sink)."""
        return self.sinks[channel].adapter

    def run(self, duration: Optional[float] = None) -> RunReport:
        """Run until sources are exhausted and drained, or *duration* seconds pass."""
        spec = self.spec
        t0 = time.monotonic()
        bus = self.bus = Bus(spec.channels, capacity=self.capacity, record=self.record)
        for s in spec.sources:
            bus.claim(s.channel, f"source:{s.channel}")
        self.runtimes = build_runtime(spec, ModelRegistry(self.backends), bus,
                                      attempts=self.attempts, backoff=self.backoff)
        stop = threading.Event()
        threads: list[threading.Thread] = []
        source_handles: list[_adapters.AdapterHandle] = []
        source_counts = {s.channel: 0 for s in spec.sources}
        try:
            sources = [
                (s, _adapters.make_adapter(s.adapter, "source", s.params, bus.kind(s.channel)))
                for s in spec.sources
            ]
            subs = [(rt, bus.subscribe(rt.spec.trigger)) for rt in self.runtimes]
            self.sinks = {}
            for s in spec.sinks:
                adapter = _adapters.make_adapter(s.adapter, "sink", s.params, bus.kind(s.channel))
                self.sinks[s.channel] = _adapters.run_sink(adapter, s.channel, bus)
            for rt, sub in subs:
                t = threading.Thread(target=_node_loop, args=(rt, sub, bus, stop),
                                     name=f"node {rt.name}", daemon=True)
                t.start()
                threads.append(t)

            if duration is not None and duration <= 0:
                stop.set()
            elif spec.schedule:
                t = threading.Thread(target=self._sequence, args=(sources, bus, stop, source_counts),
                                     name="sequencer", daemon=True)
                t.start()
                threads.append(t)
            else:
                for s, adapter in sources:
                    source_handles.append(_adapters.run_source(adapter, s.channel, bus))

            deadline = None if duration is None else t0 + duration
            waiting = threads + [h._thread for h in source_handles] + [
                h._thread for h in self.sinks.values() if h._thread is not None]
            stopped_by = "exhausted"
            for t in waiting:
                while t.is_alive():
                    if deadline is not None and time.monotonic() >= deadline:
                        stopped_by = "duration"
                        break
                    t.join(0.05 if deadline is None else max(0.0, min(0.05, deadline - time.monotonic())))
                if stopped_by == "duration":
                    break
            if duration is not None and duration <= 0:
                stopped_by = "duration"
        finally:
            stop.set()
            for h in source_handles:
                h.stop()
            for h in self.sinks.values():
                h.stop()
            bus.shutdown()
            for t in threads:
                t.join(2)
            for h in list(self.sinks.values()) + source_handles:
                h.join(2)
            for rt in self.runtimes:
                rt.close()

        for h in source_handles:
            source_counts[h.channel] = h.count
        return RunReport(
            nodes={rt.name: NodeReport(str(rt.placement), rt.messages_in, rt.messages_out,
                                       rt.errors, rt.failed) for rt in self.runtimes},
            sources=source_counts,
            sinks={ch: h.count for ch, h in self.sinks.items()},
            channels={ch: bus.published(ch) for ch in bus.channels},
            stopped_by=stopped_by,
            wall_time_s=time.monotonic() - t0,
        )

    def _sequence(self, sources, bus: Bus, stop: threading.Event, counts: dict) -> None:
        iters = {s.channel: iter(adapter.items()) for s, adapter in sources}
        order = list(self.spec.schedule)
        # leftovers drain afterwards, one source at a time in declaration order
        try:
            for ch in order + [None]:
                pending = [ch] if ch is not None else [s.channel for s, _ in sources]
                for name in pending:
                    while not stop.is_set():
                        try:
                            payload = next(iters[name])
                        except StopIteration:
                            if ch is not None:
                                logger.warning("schedule asks for more items than source %s has", name)
                            break
                        bus.publish(name, payload, producer=f"source:{name}")
                        counts[name] += 1
                        bus.wait_idle()
                        if ch is not None:
                            break
        except BusClosed:
            return
        except Exception as exc:
            logger.error("source failed: %s", exc)
        finally:
            if not bus._shutdown:
                for s, _ in sources:
                    bus.close_channel(s.channel)


def run(spec: PipelineSpec, duration: Optional[float] = None, **kwargs) -> RunReport:
    return Pipeline(spec, **kwargs).run(duration)


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def graph_dot(spec: PipelineSpec) -> str:
    """Deterministic DOT digraph; channels are ellipses, nodes are boxes."""
    lines = ["digraph pipeline {"]
    for c in spec.channels:
        lines.append(f"  {_q('ch:' + c.name)} [shape=ellipse, label={_q(c.name)}];")
    order, _ = _graph(spec)
    names = order if order is not None else sorted(n.name for n in spec.nodes)
    for name in names:
        lines.append(f"  {_q('node:' + name)} [shape=box, label={_q(name)}];")
    for name in names:
        n = spec.node(name)
        for ch in n.inputs:
            lines.append(f"  {_q('ch:' + ch)} -> {_q('node:' + name)};")
        for ch in n.outputs():
            lines.append(f"  {_q('node:' + name)} -> {_q('ch:' + ch)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
