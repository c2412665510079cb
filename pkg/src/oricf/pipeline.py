"""Declarative pipeline specs: schema, strict parser, graph check, serializer.

Parsing never stops at the first problem.  Every violation becomes a
:class:`Diagnostic` with a path such as ``nodes[0].inputs[1]``, and all of
them are raised together in a :class:`SpecError`.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Any, ClassVar, Mapping, Optional

import yaml

from . import adapters as _adapters
from .inference import BACKENDS, BackendRegistry, UnknownBackend
from .payloads import KINDS, kind_accepts
from .postproc import PostStep, check_params, publish_compatible, step_output_kind
from .template import TemplateError

SCHEMA_VERSION = 1

TOP_KEYS = ("version", "channels", "nodes", "sources", "sinks", "placement", "schedule")
CHANNEL_KEYS = ("name", "kind")
NODE_KEYS = ("name", "model", "backend", "device", "labels", "config", "inputs", "publish_raw", "post")
STEP_KEYS = ("op", "params", "publish")
ADAPTER_KEYS = ("channel", "adapter", "params")


@dataclass(frozen=True, order=True)
class Diagnostic:
    path: str
    code: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message} [{self.code}]"


class SpecError(ValueError):
    """A pipeline spec failed to parse or validate."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# -- schema types ---------------------------------------------------------------


@dataclass(frozen=True)
class ChannelDecl:
    name: str
    kind: str


@dataclass(frozen=True)
class Placement:
    """``onboard`` or ``edge://host:port``."""

    target: str = "onboard"
    host: Optional[str] = None
    port: Optional[int] = None

    @property
    def is_edge(self) -> bool:
        return self.target == "edge"

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    def __str__(self):
        if self.target == "onboard":
            return "onboard"
        host = f"[{self.host}]" if ":" in self.host else self.host
        return f"edge://{host}:{self.port}"


ONBOARD = Placement()

_HOSTPORT = re.compile(r"^(?:\[(?P<v6>[^\]]+)\]|(?P<host>[^:\s\[\]/]+)):(?P<port>\d{1,5})$")


def parse_hostport(text: str) -> tuple[str, int]:
    m = _HOSTPORT.match(text or "")
    if not m:
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    port = int(m["port"])
    if not 1 <= port <= 65535:
        raise ValueError(f"port {port} out of range 1..65535")
    return m["v6"] or m["host"], port


def parse_placement(text: str) -> Placement:
    if text == "onboard":
        return ONBOARD
    if isinstance(text, str) and text.startswith("edge://"):
        host, port = parse_hostport(text[len("edge://"):])
        return Placement("edge", host, port)
    raise ValueError(f"placement must be 'onboard' or 'edge://HOST:PORT', got {text!r}")


@dataclass(frozen=True)
class NodeSpec:
    name: str
    model: str
    backend: str
    inputs: tuple[str, ...]
    device: str = "cpu"
    labels: tuple[str, ...] = ()
    config: Mapping[str, Any] = field(default_factory=dict)
    publish_raw: Optional[str] = None
    post: tuple[PostStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "post", tuple(self.post))

    @property
    def trigger(self) -> str:
        return self.inputs[0]

    @property
    def context_inputs(self) -> tuple[str, ...]:
        return self.inputs[1:]

    def outputs(self) -> list[str]:
        outs = [self.publish_raw] if self.publish_raw else []
        return outs + [s.publish for s in self.post if s.publish]


@dataclass(frozen=True)
class SourceDecl:
    channel: str
    adapter: str
    params: Mapping[str, Any] = field(default_factory=dict)

    role: ClassVar[str] = "source"


@dataclass(frozen=True)
class SinkDecl:
    channel: str
    adapter: str
    params: Mapping[str, Any] = field(default_factory=dict)

    role: ClassVar[str] = "sink"


@dataclass(frozen=True)
class PipelineSpec:
    version: int = SCHEMA_VERSION
    channels: tuple[ChannelDecl, ...] = ()
    nodes: tuple[NodeSpec, ...] = ()
    sources: tuple[SourceDecl, ...] = ()
    sinks: tuple[SinkDecl, ...] = ()
    placement: Mapping[str, Placement] = field(default_factory=dict)
    schedule: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("channels", "nodes", "sources", "sinks", "schedule"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "placement", dict(self.placement))

    def channel_kinds(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.channels}

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def placement_of(self, node: str) -> Placement:
        return self.placement.get(node, ONBOARD)

    def with_placement(self, overrides: Mapping[str, Placement]) -> "PipelineSpec":
        placement = dict(self.placement)
        placement.update(overrides)
        return PipelineSpec(self.version, self.channels, self.nodes, self.sources,
                            self.sinks, placement, self.schedule)


# -- YAML loading ---------------------------------------------------------------


class _StrictLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        try:
            dup = key in seen
        except TypeError:
            continue
        if dup:
            raise yaml.constructor.ConstructorError(
                "while constructing a mapping", node.start_mark,
                f"found duplicate key {key!r}", key_node.start_mark,
            )
        seen.add(key)
    return loader.construct_mapping(node, deep=deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


# -- parsing --------------------------------------------------------------------


class _Collector:
    def __init__(self):
        self.diags: list[Diagnostic] = []

    def add(self, path: str, code: str, message: str) -> None:
        self.diags.append(Diagnostic(path, code, message))

    def keys(self, obj, path: str, allowed, required=()) -> bool:
        if not isinstance(obj, Mapping):
            self.add(path or "<root>", "type", "expected a mapping")
            return False
        for k in obj:
            if k not in allowed:
                self.add(f"{path}.{k}" if path else str(k), "unknown-field", f"unknown field {k!r}")
        for k in required:
            if k not in obj:
                self.add(path or "<root>", "missing-field", f"missing required field {k!r}")
        return True

    def string(self, obj, key, path, required=True, default=None) -> Optional[str]:
        if key not in obj:
            return default
        v = obj[key]
        if not isinstance(v, str) or not v:
            self.add(f"{path}.{key}", "type", f"{key} must be a nonempty string")
            return None
        return v

    def str_list(self, obj, key, path, default=()) -> Optional[list[str]]:
        if key not in obj:
            return list(default)
        v = obj[key]
        if not isinstance(v, list):
            self.add(f"{path}.{key}", "type", f"{key} must be a list")
            return None
        ok = True
        for i, item in enumerate(v):
            if not isinstance(item, str) or not item:
                self.add(f"{path}.{key}[{i}]", "type", "expected a nonempty string")
                ok = False
        return v if ok else None

    def mapping(self, obj, key, path) -> Optional[dict]:
        if key not in obj or obj[key] is None:
            return {}
        v = obj[key]
        if not isinstance(v, Mapping):
            self.add(f"{path}.{key}", "type", f"{key} must be a mapping")
            return None
        return dict(v)

    def seq(self, obj, key) -> list:
        v = obj.get(key)
        if v is None:
            return []
        if not isinstance(v, list):
            self.add(key, "type", f"{key} must be a list")
            return []
        return v


def parse_spec(yaml_text: str, backends: Optional[BackendRegistry] = None) -> PipelineSpec:
    """Parse and fully validate a pipeline spec.

    Raises :class:`SpecError` carrying every diagnostic found.
    """
    backends = backends or BACKENDS
    if isinstance(yaml_text, bytes):
        try:
            yaml_text = yaml_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SpecError([Diagnostic("<root>", "syntax", f"not UTF-8: {exc}")]) from None
    try:
        data = yaml.load(yaml_text, Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        raise SpecError([Diagnostic("<root>", "syntax", " ".join(str(exc).split()))]) from None

    col = _Collector()
    if not col.keys(data, "", TOP_KEYS, required=("version", "channels")):
        raise SpecError(col.diags)

    version = data.get("version")
    if "version" in data and (isinstance(version, bool) or version != SCHEMA_VERSION):
        col.add("version", "version", f"unsupported schema version {version!r} (supported: 1)")

    channels = []
    for i, raw in enumerate(col.seq(data, "channels")):
        p = f"channels[{i}]"
        if not col.keys(raw, p, CHANNEL_KEYS, required=CHANNEL_KEYS):
            continue
        name, kind = raw.get("name"), raw.get("kind")
        bad = False
        if not isinstance(name, str) or not name or any(ch.isspace() for ch in name):
            col.add(f"{p}.name", "type", "channel name must be a nonempty string without whitespace")
            bad = True
        if kind not in KINDS:
            col.add(f"{p}.kind", "type", f"kind must be one of {', '.join(KINDS)}")
            bad = True
        if not bad:
            channels.append(ChannelDecl(name, kind))

    nodes = []
    for i, raw in enumerate(col.seq(data, "nodes")):
        node = _parse_node(col, raw, f"nodes[{i}]")
        if node is not None:
            nodes.append(node)

    sources = [d for i, raw in enumerate(col.seq(data, "sources"))
               if (d := _parse_adapter(col, raw, f"sources[{i}]", SourceDecl)) is not None]
    sinks = [d for i, raw in enumerate(col.seq(data, "sinks"))
             if (d := _parse_adapter(col, raw, f"sinks[{i}]", SinkDecl)) is not None]

    placement: dict[str, Placement] = {}
    raw_placement = data.get("placement")
    if raw_placement is not None:
        if not isinstance(raw_placement, Mapping):
            col.add("placement", "type", "placement must be a mapping")
        else:
            for node_name, target in raw_placement.items():
                try:
                    placement[node_name] = parse_placement(target)
                except ValueError as exc:
                    col.add(f"placement.{node_name}", "placement", str(exc))

    schedule = col.seq(data, "schedule")
    for i, ch in enumerate(schedule):
        if not isinstance(ch, str):
            col.add(f"schedule[{i}]", "type", "expected a source channel name")
    schedule = [ch for ch in schedule if isinstance(ch, str)]

    spec = PipelineSpec(SCHEMA_VERSION, channels, nodes, sources, sinks, placement, schedule)
    col.diags.extend(_semantic_diagnostics(spec, backends, placement_keys=list(placement)))
    if col.diags:
        raise SpecError(col.diags)
    return spec


def _parse_node(col: _Collector, raw, p: str) -> Optional[NodeSpec]:
    if not col.keys(raw, p, NODE_KEYS, required=("name", "model", "backend", "inputs")):
        return None
    before = len(col.diags)
    name = col.string(raw, "name", p)
    model = col.string(raw, "model", p)
    backend = col.string(raw, "backend", p)
    device = col.string(raw, "device", p, default="cpu")
    labels = col.str_list(raw, "labels", p)
    config = col.mapping(raw, "config", p)
    inputs = col.str_list(raw, "inputs", p)
    if inputs is not None and "inputs" in raw and not inputs:
        col.add(f"{p}.inputs", "type", "inputs must list at least one channel")
    publish_raw = col.string(raw, "publish_raw", p) if raw.get("publish_raw") is not None else None
    steps = []
    raw_post = raw.get("post")
    if raw_post is not None and not isinstance(raw_post, list):
        col.add(f"{p}.post", "type", "post must be a list")
        raw_post = []
    for j, rs in enumerate(raw_post or []):
        sp = f"{p}.post[{j}]"
        if not col.keys(rs, sp, STEP_KEYS, required=("op",)):
            continue
        op = rs.get("op")
        params = col.mapping(rs, "params", sp)
        publish = col.string(rs, "publish", sp) if rs.get("publish") is not None else None
        if params is None:
            continue
        problems = check_params(op, params)
        for key, msg in problems:
            col.add(f"{sp}.{'op' if key == 'op' else 'params.' + str(key)}", "invalid-params", msg)
        if not problems:
            steps.append(PostStep(op, params, publish))
    if len(col.diags) != before:
        return None
    return NodeSpec(name, model, backend, tuple(inputs), device, tuple(labels), config,
                    publish_raw, tuple(steps))


def _parse_adapter(col: _Collector, raw, p: str, cls):
    if not col.keys(raw, p, ADAPTER_KEYS, required=("channel", "adapter")):
        return None
    before = len(col.diags)
    channel = col.string(raw, "channel", p)
    adapter = col.string(raw, "adapter", p)
    params = col.mapping(raw, "params", p)
    if len(col.diags) != before:
        return None
    return cls(channel, adapter, params)


# -- semantic checks ------------------------------------------------------------


def _semantic_diagnostics(spec: PipelineSpec, backends: BackendRegistry, placement_keys=None):
    col = _Collector()
    kinds: dict[str, str] = {}
    for i, ch in enumerate(spec.channels):
        if ch.name in kinds:
            col.add(f"channels[{i}].name", "duplicate", f"duplicate channel {ch.name!r}")
        else:
            kinds[ch.name] = ch.kind

    node_names: dict[str, int] = {}
    for i, n in enumerate(spec.nodes):
        if n.name in node_names:
            col.add(f"nodes[{i}].name", "duplicate", f"duplicate node {n.name!r}")
        else:
            node_names[n.name] = i

    def declared(ch: str, path: str) -> bool:
        if ch not in kinds:
            col.add(path, "undeclared-channel", f"channel {ch!r} is not declared")
            return False
        return True

    producers: dict[str, list[str]] = {}

    for i, s in enumerate(spec.sources):
        p = f"sources[{i}]"
        _check_adapter(col, s, p, kinds, declared)
        producers.setdefault(s.channel, []).append(p)
    for i, s in enumerate(spec.sinks):
        _check_adapter(col, s, f"sinks[{i}]", kinds, declared)

    for i, n in enumerate(spec.nodes):
        p = f"nodes[{i}]"
        try:
            cls = backends.get(n.backend)
        except UnknownBackend:
            col.add(f"{p}.backend", "unknown-backend", f"unknown backend {n.backend!r}")
            cls = None
        desc = cls.descriptor if cls else None

        for j, ch in enumerate(n.inputs):
            declared(ch, f"{p}.inputs[{j}]")
        if desc and n.inputs and n.inputs[0] in kinds:
            if not kind_accepts(desc.input_kinds, kinds[n.inputs[0]]):
                col.add(f"{p}.inputs[0]", "kind-mismatch",
                        f"backend {n.backend} accepts {list(desc.input_kinds)}, "
                        f"channel {n.inputs[0]!r} carries {kinds[n.inputs[0]]}")
        has_format = any(s.op == "format" for s in n.post)
        if desc and len(n.inputs) > 1 and not (desc.context_channels_allowed or has_format):
            col.add(f"{p}.inputs", "kind-mismatch",
                    f"backend {n.backend} takes one input and reads no context channels")

        referenced: list[tuple[str, str]] = []
        if cls is not None:
            problems = cls.check_config(n.config)
            for msg in problems:
                col.add(f"{p}.config", "invalid-params", msg)
            if not problems:
                try:
                    referenced += [(c, f"{p}.config") for c in cls.context_channels(n.config)]
                except (TemplateError, KeyError) as exc:  # pragma: no cover
                    col.add(f"{p}.config", "invalid-params", str(exc))
        for j, step in enumerate(n.post):
            referenced += [(c, f"{p}.post[{j}].params.template") for c in step.channels()]
        for ch, path in referenced:
            if ch not in n.inputs:
                col.add(path, "undeclared-channel",
                        f"context channel {ch!r} must be listed in {p}.inputs")

        out_kind = desc.output_kind if desc else None
        if n.publish_raw is not None:
            producers.setdefault(n.publish_raw, []).append(f"{p}.publish_raw")
            if declared(n.publish_raw, f"{p}.publish_raw") and out_kind:
                if not publish_compatible(out_kind, kinds[n.publish_raw]):
                    col.add(f"{p}.publish_raw", "kind-mismatch",
                            f"backend {n.backend} produces {out_kind}, "
                            f"channel {n.publish_raw!r} carries {kinds[n.publish_raw]}")
        trigger_kind = kinds.get(n.inputs[0]) if n.inputs else None
        cur = out_kind
        for j, step in enumerate(n.post):
            sp = f"{p}.post[{j}]"
            if cur is not None:
                nxt = step_output_kind(step.op, cur)
                if nxt is None:
                    col.add(f"{sp}.op", "kind-mismatch", f"{step.op} cannot take {cur} input")
                elif step.op == "annotate" and trigger_kind not in (None, "image"):
                    col.add(f"{sp}.op", "kind-mismatch", "annotate needs the node to consume an image")
                cur = nxt
            if step.publish is not None:
                producers.setdefault(step.publish, []).append(f"{sp}.publish")
                if declared(step.publish, f"{sp}.publish") and cur is not None:
                    if not publish_compatible(cur, kinds[step.publish]):
                        col.add(f"{sp}.publish", "kind-mismatch",
                                f"step produces {cur}, channel {step.publish!r} carries {kinds[step.publish]}")

    for ch in sorted(producers):
        if len(producers[ch]) > 1:
            col.add(producers[ch][1], "multiple-producers",
                    f"channel {ch!r} already produced by {producers[ch][0]}")

    for key in placement_keys if placement_keys is not None else spec.placement:
        if key not in node_names:
            col.add(f"placement.{key}", "placement", f"placement for unknown node {key!r}")

    source_channels = {s.channel for s in spec.sources}
    for i, ch in enumerate(spec.schedule):
        if ch not in source_channels:
            col.add(f"schedule[{i}]", "undeclared-channel", f"{ch!r} is not a source channel")

    _, graph_diags = _graph(spec, kinds)
    col.diags.extend(graph_diags)
    return col.diags


def _check_adapter(col, decl, p, kinds, declared):
    try:
        info = _adapters.adapter_info(decl.adapter, decl.role)
    except _adapters.AdapterError as exc:
        col.add(f"{p}.adapter", "unknown-adapter", str(exc))
        info = None
    if info is not None:
        for key, msg in info.check(decl.params):
            col.add(f"{p}.params.{key}" if key != "params" else f"{p}.params", "invalid-params", msg)
    if declared(decl.channel, f"{p}.channel") and info is not None:
        if kinds[decl.channel] not in info.kinds:
            col.add(f"{p}.channel", "kind-mismatch",
                    f"{decl.role} adapter {decl.adapter} handles {list(info.kinds)}, "
                    f"channel {decl.channel!r} carries {kinds[decl.channel]}")


# -- graph ----------------------------------------------------------------------


def _graph(spec: PipelineSpec, kinds: Optional[Mapping[str, str]] = None):
    """Topological order of node names plus cycle/orphan diagnostics."""
    kinds = kinds if kinds is not None else spec.channel_kinds()
    names = []
    for n in spec.nodes:
        if n.name not in names:
            names.append(n.name)
    producer_node: dict[str, str] = {}
    produced = {s.channel for s in spec.sources}
    for n in spec.nodes:
        for ch in n.outputs():
            produced.add(ch)
            producer_node.setdefault(ch, n.name)

    succ: dict[str, set[str]] = {name: set() for name in names}
    for n in spec.nodes:
        for ch in n.inputs:
            src = producer_node.get(ch)
            if src is not None:
                succ[src].add(n.name)

    diags: list[Diagnostic] = []
    index = {c.name: i for i, c in reversed(list(enumerate(spec.channels)))}
    consumed = [ch for n in spec.nodes for ch in n.inputs] + [s.channel for s in spec.sinks]
    reported = set()
    for ch in consumed:
        if ch in kinds and ch not in produced and ch not in reported:
            reported.add(ch)
            diags.append(Diagnostic(f"channels[{index[ch]}]", "orphan-channel",
                                    f"channel {ch!r} is consumed but never produced"))

    indeg = {name: 0 for name in names}
    for name in names:
        for t in succ[name]:
            indeg[t] += 1
    heap = [name for name in names if indeg[name] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        name = heapq.heappop(heap)
        order.append(name)
        for t in sorted(succ[name]):
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(heap, t)

    if len(order) != len(names):
        remaining = sorted(set(names) - set(order))
        for cycle in _cycles(remaining, succ):
            diags.append(Diagnostic("nodes", "cycle", "cycle between nodes: " + " -> ".join(cycle + [cycle[0]])))
        return None, diags
    return order, diags


def _cycles(remaining: list[str], succ: Mapping[str, set[str]]) -> list[list[str]]:
    """One cycle per strongly connected component among *remaining*."""
    rem = set(remaining)
    comps = _sccs(remaining, {k: sorted(v & rem) for k, v in succ.items() if k in rem})
    cycles = []
    for comp in comps:
        start = min(comp)
        if len(comp) == 1 and start not in succ[start]:
            continue
        cset = set(comp)
        # shortest path back to start inside the component
        prev = {start: None}
        frontier = [start]
        found = None
        while frontier and found is None:
            nxt = []
            for u in frontier:
                for v in sorted(succ[u] & cset):
                    if v == start:
                        found = u
                        break
                    if v not in prev:
                        prev[v] = u
                        nxt.append(v)
                if found is not None:
                    break
            frontier = nxt
        path = []
        u = found
        while u is not None:
            path.append(u)
            u = prev[u]
        cycles.append(list(reversed(path)))
    return sorted(cycles)


def _sccs(nodes: list[str], succ: Mapping[str, list[str]]) -> list[list[str]]:
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    on: set[str] = set()
    out: list[list[str]] = []
    counter = [0]

    def visit(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        for w in succ.get(v, ()):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(sorted(comp))

    for v in nodes:
        if v not in index:
            visit(v)
    return out


def validate_graph(spec: PipelineSpec) -> list[str]:
    """Node names ordered so producers precede consumers; ties by name.

    Raises :class:`SpecError` on cycles or orphan channels.
    """
    order, diags = _graph(spec)
    if diags:
        raise SpecError(diags)
    return order


# -- serialization --------------------------------------------------------------


class _Dumper(yaml.SafeDumper):
    pass


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def spec_to_dict(spec: PipelineSpec) -> dict:
    nodes = []
    for n in spec.nodes:
        d = {"name": n.name, "model": n.model, "backend": n.backend, "device": n.device,
             "labels": list(n.labels), "config": _plain(n.config), "inputs": list(n.inputs)}
        if n.publish_raw is not None:
            d["publish_raw"] = n.publish_raw
        post = []
        for s in n.post:
            sd = {"op": s.op, "params": _plain(s.params)}
            if s.publish is not None:
                sd["publish"] = s.publish
            post.append(sd)
        d["post"] = post
        nodes.append(d)
    out = {
        "version": spec.version,
        "channels": [{"name": c.name, "kind": c.kind} for c in spec.channels],
        "nodes": nodes,
        "sources": [{"channel": s.channel, "adapter": s.adapter, "params": _plain(s.params)}
                    for s in spec.sources],
        "sinks": [{"channel": s.channel, "adapter": s.adapter, "params": _plain(s.params)}
                  for s in spec.sinks],
        "placement": {k: str(v) for k, v in spec.placement.items()},
    }
    if spec.schedule:
        out["schedule"] = list(spec.schedule)
    return out


def serialize_spec(spec: PipelineSpec) -> str:
    """Canonical YAML; keys in schema declaration order."""
    return yaml.dump(spec_to_dict(spec), Dumper=_Dumper, sort_keys=False,
                     default_flow_style=False, allow_unicode=True, width=1000)


def load_spec(path) -> PipelineSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())
