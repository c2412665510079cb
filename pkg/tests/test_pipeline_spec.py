import itertools

import pytest
import yaml
from hypothesis import given, settings

from oricf import demo_spec_text
from oricf.pipeline import (
    ONBOARD, Placement, SpecError, parse_placement, parse_spec, serialize_spec, validate_graph,
)

from oracles import nodes_on_cycles
from specgen import CYCLE_SPEC, KIND_MISMATCH_SPEC, MINIMAL_SPEC, spec_texts


def diags(text):
    with pytest.raises(SpecError) as info:
        parse_spec(text)
    return info.value.diagnostics


def codes(text):
    return sorted(d.code for d in diags(text))


def test_minimal_spec():
    spec = parse_spec(MINIMAL_SPEC)
    assert spec.nodes == () and len(spec.channels) == 1


def test_demo_spec(demo_spec):
    assert len(demo_spec.nodes) == 2 and len(demo_spec.channels) == 5
    assert demo_spec.node("person_detector").post[0].publish == "/human_counter"


def test_cycle_single_diagnostic_naming_both_nodes():
    ds = diags(CYCLE_SPEC)
    cycles = [d for d in ds if d.code == "cycle"]
    assert len(cycles) == 1
    assert "A" in cycles[0].message.split() and "B" in cycles[0].message.split()
    assert nodes_on_cycles([("A", "B"), ("B", "A")], ["A", "B"]) == {"A", "B"}


def test_cycle_diagnostic_lists_nodes_on_one_cycle():
    # a -> b -> c -> a plus a tail d hanging off c
    text = """\
version: 1
channels:
  - {name: ab, kind: text}
  - {name: bc, kind: text}
  - {name: ca, kind: text}
  - {name: cd, kind: text}
nodes:
  - {name: a, model: m, backend: identity, inputs: [ca], publish_raw: ab}
  - {name: b, model: m, backend: identity, inputs: [ab], publish_raw: bc}
  - {name: c, model: m, backend: identity, inputs: [bc], publish_raw: ca,
     post: [{op: to_text, params: {}, publish: cd}]}
  - {name: d, model: m, backend: identity, inputs: [cd]}
"""
    (cycle,) = [d for d in diags(text) if d.code == "cycle"]
    named = set(cycle.message.split(": ")[1].split(" -> "))
    edges = [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")]
    assert named == nodes_on_cycles(edges, ["a", "b", "c", "d"])


def test_kind_mismatch():
    (d,) = diags(KIND_MISMATCH_SPEC)
    assert d.code == "kind-mismatch" and d.path == "nodes[0].inputs[0]"


def test_unknown_field_rejected():
    ds = diags(MINIMAL_SPEC + "colour: blue\n")
    assert [(d.path, d.code) for d in ds] == [("colour", "unknown-field")]


def test_unsupported_version():
    assert codes(MINIMAL_SPEC.replace("version: 1", "version: 2")) == ["version"]


def test_syntax_error():
    assert codes("version: [1\n") == ["syntax"]


def test_duplicate_key_rejected():
    (d,) = diags(MINIMAL_SPEC + "version: 1\n")
    assert d.code == "syntax" and "duplicate key 'version'" in d.message


def test_orphan_channel():
    text = """\
version: 1
channels:
  - {name: /query, kind: text}
  - {name: /answer, kind: text}
nodes:
  - {name: n, model: m, backend: identity, inputs: [/query], publish_raw: /answer}
"""
    (d,) = diags(text)
    assert d.code == "orphan-channel" and d.path == "channels[0]"


def test_multiple_producers():
    text = MINIMAL_SPEC.replace("sinks:", """\
nodes:
  - {name: n, model: m, backend: identity, inputs: [/query], publish_raw: /query}
sinks:""")
    assert "multiple-producers" in codes(text)


def test_placement_parsing():
    assert parse_placement("onboard") is ONBOARD
    assert parse_placement("edge://h:7070") == Placement("edge", "h", 7070)
    assert parse_placement("edge://[::1]:9") == Placement("edge", "::1", 9)
    for bad in ["edge://h", "edge://h:0", "edge://h:70000", "cloud", "edge://:1"]:
        with pytest.raises(ValueError):
            parse_placement(bad)


def test_bad_placement_and_unknown_node(demo_text):
    text = demo_text.replace("answer_llm: onboard", "answer_llm: edge://h:99999\n  ghost: onboard")
    ds = diags(text)
    assert {(d.path, d.code) for d in ds} == {("placement.answer_llm", "placement"),
                                              ("placement.ghost", "placement")}


def test_diagnostics_completeness():
    injected = [
        lambda t: t.replace("kind: scalar", "kind: number"),
        lambda t: t.replace("backend: template-llm", "backend: gpt"),
        lambda t: t.replace("adapter: stdout-text", "adapter: speaker"),
        lambda t: t.replace("    device: cpu\n    labels", "    device: cpu\n    colour: red\n    labels"),
        lambda t: t.replace("threshold: 200", "threshold: 900"),
    ]
    base = demo_spec_text()
    for k in range(1, len(injected) + 1):
        for combo in itertools.combinations(injected, k):
            text = base
            for f in combo:
                text = f(text)
            assert len(diags(text)) >= k


def test_diagnostics_deterministic():
    text = CYCLE_SPEC + "colour: red\n"
    assert [str(d) for d in diags(text)] == [str(d) for d in diags(text)]


def test_validate_graph_demo(demo_spec):
    assert validate_graph(demo_spec) == ["person_detector", "answer_llm"]


def test_validate_graph_empty():
    assert validate_graph(parse_spec(MINIMAL_SPEC)) == []


def test_validate_graph_tie_break():
    text = """\
version: 1
channels:
  - {name: p, kind: text}
  - {name: q, kind: text}
nodes:
  - {name: b, model: m, backend: identity, inputs: [p]}
  - {name: a, model: m, backend: identity, inputs: [q]}
sources:
  - {channel: p, adapter: text-script, params: {lines: []}}
  - {channel: q, adapter: text-script, params: {lines: []}}
"""
    assert validate_graph(parse_spec(text)) == ["a", "b"]


def test_serialize_demo(demo_spec):
    text = serialize_spec(demo_spec)
    assert "camera/image_raw" in text and "/human_counter" in text
    assert parse_spec(text) == demo_spec
    assert list(yaml.safe_load(text)) == ["version", "channels", "nodes", "sources", "sinks",
                                          "placement", "schedule"]


def test_serialize_minimal_round_trip():
    spec = parse_spec(MINIMAL_SPEC)
    assert parse_spec(serialize_spec(spec)) == spec


def test_serialize_edge_placement(demo_spec):
    spec = demo_spec.with_placement({"person_detector": parse_placement("edge://h:7070")})
    text = serialize_spec(spec)
    assert "edge://h:7070" in text
    assert parse_spec(text) == spec


def _respects_edges(spec, order):
    producer = {}
    for n in spec.nodes:
        for ch in n.outputs():
            producer[ch] = n.name
    pos = {name: i for i, name in enumerate(order)}
    for n in spec.nodes:
        for ch in n.inputs:
            if ch in producer and pos[producer[ch]] >= pos[n.name]:
                return False
    return True


@settings(max_examples=100, deadline=None)
@given(spec_texts())
def test_random_specs_round_trip_and_order(text):
    spec = parse_spec(text)
    assert parse_spec(serialize_spec(spec)) == spec
    assert serialize_spec(parse_spec(serialize_spec(spec))) == serialize_spec(spec)
    order = validate_graph(spec)
    assert sorted(order) == sorted(n.name for n in spec.nodes)
    assert _respects_edges(spec, order)
