import json
import socket
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from oricf import parse_spec
from oricf.inference import ModelRegistry
from oricf.bus import Bus
from oricf.offload import Worker
from oricf.orchestrator import Pipeline, StartupError, build_runtime, graph_dot
from oricf.payloads import Scalar, Text, dumps_line
from oricf.pipeline import parse_placement

from specgen import MINIMAL_SPEC


def collecting(text):
    return text.replace("adapter: stdout-text", "adapter: collect")


@pytest.fixture
def demo_collect(demo_text):
    return parse_spec(collecting(demo_text))


def _closed_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def test_build_runtime_all_local(demo_spec):
    rts = build_runtime(demo_spec, ModelRegistry(), Bus(demo_spec.channels))
    assert [rt.name for rt in rts] == ["person_detector", "answer_llm"]
    assert not any(rt.is_remote for rt in rts)
    assert list(rts[1].context_channels) == ["/human_counter"]


def test_build_runtime_one_remote(demo_spec, edge):
    spec = demo_spec.with_placement({"person_detector": parse_placement(edge)})
    rts = build_runtime(spec, ModelRegistry(), Bus(spec.channels))
    assert [rt.is_remote for rt in rts] == [True, False]
    for rt in rts:
        rt.close()


def test_closed_port_fails_startup_naming_node(demo_spec):
    port = _closed_port()
    spec = demo_spec.with_placement({"answer_llm": parse_placement(f"edge://127.0.0.1:{port}")})
    with pytest.raises(StartupError, match=rf"answer_llm.*127\.0\.0\.1:{port}"):
        Pipeline(spec, backoff=0.01).run()


def test_demo_answer(demo_collect):
    p = Pipeline(demo_collect)
    report = p.run()
    assert p.sink("/answer").received == [Text("I see 2 people.")]
    assert report.ok and report.stopped_by == "exhausted"


def test_demo_stdout(demo_spec, capsys):
    Pipeline(demo_spec).run()
    assert capsys.readouterr().out == "I see 2 people.\n"


def test_no_message_loss(demo_collect):
    p = Pipeline(demo_collect, record=True)
    r = p.run()
    assert r.sources == {"camera/image_raw": 3, "/query": 1}
    assert r.nodes["person_detector"].messages_in == 3 == r.nodes["person_detector"].messages_out
    assert r.channels["/human_counter"] == 3 and r.channels["/detections"] == 3
    assert r.nodes["answer_llm"].messages_in == 1 == r.sinks["/answer"]
    assert [m.payload for m in p.bus.history("/human_counter")] == [Scalar(1), Scalar(2), Scalar(0)]


def test_report_json_stable(demo_collect):
    a = Pipeline(demo_collect).run().to_json(timing=False)
    b = Pipeline(demo_collect).run().to_json(timing=False)
    assert a == b
    assert "wall_time_s" not in json.loads(a)
    assert "wall_time_s" in Pipeline(demo_collect).run().to_dict()


def test_file_passthrough(tmp_path):
    src = tmp_path / "in.ndjson"
    src.write_text("".join(dumps_line(p) + "\n" for p in [Text("a"), Text("b c"), Text("")]))
    out = tmp_path / "out.ndjson"
    spec = parse_spec(f"""\
version: 1
channels:
  - {{name: t, kind: text}}
sources:
  - {{channel: t, adapter: file, params: {{path: "{src}"}}}}
sinks:
  - {{channel: t, adapter: file, params: {{path: "{out}"}}}}
""")
    Pipeline(spec).run()
    assert out.read_bytes() == src.read_bytes()


def test_duration_zero_stops_immediately(demo_collect):
    t0 = time.monotonic()
    r = Pipeline(demo_collect).run(duration=0)
    assert r.stopped_by == "duration" and time.monotonic() - t0 < 2
    assert r.sinks["/answer"] == 0


def test_duration_bounds_free_running_source(demo_text):
    text = collecting(demo_text).replace("schedule:", "# schedule:").replace(
        "lines: [\"How many people do you see?\"]", "lines: [\"q\"]\n      interval_ms: 50")
    text = text.replace("frames: 3", "frames: 1000\n      interval_ms: 20")
    r = Pipeline(parse_spec(text)).run(duration=0.5)
    assert r.stopped_by == "duration"
    assert 0 < r.sources["camera/image_raw"] < 1000


def test_placement_transparency(demo_collect, edge):
    base = Pipeline(demo_collect, record=True)
    base.run()
    for placement in ({"person_detector": edge}, {"answer_llm": edge},
                      {"person_detector": edge, "answer_llm": edge}):
        p = Pipeline(demo_collect, placement=placement, record=True)
        r = p.run()
        assert p.sink("/answer").received == base.sink("/answer").received
        for ch in base.bus.channels:
            assert [m.payload for m in p.bus.history(ch)] == [m.payload for m in base.bus.history(ch)]
        assert all(r.nodes[n].placement == edge for n in placement)


def test_unknown_placement_override(demo_collect):
    with pytest.raises(KeyError):
        Pipeline(demo_collect, placement={"ghost": "onboard"})


def test_worker_killed_mid_run_marks_node_failed():
    w = Worker("127.0.0.1", 0).start()
    host, port = w.address
    spec = parse_spec(f"""\
version: 1
channels:
  - {{name: q, kind: text}}
  - {{name: a, kind: text}}
nodes:
  - {{name: echo, model: m, backend: identity, inputs: [q], publish_raw: a}}
sources:
  - {{channel: q, adapter: text-script, params: {{lines: [a, b, c, d, e, f, g, h], interval_ms: 100}}}}
sinks:
  - {{channel: a, adapter: collect}}
placement:
  echo: edge://{host}:{port}
""")
    p = Pipeline(spec, backoff=0.05)
    threading.Timer(0.25, w.stop).start()
    r = p.run(duration=5)
    node = r.nodes["echo"]
    assert node.failed and not r.ok
    assert node.messages_in == 8
    assert node.messages_out + node.errors == 8 and 0 < node.messages_out < 8


def test_node_error_isolation():
    spec = parse_spec("""\
version: 1
channels:
  - {name: au, kind: audio}
  - {name: t, kind: text}
nodes:
  - {name: asr, model: m, backend: token-asr, config: {vocab: [hi]}, inputs: [au], publish_raw: t}
sources:
  - {channel: au, adapter: audio-script, params: {tokens: [0, -1, 0]}}
sinks:
  - {channel: t, adapter: collect}
""")
    p = Pipeline(spec)
    r = p.run()
    assert r.nodes["asr"].errors == 1 and r.nodes["asr"].messages_out == 2
    assert p.sink("t").received == [Text("hi"), Text("hi")]
    assert r.ok


def _sequenced_spec(frames, schedule):
    blocks = [[[8 * (i % 8), 8 * (i // 8)] for i in range(k)] for k in frames]
    queries = sum(1 for s in schedule if s == "q")
    sched = ", ".join("camera" if s == "f" else "/query" for s in schedule)
    return f"""\
version: 1
channels:
  - {{name: camera, kind: image}}
  - {{name: /count, kind: scalar}}
  - {{name: /query, kind: text}}
  - {{name: /answer, kind: text}}
nodes:
  - name: det
    model: d
    backend: stub-detector
    inputs: [camera]
    post: [{{op: count, params: {{label: person}}, publish: /count}}]
  - name: llm
    model: l
    backend: template-llm
    config: {{template: "{{chan:/count}}"}}
    inputs: [/query, /count]
    publish_raw: /answer
sources:
  - {{channel: camera, adapter: synthetic-frames,
     params: {{width: 64, height: 48, frames: {len(frames)}, blocks: {json.dumps(blocks)}}}}}
  - {{channel: /query, adapter: text-script, params: {{lines: {json.dumps(['q'] * queries)}}}}}
sinks:
  - {{channel: /answer, adapter: collect}}
schedule: [{sched}]
"""


@settings(max_examples=15, deadline=None)
@given(st.lists(st.sampled_from("fq"), min_size=1, max_size=8), st.data())
def test_context_is_latest_at_query_time(schedule, data):
    frames = [data.draw(st.integers(0, 48)) for s in schedule if s == "f"]
    p = Pipeline(parse_spec(_sequenced_spec(frames, schedule)))
    p.run(duration=10)
    expected, latest, fi = [], "<unknown>", 0
    for s in schedule:
        if s == "f":
            latest = str(frames[fi])
            fi += 1
        else:
            expected.append(Text(latest))
    assert p.sink("/answer").received == expected


def test_graph_dot(demo_spec):
    dot = graph_dot(demo_spec)
    assert dot == graph_dot(demo_spec)
    assert '"node:person_detector" -> "ch:/human_counter";' in dot
    assert '"ch:/human_counter" -> "node:answer_llm";' in dot
    assert '"ch:camera/image_raw" [shape=ellipse, label="camera/image_raw"];' in dot


def test_graph_dot_empty():
    spec = parse_spec("version: 1\nchannels: []\n")
    assert graph_dot(spec) == "digraph pipeline {\n}\n"
    assert "digraph" in graph_dot(parse_spec(MINIMAL_SPEC))
