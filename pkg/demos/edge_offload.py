"""Moving a node to an edge worker by changing its placement only.

Starts a worker on a loopback port in this process, then runs the demo
three ways and checks that every channel carries the same payloads.
For a separate worker process use ``oricf worker --listen HOST:PORT``
and ``oricf run SPEC --placement NODE=edge://HOST:PORT``.

    python3 demos/edge_offload.py
"""

import oricf
from oricf.offload import Worker

spec = oricf.parse_spec(oricf.demo_spec_text().replace("adapter: stdout-text", "adapter: collect"))


def run(placement=None):
    p = oricf.Pipeline(spec, placement=placement, record=True)
    report = p.run()
    history = {ch: [m.payload for m in p.bus.history(ch)] for ch in p.bus.channels}
    return report, history, p.sink("/answer").received


with Worker("127.0.0.1", 0) as worker:
    edge = "edge://%s:%d" % worker.address
    _, onboard, answer = run()
    for placement in ({"person_detector": edge}, {"person_detector": edge, "answer_llm": edge}):
        report, history, remote_answer = run(placement)
        where = {name: node.placement for name, node in report.nodes.items()}
        print(where, "->", remote_answer[0].text, "| identical:", history == onboard)
