"""People counting with a text query, entirely onboard.

A stub detector counts bright 8x8 tiles in synthetic camera frames and
publishes the count on /human_counter.  When the query arrives, the
template LLM reads the latest count as context and answers.

    python3 demos/people_counting.py
"""

import oricf

spec = oricf.parse_spec(oricf.demo_spec_text())
print("execution order:", oricf.validate_graph(spec))

# Swap the stdout sink for an in-memory one so we can inspect the answer.
spec = oricf.parse_spec(oricf.demo_spec_text().replace("adapter: stdout-text", "adapter: collect"))
pipeline = oricf.Pipeline(spec, record=True)
report = pipeline.run()

counts = [m.payload.value for m in pipeline.bus.history("/human_counter")]
print("counts per frame:", counts)
print("answer:", pipeline.sink("/answer").received[0].text)
print(report.to_json(timing=False))
