"""Audio in, text out: a token ASR stub feeding the template LLM.

Each audio chunk carries one token id in its first sample; the ASR stub
maps it through a vocabulary.  The transcript becomes the LLM's trigger
while the person count is read as context.

    python3 demos/spoken_query.py
"""

import oricf

SPEC = """
version: 1
channels:
  - {name: mic, kind: audio}
  - {name: camera, kind: image}
  - {name: /transcript, kind: text}
  - {name: /count, kind: scalar}
  - {name: /answer, kind: text}
nodes:
  - name: detector
    model: person-detection-0200
    backend: stub-detector
    inputs: [camera]
    post:
      - {op: count, params: {label: person}, publish: /count}
  - name: asr
    model: token-asr
    backend: token-asr
    config: {vocab: [how many people do you see, hello]}
    inputs: [mic]
    publish_raw: /transcript
  - name: llm
    model: tinyllama-1.1b-chat-v1.0
    backend: template-llm
    config: {template: "You asked '{query}'. I see {chan:/count} people."}
    inputs: [/transcript, /count]
    publish_raw: /answer
sources:
  - channel: camera
    adapter: synthetic-frames
    params: {width: 32, height: 32, frames: 1, blocks: [[[0, 0], [8, 8], [16, 16]]]}
  - channel: mic
    adapter: audio-script
    params: {tokens: [0, 1]}
sinks:
  - {channel: /answer, adapter: collect}
schedule: [camera, mic, mic]
"""

spec = oricf.parse_spec(SPEC)
print(oricf.graph_dot(spec))
pipeline = oricf.Pipeline(spec)
pipeline.run()
for answer in pipeline.sink("/answer").received:
    print(answer.text)
