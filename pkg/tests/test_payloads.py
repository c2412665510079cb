import numpy as np
import pytest

from oricf.payloads import (
    AudioChunk, Detection, DetectionSet, PayloadError, Scalar, Tensor, Text,
    dumps_line, format_number, kind_matches, loads_line, render_text,
)


def test_tensor_length_must_match_shape():
    with pytest.raises(PayloadError):
        Tensor.from_values("u8", [2, 3], [0] * 5)
    t = Tensor.from_values("f32", [2, 3], range(6))
    assert t.shape == (2, 3) and t.dtype == "f32"


def test_tensor_rejects_unsupported_dtype():
    with pytest.raises(PayloadError):
        Tensor(np.zeros(3, dtype=np.float16))


def test_tensor_is_immutable_copy():
    arr = np.zeros((2, 2, 3), dtype=np.uint8)
    t = Tensor(arr)
    arr[0, 0, 0] = 9
    assert t.array[0, 0, 0] == 0
    with pytest.raises(ValueError):
        t.array[0, 0, 0] = 1


def test_image_kind():
    img = Tensor(np.zeros((4, 4, 3), dtype=np.uint8))
    assert kind_matches("image", img) and kind_matches("tensor", img)
    assert not kind_matches("image", Tensor(np.zeros((4, 4, 2), dtype=np.uint8)))
    assert not kind_matches("image", Tensor(np.zeros((4, 4, 3), dtype=np.float32)))
    assert not kind_matches("scalar", Text("x"))


@pytest.mark.parametrize("score,bbox", [
    (1.5, (0, 0, 1, 1)),
    (-0.1, (0, 0, 1, 1)),
    (0.5, (0.5, 0, 0.4, 1)),
    (0.5, (0, 0, 1, 1.2)),
])
def test_detection_invariants(score, bbox):
    with pytest.raises(PayloadError):
        Detection("person", score, bbox)


def test_detection_rejects_empty_label():
    with pytest.raises(PayloadError):
        Detection("", 0.5, (0, 0, 1, 1))


def test_detection_values_stored_at_f32():
    d = Detection("person", 0.1, (0.1, 0.2, 0.3, 0.4))
    assert d.score == float(np.float32(0.1))
    assert d.bbox[2] == float(np.float32(0.3))


def test_audio_sample_rate_positive():
    with pytest.raises(PayloadError):
        AudioChunk(0, (1,))
    with pytest.raises(PayloadError):
        AudioChunk(16000, (40000,))


@pytest.mark.parametrize("value,text", [(2.0, "2"), (0.0, "0"), (-3.0, "-3"), (2.5, "2.5"), (0.1, "0.1")])
def test_format_number(value, text):
    assert format_number(value) == text


def test_render_detections():
    ds = DetectionSet((Detection("person", 0.5, (0, 0, 0.5, 0.5)),))
    assert render_text(ds) == "person 0.5000 0.0000 0.0000 0.5000 0.5000"
    assert render_text(DetectionSet(())) == ""


@pytest.mark.parametrize("payload", [
    Tensor(np.arange(24, dtype=np.uint8).reshape(2, 4, 3)),
    Tensor(np.array([[1.5, -2.0]], dtype=np.float32)),
    Tensor(np.array([-(2**62), 7], dtype=np.int64)),
    Text("How many people do you see?"),
    Text("ünïcode\nline"),
    AudioChunk(16000, (1, -2, 32767, -32768)),
    DetectionSet((Detection("person", 0.9, (0.1, 0.2, 0.3, 0.4)),)),
    DetectionSet(()),
    Scalar(2.0),
    Scalar(float("nan")),
])
def test_json_line_round_trip(payload):
    line = dumps_line(payload)
    assert "\n" not in line
    assert loads_line(line) == payload


def test_json_line_rejects_unknown_kind():
    with pytest.raises(PayloadError):
        loads_line('{"kind": "video"}')
