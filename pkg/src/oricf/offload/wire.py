"""Binary framing for the offload protocol.

Frame header (18 bytes, little-endian)::

    magic "ORCF" | version u8 | msg_type u8 | request_id u64 | payload_len u32

followed by ``payload_len`` bytes (at most 64 MiB).  See PROTOCOL.md for the
payload layouts.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import yaml

from ..payloads import (
    DTYPES, AudioChunk, Detection, DetectionSet, PayloadError, Scalar, Tensor, Text,
)

MAGIC = b"ORCF"
VERSION = 1
HEADER = struct.Struct("<4sBBQI")
HEADER_SIZE = HEADER.size  # 18
MAX_PAYLOAD = 64 * 1024 * 1024


class MsgType(enum.IntEnum):
    LOAD_MODEL = 1
    LOAD_OK = 2
    INFER = 3
    INFER_OK = 4
    ERROR = 5
    PING = 6
    PONG = 7


class ErrorCode(enum.IntEnum):
    UNSUPPORTED_VERSION = 1
    UNKNOWN_MODEL_HANDLE = 2
    UNKNOWN_BACKEND = 3
    MALFORMED_PAYLOAD = 4
    PAYLOAD_TOO_LARGE = 5
    BACKEND_FAILURE = 6


class WireError(Exception):
    """Structured decode failure."""

    code = ErrorCode.MALFORMED_PAYLOAD
    fatal = False  # connection cannot continue


class Truncated(WireError):
    """Not enough bytes yet; nothing was consumed."""


class BadMagic(WireError):
    fatal = True


class UnsupportedVersion(WireError):
    code = ErrorCode.UNSUPPORTED_VERSION
    fatal = True


class PayloadTooLarge(WireError):
    code = ErrorCode.PAYLOAD_TOO_LARGE
    fatal = True


class MalformedPayload(WireError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: int
    request_id: int
    payload: bytes = b""
    version: int = VERSION


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(frame.payload)} bytes exceeds 64 MiB")
    if not 0 <= frame.request_id < 2**64:
        raise ValueError("request_id must fit in u64")
    header = HEADER.pack(MAGIC, frame.version, int(frame.msg_type), frame.request_id, len(frame.payload))
    return header + bytes(frame.payload)


def peek_request_id(data: bytes) -> int:
    """Request id from a (possibly invalid) header, or 0."""
    if len(data) < HEADER_SIZE:
        return 0
    return HEADER.unpack_from(data)[3]


def decode_header(data: bytes) -> tuple[int, int, int, int]:
    """Validate an 18-byte header; returns (version, msg_type, request_id, payload_len)."""
    if len(data) < HEADER_SIZE:
        raise Truncated(f"need {HEADER_SIZE} header bytes, have {len(data)}")
    magic, version, msg_type, request_id, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported protocol version {version}")
    if length > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload_len {length} exceeds 64 MiB")
    return version, msg_type, request_id, length


def decode_frame(data: bytes) -> tuple[Frame, int]:
    """Decode one frame from the start of *data*; returns (frame, bytes consumed)."""
    data = memoryview(data)
    version, msg_type, request_id, length = decode_header(data[:HEADER_SIZE])
    end = HEADER_SIZE + length
    if len(data) < end:
        raise Truncated(f"frame needs {end} bytes, have {len(data)}")
    return Frame(msg_type, request_id, bytes(data[HEADER_SIZE:end]), version), end


# -- payload codec ----------------------------------------------------------------

KIND_CODES = {"tensor": 1, "text": 2, "audio": 3, "detections": 4, "scalar": 5}
DTYPE_CODES = {"u8": 1, "f32": 2, "i64": 3}
_DTYPE_BY_CODE = {v: k for k, v in DTYPE_CODES.items()}


class Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> memoryview:
        if n < 0 or n > self.remaining():
            raise MalformedPayload(f"need {n} bytes at offset {self.pos}, have {self.remaining()}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        vals = s.unpack(self.take(s.size))
        return vals[0] if len(vals) == 1 else vals

    def string(self, len_fmt: str = "H") -> str:
        n = self.unpack(len_fmt)
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload(f"invalid UTF-8: {exc}") from None

    def finish(self) -> None:
        if self.remaining():
            raise MalformedPayload(f"{self.remaining()} trailing bytes")


def _str(s: str, len_fmt: str = "H") -> bytes:
    raw = s.encode("utf-8")
    if len(raw) >= 1 << (8 * struct.calcsize(len_fmt)):
        raise PayloadError(f"string of {len(raw)} bytes too long for its length prefix")
    return struct.pack("<" + len_fmt, len(raw)) + raw


def encode_payload(p) -> bytes:
    if isinstance(p, Tensor):
        if p.array.ndim > 255:
            raise PayloadError("tensor rank exceeds 255")
        head = struct.pack("<BBB", 1, DTYPE_CODES[p.dtype], p.array.ndim)
        dims = struct.pack(f"<{p.array.ndim}I", *p.shape)
        return head + dims + p.array.tobytes()
    if isinstance(p, Text):
        return b"\x02" + _str(p.text, "I")
    if isinstance(p, AudioChunk):
        samples = np.asarray(p.samples, dtype="<i2").tobytes()
        return struct.pack("<BII", 3, p.sample_rate_hz, len(p.samples)) + samples
    if isinstance(p, DetectionSet):
        parts = [struct.pack("<BI", 4, len(p.items))]
        for d in p:
            parts.append(_str(d.label))
            parts.append(struct.pack("<5f", d.score, *d.bbox))
        return b"".join(parts)
    if isinstance(p, Scalar):
        return struct.pack("<Bd", 5, p.value)
    raise PayloadError(f"cannot encode {p!r}")


def read_payload(r: Reader):
    kind = r.unpack("B")
    try:
        if kind == 1:
            dcode, rank = r.unpack("BB")
            if dcode not in _DTYPE_BY_CODE:
                raise MalformedPayload(f"unknown dtype code {dcode}")
            dtype = _DTYPE_BY_CODE[dcode]
            dims = [r.unpack("I") for _ in range(rank)]
            nbytes = math.prod(dims) * DTYPES[dtype].itemsize
            if nbytes > r.remaining():
                raise MalformedPayload(f"tensor needs {nbytes} bytes, have {r.remaining()}")
            return Tensor.from_bytes(dtype, dims, bytes(r.take(nbytes)))
        if kind == 2:
            return Text(r.string("I"))
        if kind == 3:
            rate, n = r.unpack("II")
            raw = r.take(2 * n)
            return AudioChunk(rate, tuple(np.frombuffer(raw, dtype="<i2").tolist()))
        if kind == 4:
            n = r.unpack("I")
            if n * 22 > r.remaining():  # 2-byte label length + 5 floats
                raise MalformedPayload(f"{n} detections cannot fit in {r.remaining()} bytes")
            items = []
            for _ in range(n):
                label = r.string("H")
                score, x0, y0, x1, y1 = r.unpack("5f")
                items.append(Detection(label, score, (x0, y0, x1, y1)))
            return DetectionSet(tuple(items))
        if kind == 5:
            return Scalar(r.unpack("d"))
    except PayloadError as exc:
        raise MalformedPayload(str(exc)) from None
    raise MalformedPayload(f"unknown payload kind code {kind}")


def decode_payload(data: bytes):
    r = Reader(data)
    p = read_payload(r)
    r.finish()
    return p


# -- message bodies ---------------------------------------------------------------


def encode_load_model(model_id: str, backend: str, config: Mapping) -> bytes:
    cfg = yaml.safe_dump(dict(config), sort_keys=True, allow_unicode=True).encode("utf-8")
    return _str(model_id) + _str(backend) + struct.pack("<I", len(cfg)) + cfg


def decode_load_model(data: bytes) -> tuple[str, str, dict]:
    r = Reader(data)
    model_id = r.string("H")
    backend = r.string("H")
    raw = r.string("I")
    r.finish()
    try:
        config = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise MalformedPayload(f"config is not YAML: {exc}") from None
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise MalformedPayload("config must be a mapping")
    return model_id, backend, config


def encode_load_ok(handle: int) -> bytes:
    return struct.pack("<I", handle)


def decode_load_ok(data: bytes) -> int:
    r = Reader(data)
    handle = r.unpack("I")
    r.finish()
    return handle


def encode_infer(handle: int, inputs, ctx: Optional[Mapping] = None) -> bytes:
    ctx = ctx or {}
    if len(inputs) > 255:
        raise PayloadError("at most 255 inputs per request")
    if len(ctx) > 0xFFFF:
        raise PayloadError("too many context entries")
    parts = [struct.pack("<IB", handle, len(inputs))]
    parts += [encode_payload(p) for p in inputs]
    parts.append(struct.pack("<H", len(ctx)))
    for name in sorted(ctx):
        parts.append(_str(name))
        parts.append(encode_payload(ctx[name]))
    return b"".join(parts)


def decode_infer(data: bytes) -> tuple[int, list, dict]:
    r = Reader(data)
    handle, n = r.unpack("IB")
    inputs = [read_payload(r) for _ in range(n)]
    n_ctx = r.unpack("H")
    ctx = {}
    for _ in range(n_ctx):
        name = r.string("H")
        ctx[name] = read_payload(r)
    r.finish()
    return handle, inputs, ctx


def encode_error(code: int, message: str) -> bytes:
    raw = message.encode("utf-8")[:0xFFFF].decode("utf-8", "ignore")
    return struct.pack("<H", int(code)) + _str(raw)


def decode_error(data: bytes) -> tuple[int, str]:
    r = Reader(data)
    code = r.unpack("H")
    message = r.string("H")
    r.finish()
    return code, message


def read_frame(sock) -> Frame:
    """Blocking read of one frame from a socket-like object with ``recv``."""
    header = _recv_exact(sock, HEADER_SIZE)
    try:
        _, msg_type, request_id, length = decode_header(header)
    except WireError as exc:
        exc.request_id = peek_request_id(header)
        raise
    payload = _recv_exact(sock, length) if length else b""
    return Frame(msg_type, request_id, payload)


def _recv_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed" if not buf else "connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)
