import socket
import time

import numpy as np
import pytest

from oricf.inference import BACKENDS, Backend, BackendDescriptor, ModelRegistry
from oricf.offload import RemoteError, RemoteModelProxy, Worker, WorkerUnavailable, remote_proxy, wire
from oricf.offload.proxy import Connection
from oricf.offload.wire import ErrorCode, Frame, MsgType
from oricf.payloads import Scalar, Tensor, Text


def one_bright_tile():
    arr = np.zeros((16, 16, 3), dtype=np.uint8)
    arr[:8, :8] = 255
    return Tensor(arr)


def test_ping_pong(worker):
    conn = Connection(worker.address)
    rid = conn.send(MsgType.PING)
    frame = conn.wait(rid)
    assert frame == Frame(MsgType.PONG, rid)
    conn.close()


def test_remote_detector_equals_local(worker):
    proxy = remote_proxy(worker.address, "person-detection-0200", "stub-detector", {"threshold": 200})
    reg = ModelRegistry()
    h = reg.load_model("person-detection-0200", "stub-detector", {"threshold": 200})
    remote, local = proxy.infer([one_bright_tile()]), reg.infer(h, [one_bright_tile()])
    assert len(remote) == 1
    assert wire.encode_payload(remote) == wire.encode_payload(local)
    proxy.close()


def test_identity_proxy(worker):
    host, port = worker.address
    proxy = remote_proxy(f"{host}:{port}", "id", "identity")
    assert proxy.infer([Text("x")]) == Text("x")
    proxy.close()


def test_context_travels(worker):
    proxy = remote_proxy(worker.address, "llm", "template-llm", {"template": "I see {chan:/n} people."})
    assert proxy.infer([Text("q")], {"/n": Scalar(2)}) == Text("I see 2 people.")
    proxy.close()


def test_unknown_handle(worker):
    conn = Connection(worker.address)
    with pytest.raises(RemoteError) as info:
        conn.call(MsgType.INFER, wire.encode_infer(999, [Text("x")]), MsgType.INFER_OK)
    assert info.value.code == ErrorCode.UNKNOWN_MODEL_HANDLE
    conn.close()


def test_unknown_backend_and_bad_config(worker):
    conn = Connection(worker.address)
    with pytest.raises(RemoteError) as info:
        conn.call(MsgType.LOAD_MODEL, wire.encode_load_model("m", "nope", {}), MsgType.LOAD_OK)
    assert info.value.code == ErrorCode.UNKNOWN_BACKEND
    with pytest.raises(RemoteError) as info:
        conn.call(MsgType.LOAD_MODEL, wire.encode_load_model("m", "stub-detector", {"threshold": -1}),
                  MsgType.LOAD_OK)
    assert info.value.code == ErrorCode.BACKEND_FAILURE
    conn.close()


def test_malformed_infer_body(worker):
    conn = Connection(worker.address)
    with pytest.raises(RemoteError) as info:
        conn.call(MsgType.INFER, b"\x01", MsgType.INFER_OK)
    assert info.value.code == ErrorCode.MALFORMED_PAYLOAD
    conn.close()


def test_handles_are_per_connection(worker):
    a, b = Connection(worker.address), Connection(worker.address)
    handle = wire.decode_load_ok(a.call(MsgType.LOAD_MODEL, wire.encode_load_model("id", "identity", {}),
                                        MsgType.LOAD_OK))
    with pytest.raises(RemoteError) as info:
        b.call(MsgType.INFER, wire.encode_infer(handle, [Text("x")]), MsgType.INFER_OK)
    assert info.value.code == ErrorCode.UNKNOWN_MODEL_HANDLE
    a.close(), b.close()


class Sleepy(Backend):
    """Sleeps for the scalar input's number of seconds."""

    descriptor = BackendDescriptor("sleepy", ("scalar",), "scalar")

    def infer(self, inputs, ctx):
        time.sleep(inputs[0].value)
        return inputs[0]


def test_pipelined_requests_out_of_order():
    backends = BACKENDS.copy()
    backends.register(Sleepy)
    with Worker("127.0.0.1", 0, backends=backends) as w:
        conn = Connection(w.address)
        handle = wire.decode_load_ok(conn.call(MsgType.LOAD_MODEL, wire.encode_load_model("s", "sleepy", {}),
                                               MsgType.LOAD_OK))
        slow = conn.send(MsgType.INFER, wire.encode_infer(handle, [Scalar(0.5)]))
        fast = conn.send(MsgType.INFER, wire.encode_infer(handle, [Scalar(0.0)]))
        first = wire.read_frame(conn.sock)
        second = wire.read_frame(conn.sock)
        assert {first.request_id, second.request_id} == {slow, fast}
        assert first.request_id == fast
        conn.close()


def test_two_interleaved_ids(worker):
    conn = Connection(worker.address)
    handle = wire.decode_load_ok(conn.call(MsgType.LOAD_MODEL, wire.encode_load_model("id", "identity", {}),
                                           MsgType.LOAD_OK))
    ids = [conn.send(MsgType.INFER, wire.encode_infer(handle, [Text(str(i))])) for i in range(2)]
    got = {wire.read_frame(conn.sock).request_id for _ in range(2)}
    assert got == set(ids)
    conn.close()


def test_bad_magic_closes_connection(worker):
    sock = socket.create_connection(worker.address, timeout=5)
    bad = b"XXXX" + wire.encode_frame(Frame(MsgType.PING, 5))[4:]
    sock.sendall(bad)
    frame = wire.read_frame(sock)
    assert frame.msg_type == MsgType.ERROR and frame.request_id == 5
    assert sock.recv(1) == b""
    sock.close()


def test_bad_version_gets_code_1(worker):
    sock = socket.create_connection(worker.address, timeout=5)
    raw = bytearray(wire.encode_frame(Frame(MsgType.PING, 9)))
    raw[4] = 7
    sock.sendall(bytes(raw))
    frame = wire.read_frame(sock)
    assert frame.request_id == 9 and wire.decode_error(frame.payload)[0] == ErrorCode.UNSUPPORTED_VERSION
    assert sock.recv(1) == b""
    sock.close()


def _closed_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def test_unreachable_worker_names_node():
    port = _closed_port()
    proxy = RemoteModelProxy(("127.0.0.1", port), "id", "identity", node="person_detector", backoff=0.01)
    with pytest.raises(WorkerUnavailable, match=rf"person_detector.*127\.0\.0\.1:{port}.*3 attempts"):
        proxy.connect()


def test_worker_killed_then_restarted_recovers():
    w = Worker("127.0.0.1", 0).start()
    addr = w.address
    proxy = remote_proxy(addr, "id", "identity", node="n", backoff=0.01)
    assert proxy.infer([Text("a")]) == Text("a")
    w.stop()
    with pytest.raises(WorkerUnavailable, match="node n"):
        proxy.infer([Text("b")])
    w2 = Worker(*addr).start()
    try:
        assert proxy.infer([Text("c")]) == Text("c")
    finally:
        proxy.close()
        w2.stop()


def test_ipv6_loopback():
    if not socket.has_ipv6:
        pytest.skip("no IPv6")
    try:
        w = Worker("::1", 0).start()
    except OSError:
        pytest.skip("IPv6 loopback unavailable")
    with w:
        proxy = remote_proxy(f"[::1]:{w.address[1]}", "id", "identity")
        assert proxy.infer([Text("v6")]) == Text("v6")
        proxy.close()
