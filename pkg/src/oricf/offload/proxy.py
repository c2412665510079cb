"""Client side of the offload protocol."""

from __future__ import annotations

import itertools
import logging
import socket
import threading
import time
from typing import Mapping, Optional, Sequence

from ..inference import InferenceError
from . import wire
from .wire import Frame, MsgType

logger = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.2


class RemoteError(InferenceError):
    """The worker answered with an Error frame."""

    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(f"worker error {code}: {message}")


class WorkerUnavailable(InferenceError):
    """The worker could not be reached within the retry budget."""


class Connection:
    """One TCP connection with id-matched request/response."""

    def __init__(self, address: tuple[str, int], timeout: float = 10.0):
        self.address = address
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._ids = itertools.count(1)
        self._early: dict[int, Frame] = {}

    def send(self, msg_type: int, payload: bytes = b"") -> int:
        rid = next(self._ids)
        self.sock.sendall(wire.encode_frame(Frame(msg_type, rid, payload)))
        return rid

    def wait(self, request_id: int) -> Frame:
        while request_id not in self._early:
            frame = wire.read_frame(self.sock)
            self._early[frame.request_id] = frame
        return self._early.pop(request_id)

    def call(self, msg_type: int, payload: bytes, expect: int) -> bytes:
        frame = self.wait(self.send(msg_type, payload))
        if frame.msg_type == MsgType.ERROR:
            raise RemoteError(*wire.decode_error(frame.payload))
        if frame.msg_type != expect:
            raise wire.MalformedPayload(f"expected message type {expect}, got {frame.msg_type}")
        return frame.payload

    def ping(self) -> bool:
        return self.call(MsgType.PING, b"", MsgType.PONG) == b""

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class RemoteModelProxy:
    """Runs a model on a worker with the same contract as a local handle.

    Transport failures are retried (reconnect and reload) up to
    :data:`RETRY_ATTEMPTS` times with :data:`RETRY_BACKOFF_S` between
    attempts; then :class:`WorkerUnavailable` names the node and address.
    """

    def __init__(self, address: tuple[str, int], model_id: str, backend: str,
                 config: Optional[Mapping] = None, node: str = "?",
                 attempts: int = RETRY_ATTEMPTS, backoff: float = RETRY_BACKOFF_S,
                 timeout: float = 10.0):
        self.address = tuple(address)
        self.model_id = model_id
        self.backend = backend
        self.config = dict(config or {})
        self.node = node
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._conn: Optional[Connection] = None
        self._handle: Optional[int] = None
        self._lock = threading.Lock()

    @property
    def where(self) -> str:
        return "%s:%s" % self.address

    def _open(self) -> None:
        conn = Connection(self.address, self.timeout)
        try:
            payload = wire.encode_load_model(self.model_id, self.backend, self.config)
            self._handle = wire.decode_load_ok(conn.call(MsgType.LOAD_MODEL, payload, MsgType.LOAD_OK))
        except BaseException:
            conn.close()
            raise
        self._conn = conn

    def _drop(self) -> None:
        if self._conn is not None:
            self._conn.close()
        self._conn = None
        self._handle = None

    def _with_retry(self, op):
        last: Optional[BaseException] = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff)
            try:
                if self._conn is None:
                    self._open()
                return op(self._conn)
            except RemoteError:
                raise
            except (OSError, ConnectionError, wire.WireError) as exc:
                last = exc
                self._drop()
                logger.warning("node %s: worker %s attempt %d/%d failed: %s",
                               self.node, self.where, attempt + 1, self.attempts, exc)
        raise WorkerUnavailable(
            f"node {self.node}: worker {self.where} unreachable after {self.attempts} attempts ({last})"
        )

    def connect(self) -> "RemoteModelProxy":
        with self._lock:
            self._with_retry(lambda conn: None)
        return self

    def infer(self, inputs: Sequence, ctx: Optional[Mapping] = None):
        body_ctx = dict(ctx or {})

        def op(conn: Connection):
            payload = wire.encode_infer(self._handle, list(inputs), body_ctx)
            return wire.decode_payload(conn.call(MsgType.INFER, payload, MsgType.INFER_OK))

        with self._lock:
            return self._with_retry(op)

    def close(self) -> None:
        with self._lock:
            self._drop()


def remote_proxy(address, model_id: str, backend: str, config=None, **kwargs) -> RemoteModelProxy:
    """Connect (with retries) and load *model_id* on the worker at *address*."""
    if isinstance(address, str):
        from ..pipeline import parse_hostport

        address = parse_hostport(address)
    return RemoteModelProxy(address, model_id, backend, config, **kwargs).connect()
