"""Edge worker: serves model loading and inference over TCP.

Model handles are per connection.  Infer requests on one connection run on
a small thread pool, so responses may come back out of request order; each
response carries the request id of its request.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from ..inference import BACKENDS, BackendRegistry, ConfigError, InferenceError, ModelRegistry, UnknownBackend
from ..payloads import PayloadError
from ..template import TemplateError
from . import wire
from .wire import ErrorCode, Frame, MsgType

logger = logging.getLogger(__name__)


class _Connection:
    def __init__(self, sock: socket.socket, backends: BackendRegistry, workers: int):
        self.sock = sock
        self.models = ModelRegistry(backends)
        self.send_lock = threading.Lock()
        self.pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="infer")

    def send(self, msg_type: int, request_id: int, payload: bytes = b"") -> None:
        data = wire.encode_frame(Frame(msg_type, request_id, payload))
        with self.send_lock:
            self.sock.sendall(data)

    def send_error(self, request_id: int, code: int, message: str) -> None:
        self.send(MsgType.ERROR, request_id, wire.encode_error(code, message))

    def handle_infer(self, frame: Frame) -> None:
        try:
            handle, inputs, ctx = wire.decode_infer(frame.payload)
        except wire.WireError as exc:
            self.send_error(frame.request_id, exc.code, str(exc))
            return
        try:
            out = self.models.infer(handle, inputs, ctx)
        except KeyError:
            self.send_error(frame.request_id, ErrorCode.UNKNOWN_MODEL_HANDLE, f"unknown model handle {handle}")
            return
        except (InferenceError, PayloadError, TemplateError) as exc:
            self.send_error(frame.request_id, ErrorCode.BACKEND_FAILURE, str(exc))
            return
        try:
            self.send(MsgType.INFER_OK, frame.request_id, wire.encode_payload(out))
        except wire.PayloadTooLarge as exc:
            self.send_error(frame.request_id, ErrorCode.PAYLOAD_TOO_LARGE, str(exc))

    def handle_load(self, frame: Frame) -> None:
        try:
            model_id, backend, config = wire.decode_load_model(frame.payload)
        except wire.WireError as exc:
            self.send_error(frame.request_id, exc.code, str(exc))
            return
        try:
            handle = self.models.load_model(model_id, backend, config)
        except UnknownBackend as exc:
            self.send_error(frame.request_id, ErrorCode.UNKNOWN_BACKEND, str(exc))
            return
        except (ConfigError, InferenceError, TemplateError, PayloadError, TypeError, ValueError) as exc:
            self.send_error(frame.request_id, ErrorCode.BACKEND_FAILURE, str(exc))
            return
        self.send(MsgType.LOAD_OK, frame.request_id, wire.encode_load_ok(handle.id))

    def serve(self, stop: threading.Event) -> None:
        try:
            while not stop.is_set():
                try:
                    frame = wire.read_frame(self.sock)
                except wire.WireError as exc:
                    self.send_error(getattr(exc, "request_id", 0), exc.code, str(exc))
                    return
                except (ConnectionError, OSError):
                    return
                if frame.msg_type == MsgType.PING:
                    self.send(MsgType.PONG, frame.request_id, frame.payload)
                elif frame.msg_type == MsgType.LOAD_MODEL:
                    # loads are serialized so a following Infer sees the handle
                    self.handle_load(frame)
                elif frame.msg_type == MsgType.INFER:
                    self.pool.submit(self._guarded, self.handle_infer, frame)
                else:
                    self.send_error(frame.request_id, ErrorCode.MALFORMED_PAYLOAD,
                                    f"unexpected message type {frame.msg_type}")
        except OSError:
            pass
        finally:
            self.pool.shutdown(wait=True)

    def _guarded(self, fn, frame):
        try:
            fn(frame)
        except OSError:
            pass
        except Exception as exc:  # pragma: no cover - defensive
            logger.exception("request %d failed", frame.request_id)
            try:
                self.send_error(frame.request_id, ErrorCode.BACKEND_FAILURE, str(exc))
            except OSError:
                pass


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    block_on_close = False


class Worker:
    """TCP worker.  ``port=0`` binds an ephemeral port; see :attr:`address`."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 backends: Optional[BackendRegistry] = None, threads_per_connection: int = 4):
        self.backends = backends or BACKENDS
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()
        worker = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                peer = "%s:%s" % self.client_address[:2]
                logger.info("connection open %s", peer)
                self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                with worker._conns_lock:
                    worker._conns.add(self.request)
                try:
                    _Connection(self.request, worker.backends, threads_per_connection).serve(worker._stop)
                finally:
                    with worker._conns_lock:
                        worker._conns.discard(self.request)
                    logger.info("connection closed %s", peer)

        server_cls = _Server
        if ":" in host:
            server_cls = type("_Server6", (_Server,), {"address_family": socket.AF_INET6})
        self.server = server_cls((host, port), Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def serve_forever(self) -> None:
        try:
            self.server.serve_forever(poll_interval=0.1)
        finally:
            self.server.server_close()

    def start(self) -> "Worker":
        self._thread = threading.Thread(target=self.serve_forever, name="oricf-worker", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        """Stop accepting and drop every open connection."""
        self._stop.set()
        self.server.shutdown()
        with self._conns_lock:
            for s in list(self._conns):
                try:
                    s.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
        if self._thread is not None:
            self._thread.join(5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def worker_serve(listen_addr: str, backends: Optional[BackendRegistry] = None) -> None:
    """Serve on ``HOST:PORT`` until interrupted."""
    from ..pipeline import parse_hostport

    host, port = parse_hostport(listen_addr)
    Worker(host, port, backends).serve_forever()
