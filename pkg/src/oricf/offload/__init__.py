"""Edge offloading: wire codec, worker daemon and remote model proxy."""

from .proxy import RemoteError, RemoteModelProxy, WorkerUnavailable, remote_proxy
from .wire import ErrorCode, Frame, MsgType, WireError, decode_frame, encode_frame
from .worker import Worker, worker_serve

__all__ = [
    "ErrorCode", "Frame", "MsgType", "RemoteError", "RemoteModelProxy", "WireError",
    "Worker", "WorkerUnavailable", "decode_frame", "encode_frame", "remote_proxy", "worker_serve",
]
