"""Source and sink adapters.

Adapters are registered by name.  A source yields payloads for one channel;
a sink receives every payload of one channel.  Third-party adapters are
added with :func:`register_adapter` before a pipeline is parsed.
"""

from __future__ import annotations

import io
import logging
import socket
import sys
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Optional

import numpy as np

from .bus import Bus, BusClosed
from .payloads import KINDS, AudioChunk, PayloadError, Tensor, Text, dumps_line, loads_line, render_text

logger = logging.getLogger(__name__)

FRAME_BLOCK = 8


class AdapterError(Exception):
    pass


@dataclass(frozen=True)
class AdapterInfo:
    name: str
    role: str  # "source" or "sink"
    kinds: tuple[str, ...]
    factory: Callable[[Mapping[str, Any], str], Any]
    check: Callable[[Mapping[str, Any]], list[tuple[str, str]]]


_ADAPTERS: dict[tuple[str, str], AdapterInfo] = {}


def register_adapter(name: str, role: str, kinds, factory, check=None) -> None:
    if role not in ("source", "sink"):
        raise ValueError("role must be 'source' or 'sink'")
    _ADAPTERS[(role, name)] = AdapterInfo(name, role, tuple(kinds), factory, check or (lambda p: []))


def adapter_info(name: str, role: str) -> AdapterInfo:
    try:
        return _ADAPTERS[(role, name)]
    except KeyError:
        raise AdapterError(f"unknown {role} adapter {name!r}") from None


def adapter_names(role: str) -> list[str]:
    return sorted(n for r, n in _ADAPTERS if r == role)


# -- param helpers ------------------------------------------------------------


def _int_param(params, key, lo=None, hi=None, default=None, required=False):
    if key not in params:
        return [(key, f"missing param {key!r}")] if required else []
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, int):
        return [(key, f"{key} must be an integer")]
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        return [(key, f"{key}={v} out of range")]
    return []


def _unknown(params, allowed):
    if not isinstance(params, Mapping):
        return [("params", "params must be a mapping")]
    return [(k, f"unknown param {k!r}") for k in params if k not in allowed]


def _interval(params) -> float:
    return params.get("interval_ms", 0) / 1000.0


# -- synthetic frames ---------------------------------------------------------


class SyntheticFrames:
    """u8 images that are 0 except for 8x8 blocks of 255.

    ``blocks[i]`` lists the ``[x, y]`` top-left pixel positions of the bright
    blocks in frame ``i``; frames beyond the list are blank.
    """

    def __init__(self, params, kind):
        self.width = params["width"]
        self.height = params["height"]
        self.channels = params.get("channels", 3)
        self.frames = params["frames"]
        self.blocks = params.get("blocks", [])
        self.interval_s = _interval(params)

    def frame(self, i: int) -> Tensor:
        img = np.zeros((self.height, self.width, self.channels), dtype=np.uint8)
        for x, y in (self.blocks[i] if i < len(self.blocks) else []):
            img[y:y + FRAME_BLOCK, x:x + FRAME_BLOCK] = 255
        return Tensor(img)

    def items(self) -> Iterator[Tensor]:
        for i in range(self.frames):
            yield self.frame(i)


def _check_frames(params):
    problems = _unknown(params, {"width", "height", "channels", "frames", "blocks", "interval_ms"})
    if problems and problems[0][0] == "params":
        return problems
    problems += _int_param(params, "width", lo=1, required=True)
    problems += _int_param(params, "height", lo=1, required=True)
    problems += _int_param(params, "frames", lo=0, required=True)
    problems += _int_param(params, "interval_ms", lo=0)
    if params.get("channels", 3) not in (1, 3) or isinstance(params.get("channels"), bool):
        problems.append(("channels", "channels must be 1 or 3"))
    blocks = params.get("blocks", [])
    ok = isinstance(blocks, list) and all(
        isinstance(frame, list) and all(
            isinstance(pos, list) and len(pos) == 2
            and all(isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in pos)
            for pos in frame
        )
        for frame in blocks
    )
    if not ok:
        problems.append(("blocks", "blocks must be a list (per frame) of [x, y] positions"))
    return problems


# -- scripted sources ---------------------------------------------------------


class TextScript:
    def __init__(self, params, kind):
        self.lines = list(params["lines"])
        self.interval_s = _interval(params)

    def items(self):
        for line in self.lines:
            yield Text(line)


def _check_text_script(params):
    problems = _unknown(params, {"lines", "interval_ms"})
    lines = params.get("lines") if isinstance(params, Mapping) else None
    if not isinstance(lines, list) or not all(isinstance(x, str) for x in lines):
        problems.append(("lines", "lines must be a list of strings"))
    return problems + (_int_param(params, "interval_ms", lo=0) if isinstance(params, Mapping) else [])


class AudioScript:
    """One AudioChunk per token; the first sample carries the token id."""

    def __init__(self, params, kind):
        self.tokens = list(params["tokens"])
        self.sample_rate_hz = params.get("sample_rate_hz", 16000)
        self.samples_per_chunk = params.get("samples_per_chunk", 160)
        self.interval_s = _interval(params)

    def items(self):
        for tok in self.tokens:
            samples = [tok] + [0] * (self.samples_per_chunk - 1)
            yield AudioChunk(self.sample_rate_hz, tuple(samples))


def _check_audio_script(params):
    problems = _unknown(params, {"tokens", "sample_rate_hz", "samples_per_chunk", "interval_ms"})
    if problems and problems[0][0] == "params":
        return problems
    tokens = params.get("tokens")
    if not isinstance(tokens, list) or not all(
        isinstance(t, int) and not isinstance(t, bool) and -32768 <= t <= 32767 for t in tokens
    ):
        problems.append(("tokens", "tokens must be a list of 16-bit integers"))
    problems += _int_param(params, "sample_rate_hz", lo=1, hi=2**32 - 1)
    problems += _int_param(params, "samples_per_chunk", lo=1)
    problems += _int_param(params, "interval_ms", lo=0)
    return problems


# -- files and standard streams -----------------------------------------------


class FileSource:
    """Newline-delimited JSON payloads."""

    def __init__(self, params, kind):
        self.path = Path(params["path"])
        self.interval_s = _interval(params)

    def items(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    yield loads_line(line)
                except (ValueError, PayloadError) as exc:
                    raise AdapterError(f"{self.path}:{lineno}: {exc}") from exc


class FileSink:
    def __init__(self, params, kind):
        self.path = Path(params["path"])
        self._fh: Optional[io.TextIOBase] = None

    def open(self):
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def write(self, payload):
        self._fh.write(dumps_line(payload) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _check_path(params):
    problems = _unknown(params, {"path", "interval_ms"})
    if problems and problems[0][0] == "params":
        return problems
    if not isinstance(params.get("path"), str) or not params.get("path"):
        problems.append(("path", "missing param 'path'"))
    return problems + _int_param(params, "interval_ms", lo=0)


class StdinText:
    def __init__(self, params, kind):
        self.interval_s = _interval(params)

    def items(self):
        for line in sys.stdin:
            yield Text(line.rstrip("\r\n"))


class StdoutText:
    def __init__(self, params, kind):
        pass

    def open(self):
        pass

    def write(self, payload):
        out = sys.stdout
        out.write(render_text(payload) + "\n")
        out.flush()

    def close(self):
        pass


def _check_interval_only(params):
    problems = _unknown(params, {"interval_ms"})
    return problems + (_int_param(params, "interval_ms", lo=0) if isinstance(params, Mapping) else [])


def _check_none(params):
    return _unknown(params, set())


class TcpTextSource:
    """Connects to ``host:port`` and emits one Text per received line."""

    def __init__(self, params, kind):
        self.host = params["host"]
        self.port = params["port"]
        self.interval_s = _interval(params)

    def items(self):
        with socket.create_connection((self.host, self.port), timeout=10) as sock:
            sock.settimeout(None)
            with sock.makefile("r", encoding="utf-8", newline="\n") as fh:
                for line in fh:
                    yield Text(line.rstrip("\r\n"))


class TcpTextSink:
    def __init__(self, params, kind):
        self.host = params["host"]
        self.port = params["port"]
        self._sock: Optional[socket.socket] = None

    def open(self):
        self._sock = socket.create_connection((self.host, self.port), timeout=10)

    def write(self, payload):
        self._sock.sendall((render_text(payload) + "\n").encode("utf-8"))

    def close(self):
        if self._sock is not None:
            self._sock.close()


def _check_tcp(params):
    problems = _unknown(params, {"host", "port", "interval_ms"})
    if problems and problems[0][0] == "params":
        return problems
    if not isinstance(params.get("host"), str) or not params.get("host"):
        problems.append(("host", "missing param 'host'"))
    problems += _int_param(params, "port", lo=1, hi=65535, required=True)
    return problems + _int_param(params, "interval_ms", lo=0)


class CollectSink:
    """Keeps every received payload in :attr:`received`."""

    def __init__(self, params, kind):
        self.received: list = []

    def open(self):
        pass

    def write(self, payload):
        self.received.append(payload)

    def close(self):
        pass


_ANY = tuple(k for k in KINDS)

register_adapter("synthetic-frames", "source", ("image", "tensor"), SyntheticFrames, _check_frames)
register_adapter("text-script", "source", ("text",), TextScript, _check_text_script)
register_adapter("audio-script", "source", ("audio",), AudioScript, _check_audio_script)
register_adapter("file", "source", _ANY, FileSource, _check_path)
register_adapter("file", "sink", _ANY, FileSink, _check_path)
register_adapter("stdin-text", "source", ("text",), StdinText, _check_interval_only)
register_adapter("stdout-text", "sink", _ANY, StdoutText, _check_none)
register_adapter("tcp-text", "source", ("text",), TcpTextSource, _check_tcp)
register_adapter("tcp-text", "sink", _ANY, TcpTextSink, _check_tcp)
register_adapter("collect", "sink", _ANY, CollectSink, _check_none)


def make_adapter(name: str, role: str, params: Mapping[str, Any], kind: str):
    info = adapter_info(name, role)
    problems = info.check(params)
    if problems:
        raise AdapterError(f"{name}: " + "; ".join(msg for _, msg in problems))
    return info.factory(dict(params), kind)


# -- running adapters ---------------------------------------------------------


class AdapterHandle:
    """A running adapter task with a cooperative stop signal."""

    def __init__(self, role: str, channel: str, adapter):
        self.role = role
        self.channel = channel
        self.adapter = adapter
        self.count = 0
        self.status = "created"
        self.error: Optional[str] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def stop(self) -> None:
        self._stop.set()

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    def join(self, timeout: Optional[float] = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def _fail(self, exc: BaseException) -> None:
        self.status = "failed"
        self.error = str(exc)
        logger.error("%s adapter on %s failed: %s", self.role, self.channel, exc)


def run_source(adapter, channel: str, bus: Bus, producer: Optional[str] = None) -> AdapterHandle:
    """Publish every item of *adapter* on *channel* in a background thread."""
    handle = AdapterHandle("source", channel, adapter)
    producer = producer or f"source:{channel}"

    def loop():
        handle.status = "running"
        try:
            for payload in adapter.items():
                if handle.stopped:
                    break
                bus.publish(channel, payload, producer=producer)
                handle.count += 1
                if adapter.interval_s and handle._stop.wait(adapter.interval_s):
                    break
            handle.status = "stopped" if handle.stopped else "done"
        except BusClosed:
            handle.status = "stopped"
        except Exception as exc:
            handle._fail(exc)
        finally:
            if not bus._shutdown:
                bus.close_channel(channel)

    handle._thread = threading.Thread(target=loop, name=f"source {channel}", daemon=True)
    handle._thread.start()
    return handle


def run_sink(adapter, channel: str, bus: Bus, subscription=None) -> AdapterHandle:
    """Drain *channel* into *adapter* in a background thread."""
    handle = AdapterHandle("sink", channel, adapter)
    sub = subscription or bus.subscribe(channel)
    try:
        adapter.open()
    except Exception as exc:
        handle._fail(exc)
        sub.close()
        return handle

    def loop():
        handle.status = "running"
        try:
            while not handle.stopped:
                msg = sub.get(timeout=0.1)
                if msg is None:
                    if sub.ended or bus._shutdown:
                        break
                    continue
                adapter.write(msg.payload)
                handle.count += 1
            handle.status = "stopped" if handle.stopped else "done"
        except Exception as exc:
            handle._fail(exc)
        finally:
            sub.close()
            try:
                adapter.close()
            except Exception as exc:  # pragma: no cover
                logger.warning("closing sink on %s: %s", channel, exc)

    handle._thread = threading.Thread(target=loop, name=f"sink {channel}", daemon=True)
    handle._thread.start()
    return handle


def run_adapter(decl, bus: Bus) -> AdapterHandle:
    """Start the adapter described by a source or sink declaration."""
    adapter = make_adapter(decl.adapter, decl.role, decl.params, bus.kind(decl.channel))
    if decl.role == "source":
        return run_source(adapter, decl.channel, bus)
    return run_sink(adapter, decl.channel, bus)
