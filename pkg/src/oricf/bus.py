"""In-process publish/subscribe bus with typed, single-producer channels."""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from .payloads import kind_matches

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 64

_EOS = object()


class BusError(Exception):
    pass


class UnknownChannel(BusError):
    pass


class KindMismatch(BusError):
    pass


class NotProducer(BusError):
    pass


class BusClosed(BusError):
    """The bus was shut down while an operation was blocked."""


@dataclass(frozen=True)
class Message:
    channel: str
    seq: int
    timestamp: int  # ns since bus creation
    payload: Any


class Subscription:
    """FIFO view of one channel for a single consumer.

    A delivered message stays *pending* on the bus until the consumer asks
    for the next one (or closes the subscription); :meth:`Bus.wait_idle`
    relies on that to detect quiescence.
    """

    def __init__(self, bus: "Bus", channel: str, capacity: int):
        self.bus = bus
        self.channel = channel
        self.capacity = capacity
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._holding = False
        self._ended = False
        self.closed = False

    # producer side, called under the channel lock
    def _put(self, item) -> None:
        with self._cond:
            while len(self._items) >= self.capacity and not self.closed:
                if self.bus._shutdown:
                    raise BusClosed("bus shut down")
                self._cond.wait(0.05)
            if self.closed:
                return
            self._items.append(item)
            if item is not _EOS:
                self.bus._pending_add(1)
            self._cond.notify_all()

    def _release(self) -> None:
        if self._holding:
            self._holding = False
            self.bus._pending_add(-1)

    def get(self, timeout: Optional[float] = None) -> Optional[Message]:
        """Next message, or ``None`` at end of stream or on timeout.

        Check :attr:`ended` to tell the two apart.
        """
        self._release()
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._items:
                if self._ended or self.closed or self.bus._shutdown:
                    return None
                remaining = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)
            item = self._items.popleft()
            self._cond.notify_all()
        if item is _EOS:
            self._ended = True
            return None
        self._holding = True
        return item

    @property
    def ended(self) -> bool:
        return self._ended or self.closed

    def __iter__(self):
        while True:
            msg = self.get()
            if msg is None:
                if self.ended or self.bus._shutdown:
                    return
                continue
            yield msg

    def close(self) -> None:
        self._release()
        self.bus._unsubscribe(self)
        with self._cond:
            dropped = sum(1 for it in self._items if it is not _EOS)
            self._items.clear()
            self.closed = True
            self._cond.notify_all()
        if dropped:
            self.bus._pending_add(-dropped)


class _Channel:
    def __init__(self, name: str, kind: str):
        self.name = name
        self.kind = kind
        self.seq = 0
        self.lock = threading.Lock()
        self.subscribers: list[Subscription] = []
        self.producer: Optional[str] = None
        self.closed = False
        self.latest: Optional[Message] = None
        self.history: list[Message] = []


class Bus:
    """Typed channels with lossless, blocking fan-out.

    ``channels`` is an iterable of ``(name, kind)`` pairs or objects with
    ``name`` and ``kind`` attributes.  With ``record=True`` every published
    message is kept in :meth:`history`.
    """

    def __init__(self, channels: Iterable = (), capacity: int = DEFAULT_CAPACITY, record: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.record = record
        self._epoch = time.monotonic_ns()
        self._channels: dict[str, _Channel] = {}
        self._pending = 0
        self._idle = threading.Condition()
        self._shutdown = False
        for decl in channels:
            name, kind = (decl.name, decl.kind) if hasattr(decl, "name") else decl
            if name in self._channels:
                raise BusError(f"duplicate channel {name!r}")
            self._channels[name] = _Channel(name, kind)

    @property
    def channels(self) -> list[str]:
        return list(self._channels)

    def kind(self, channel: str) -> str:
        return self._get(channel).kind

    def _get(self, channel: str) -> _Channel:
        try:
            return self._channels[channel]
        except KeyError:
            raise UnknownChannel(f"unknown channel {channel!r}") from None

    def claim(self, channel: str, producer: str) -> None:
        """Register *producer* as the only writer of *channel*."""
        ch = self._get(channel)
        with ch.lock:
            if ch.producer is not None and ch.producer != producer:
                raise NotProducer(f"channel {channel!r} already produced by {ch.producer!r}")
            ch.producer = producer

    def publish(self, channel: str, payload, producer: Optional[str] = None) -> int:
        """Publish *payload*, blocking while any subscriber queue is full."""
        ch = self._get(channel)
        if not kind_matches(ch.kind, payload):
            raise KindMismatch(
                f"channel {channel!r} carries {ch.kind}, got {getattr(payload, 'kind', type(payload).__name__)}"
            )
        with ch.lock:
            if ch.producer is not None and producer != ch.producer:
                raise NotProducer(f"{producer!r} is not the producer of {channel!r}")
            if ch.closed:
                raise BusError(f"channel {channel!r} is closed")
            if self._shutdown:
                raise BusClosed("bus shut down")
            msg = Message(channel, ch.seq, time.monotonic_ns() - self._epoch, payload)
            ch.seq += 1
            ch.latest = msg
            if self.record:
                ch.history.append(msg)
            for sub in list(ch.subscribers):
                sub._put(msg)
        return msg.seq

    def subscribe(self, channel: str, capacity: Optional[int] = None) -> Subscription:
        ch = self._get(channel)
        sub = Subscription(self, channel, capacity or self.capacity)
        with ch.lock:
            if ch.closed:
                sub._ended = True
            ch.subscribers.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        ch = self._channels.get(sub.channel)
        if ch is None:
            return
        with ch.lock:
            if sub in ch.subscribers:
                ch.subscribers.remove(sub)

    def close_channel(self, channel: str) -> None:
        """Mark end of stream; subscribers see it after draining."""
        ch = self._get(channel)
        with ch.lock:
            if ch.closed:
                return
            ch.closed = True
            for sub in list(ch.subscribers):
                try:
                    sub._put(_EOS)
                except BusClosed:
                    pass

    def latest(self, channel: str) -> Optional[Message]:
        return self._get(channel).latest

    def published(self, channel: str) -> int:
        return self._get(channel).seq

    def history(self, channel: str) -> list[Message]:
        return list(self._get(channel).history)

    def _pending_add(self, n: int) -> None:
        with self._idle:
            self._pending += n
            if self._pending <= 0:
                self._idle.notify_all()

    def wait_idle(self, timeout: Optional[float] = None) -> bool:
        """Block until every delivered message has been fully handled."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._idle:
            while self._pending > 0:
                if self._shutdown:
                    return False
                wait = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
                if wait <= 0:
                    return False
                self._idle.wait(wait)
        return True

    def shutdown(self) -> None:
        """Unblock every waiter; further publishes raise :class:`BusClosed`."""
        self._shutdown = True
        with self._idle:
            self._idle.notify_all()
        for ch in self._channels.values():
            for sub in list(ch.subscribers):
                with sub._cond:
                    sub._cond.notify_all()
