"""Channels, parked waiters and the Pending/Claiming/Resolved claim protocol.

Every receive or branch that cannot complete immediately is parked as a
:class:`Waiter` on all of its channels.  Any party that wants to resolve it
(a sender on one of those channels, or the timer service) must first win the
``Pending -> Claiming`` transition; only the winner goes on to ``Resolved``
and invokes a continuation, so each waiter is dispatched exactly once.

Locking: each channel has its own lock; a waiter's state has its own leaf
lock.  ``register_waiter`` takes the locks of all its channels in id order,
``send_message`` takes one channel lock, and unlinking a resolved waiter from
its other channels happens after that lock is released.
"""

from __future__ import annotations

import itertools
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable

from .values import Value, label_of


class WaiterState(Enum):
    PENDING = "Pending"
    CLAIMING = "Claiming"
    RESOLVED = "Resolved"


class ClaimOutcome(Enum):
    CLAIMED = "Claimed"
    BUSY = "Busy"
    ALREADY_RESOLVED = "AlreadyResolved"


class ChannelClosed(RuntimeError):
    pass


class BadTimeoutDuration(ValueError):
    """A waiter has a deadline but nothing to run when it expires."""


class IllegalTransition(RuntimeError):
    pass


@dataclass(frozen=True)
class Envelope:
    """A value in flight, tagged with a run-unique message id."""

    msg_id: str
    value: Value

    @property
    def label(self) -> str | None:
        return label_of(self.value)


class Waiter:
    """A parked ``recv`` or ``branch``.

    ``accepts(chan_id, value)`` decides whether a message may resolve the
    waiter; ``on_message(chan_id, envelope)`` and ``on_timeout()`` produce the
    continuation and are each invoked at most once in total.
    """

    def __init__(
        self,
        id: str,
        kind: str,
        channels: Iterable[int],
        accepts: Callable[[int, Value], bool],
        on_message: Callable[[int, Envelope], Any],
        deadline: float | None = None,
        on_timeout: Callable[[], Any] | None = None,
        owner: Any = None,
    ) -> None:
        self.id = id
        self.kind = kind
        self.channels = tuple(channels)
        self.accepts = accepts
        self.on_message = on_message
        self.deadline = deadline
        self.on_timeout = on_timeout
        self.owner = owner
        self.dispatches = 0
        self.history: list[WaiterState] = [WaiterState.PENDING]
        self._state = WaiterState.PENDING
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"Waiter({self.id}, {self.kind}, {self._state.value})"

    @property
    def state(self) -> WaiterState:
        return self._state

    def _move(self, new: WaiterState) -> None:
        self._state = new
        self.history.append(new)

    def try_claim(self) -> ClaimOutcome:
        with self._lock:
            if self._state is WaiterState.PENDING:
                self._move(WaiterState.CLAIMING)
                return ClaimOutcome.CLAIMED
            if self._state is WaiterState.CLAIMING:
                return ClaimOutcome.BUSY
            return ClaimOutcome.ALREADY_RESOLVED

    def release(self) -> None:
        """Back out of a claim (``Claiming -> Pending``)."""
        with self._lock:
            if self._state is not WaiterState.CLAIMING:
                raise IllegalTransition(f"{self.id}: release from {self._state.value}")
            self._move(WaiterState.PENDING)

    def resolve(self) -> None:
        with self._lock:
            if self._state is not WaiterState.CLAIMING:
                raise IllegalTransition(f"{self.id}: resolve from {self._state.value}")
            self._move(WaiterState.RESOLVED)

    def dispatch_message(self, chan: int, env: Envelope) -> Any:
        self.dispatches += 1
        return self.on_message(chan, env)

    def dispatch_timeout(self) -> Any:
        self.dispatches += 1
        return self.on_timeout()


def try_claim(w: Waiter) -> ClaimOutcome:
    return w.try_claim()


@dataclass(frozen=True)
class DeliveredTo:
    waiter: Waiter


@dataclass(frozen=True)
class Queued:
    pass


@dataclass(frozen=True)
class Parked:
    pass


@dataclass(frozen=True)
class ImmediateResolve:
    chan: int
    envelope: Envelope


QUEUED = Queued()
PARKED = Parked()


class Channel:
    __slots__ = ("id", "name", "queue", "waiters", "lock", "closed")

    def __init__(self, id: int, name: str | None = None) -> None:
        self.id = id
        self.name = name
        self.queue: deque[Envelope] = deque()
        self.waiters: list[Waiter] = []
        self.lock = threading.Lock()
        self.closed = False

    @property
    def display(self) -> str:
        return self.name or f"#{self.id}"


class ChannelRegistry:
    """All channels of one run, plus every waiter ever parked on them."""

    def __init__(self) -> None:
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()
        self.channels: dict[int, Channel] = {}
        self.by_name: dict[str, int] = {}
        self.waiters: list[Waiter] = []

    def create_channel(self, name: str | None = None) -> int:
        with self._id_lock:
            if name is not None and name in self.by_name:
                raise ValueError(f"channel {name!r} already exists")
            cid = next(self._ids)
            self.channels[cid] = Channel(cid, name)
            if name is not None:
                self.by_name[name] = cid
        return cid

    def __getitem__(self, cid: int) -> Channel:
        return self.channels[cid]

    def track(self, w: Waiter) -> None:
        with self._id_lock:
            self.waiters.append(w)

    # -- the three concurrent operations --

    def send_message(self, cid: int, env: Envelope) -> DeliveredTo | Queued:
        ch = self.channels[cid]
        winner = None
        with ch.lock:
            if ch.closed:
                raise ChannelClosed(ch.display)
            if not ch.queue:
                for w in ch.waiters:
                    if w.state is not WaiterState.PENDING or not w.accepts(cid, env.value):
                        continue
                    if w.try_claim() is ClaimOutcome.CLAIMED:
                        w.resolve()
                        winner = w
                        break
            if winner is None:
                ch.queue.append(env)
                return QUEUED
            ch.waiters.remove(winner)
        self.unlink(winner, skip=cid)
        return DeliveredTo(winner)

    def register_waiter(self, w: Waiter) -> Parked | ImmediateResolve:
        if w.state is not WaiterState.PENDING:
            raise IllegalTransition(f"{w.id} is not pending")
        if w.deadline is not None and w.on_timeout is None:
            raise BadTimeoutDuration(f"{w.id} has a deadline but no timeout continuation")
        self.track(w)
        chans = [self.channels[c] for c in w.channels]
        ordered = sorted(set(chans), key=lambda c: c.id)
        for ch in ordered:
            ch.lock.acquire()
        try:
            for ch in chans:
                if ch.closed:
                    raise ChannelClosed(ch.display)
                if ch.queue and w.accepts(ch.id, ch.queue[0].value):
                    w.try_claim()
                    w.resolve()
                    return ImmediateResolve(ch.id, ch.queue.popleft())
            for ch in ordered:
                ch.waiters.append(w)
            return PARKED
        finally:
            for ch in reversed(ordered):
                ch.lock.release()

    def unlink(self, w: Waiter, skip: int | None = None) -> None:
        for cid in dict.fromkeys(w.channels):
            if cid == skip:
                continue
            ch = self.channels[cid]
            with ch.lock:
                try:
                    ch.waiters.remove(w)
                except ValueError:
                    pass

    def try_take(self, cid: int, accepts: Callable[[int, Value], bool]) -> Envelope | None:
        """Pop the head of ``cid`` if ``accepts`` it (used by polling receivers)."""
        ch = self.channels[cid]
        with ch.lock:
            if ch.closed:
                raise ChannelClosed(ch.display)
            if ch.queue and accepts(cid, ch.queue[0].value):
                return ch.queue.popleft()
        return None

    def close_all(self) -> None:
        for ch in self.channels.values():
            with ch.lock:
                ch.closed = True

    # -- inspection --

    def residual(self) -> list[tuple[Channel, Envelope]]:
        out = []
        for cid in sorted(self.channels):
            ch = self.channels[cid]
            with ch.lock:
                out.extend((ch, env) for env in ch.queue)
        return out

    def stuck(self) -> list[tuple[Channel, Waiter]]:
        """Channels whose head message some pending waiter would accept."""
        out = []
        for ch in self.channels.values():
            with ch.lock:
                if not ch.queue:
                    continue
                head = ch.queue[0].value
                out.extend((ch, w) for w in ch.waiters if w.state is WaiterState.PENDING and w.accepts(ch.id, head))
        return out

    def linked(self, w: Waiter) -> list[int]:
        return [cid for cid, ch in self.channels.items() if w in ch.waiters]
