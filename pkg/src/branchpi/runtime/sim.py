"""Single-threaded engine with a virtual clock and a seeded scheduler.

At every step one runnable item is picked at random (from a
``random.Random(seed)``) and advanced by one node.  The clock jumps to the
next deadline only when nothing is runnable at the current tick.

A timer firing is two runnable items, a claim and then a resolve, so that a
sender scheduled in between sees the waiter in ``Claiming`` and queues its
message.  That is how the simulator reproduces the message-vs-timeout race of
the threaded engines.
"""

from __future__ import annotations

import contextlib
import gc
import heapq
import itertools
import random
from typing import Iterable

from ..channels import ClaimOutcome, Waiter, WaiterState
from ..process import ProcNode
from . import trace as tr
from .base import CONTINUE, Engine, EngineConfig, Proc


class _Claim:
    __slots__ = ("waiter",)

    def __init__(self, waiter: Waiter) -> None:
        self.waiter = waiter


class _Resolve:
    __slots__ = ("waiter",)

    def __init__(self, waiter: Waiter) -> None:
        self.waiter = waiter


class SimEngine(Engine):
    name = "sim"

    def __init__(self, cfg: EngineConfig | None = None) -> None:
        super().__init__(cfg)
        self.now = 0
        self.rng = random.Random(self.cfg.seed)
        self.runnable: list = []
        self.timers: list[tuple[int, int, Waiter]] = []
        self._tie = itertools.count()
        self._emit_lock = contextlib.nullcontext()  # single-threaded

    def _now(self) -> int:
        return self.now

    def _spawn(self, proc: Proc) -> None:
        self.runnable.append(proc)

    def _wake(self, proc: Proc, node: ProcNode) -> None:
        proc.node = node
        self.runnable.append(proc)

    def _parked(self, proc: Proc, w: Waiter) -> None:
        if w.deadline is None:
            return
        if w.deadline <= self.now:
            self.runnable.append(_Claim(w))
        else:
            heapq.heappush(self.timers, (w.deadline, next(self._tie), w))

    def _pick(self):
        items = self.runnable
        i = int(self.rng.random() * len(items))
        items[i], items[-1] = items[-1], items[i]
        return items.pop()

    def run(self, program: ProcNode, channels: Iterable[str] = ()) -> tr.Trace:
        # A run allocates many short-lived closures while the trace keeps
        # growing, so periodic collections rescan an ever larger live set.
        # Most garbage here is freed by reference counting anyway, so the
        # collector stays off until the run returns.
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            return super().run(program, channels)
        finally:
            if was_enabled:
                gc.enable()

    def _execute(self, root: Proc) -> None:
        self._loop(root)

    def _loop(self, root: Proc) -> None:
        self.runnable.append(root)
        horizon = self.cfg.max_time
        while not self._stop:
            while self.runnable and not self._stop:
                item = self._pick()
                if isinstance(item, Proc):
                    if self._step(item) == CONTINUE:
                        self.runnable.append(item)
                elif isinstance(item, _Claim):
                    self._claim(item.waiter)
                else:
                    self._fire_timeout(item.waiter)
            if self._stop:
                break
            while self.timers and self.timers[0][2].state is WaiterState.RESOLVED:
                heapq.heappop(self.timers)
            if not self.timers:
                break
            t = self.timers[0][0]
            if horizon is not None and t > horizon:
                break
            self.now = t
            while self.timers and self.timers[0][0] == t:
                self.runnable.append(_Claim(heapq.heappop(self.timers)[2]))

    def _claim(self, w: Waiter) -> None:
        out = w.try_claim()
        if out is ClaimOutcome.CLAIMED:
            self.runnable.append(_Resolve(w))
        elif out is ClaimOutcome.BUSY:
            heapq.heappush(self.timers, (self.now + 1, next(self._tie), w))
