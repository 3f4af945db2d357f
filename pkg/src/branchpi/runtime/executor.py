"""Worker-pool engine with a dedicated timer service.

A fixed number of worker threads take runnable processes from a shared
queue and run each one until it parks or ends.  One timer thread keeps the
deadlines of parked waiters in a heap, claims expired waiters and retries
after ``retry_delay`` when a claim finds the waiter busy.  The timer thread
is also the one that decides the run is over: no active process, no live
timer and no claim in flight.
"""

from __future__ import annotations

import heapq
import itertools
import math
import threading
import time
from collections import deque

from ..channels import ClaimOutcome, Waiter, WaiterState
from ..process import ProcNode
from .base import CONTINUE, Engine, EngineConfig, Proc


class ExecutorEngine(Engine):
    name = "executor"

    def __init__(self, cfg: EngineConfig | None = None) -> None:
        super().__init__(cfg)
        self._cv = threading.Condition()
        self._runq: deque[Proc] = deque()
        self._active = 0
        self._timers: list[tuple[float, int, Waiter]] = []
        self._tie = itertools.count()
        self._inflight = 0
        self._done = False
        self._t0 = time.monotonic()

    def _now(self) -> float:
        return round((time.monotonic() - self._t0) / self.cfg.tick, 3)

    def _spawn(self, proc: Proc) -> None:
        with self._cv:
            self._runq.append(proc)
            self._active += 1
            self._cv.notify_all()

    def _wake(self, proc: Proc, node: ProcNode) -> None:
        proc.node = node
        self._spawn(proc)

    def _parked(self, proc: Proc, w: Waiter) -> None:
        if w.deadline is None:
            return
        with self._cv:
            heapq.heappush(self._timers, (w.deadline, next(self._tie), w))
            self._cv.notify_all()

    def _execute(self, root: Proc) -> None:
        self._t0 = time.monotonic()
        self._spawn(root)
        workers = [threading.Thread(target=self._worker, name=f"worker-{i}", daemon=True) for i in range(self.cfg.workers)]
        for t in workers:
            t.start()
        self._timer_loop()
        for t in workers:
            t.join()

    def _worker(self) -> None:
        cv = self._cv
        while True:
            with cv:
                while not self._runq and not self._done:
                    cv.wait()
                if self._done:
                    return
                proc = self._runq.popleft()
            while self._step(proc) == CONTINUE and not self._stop:
                pass
            with cv:
                self._active -= 1
                cv.notify_all()

    def _timer_loop(self) -> None:
        cv = self._cv
        horizon = self.cfg.max_time
        retry = self.cfg.retry_delay / self.cfg.tick
        with cv:
            while True:
                while self._timers and self._timers[0][2].state is WaiterState.RESOLVED:
                    heapq.heappop(self._timers)
                now = self._now()
                if self._stop or (horizon is not None and now >= horizon):
                    self._stop = True
                    break
                if self._active == 0 and self._inflight == 0 and not self._timers:
                    break
                if self._timers and self._timers[0][0] <= now:
                    w = heapq.heappop(self._timers)[2]
                    self._inflight += 1
                    cv.release()
                    try:
                        out = w.try_claim()
                        if out is ClaimOutcome.CLAIMED:
                            self._fire_timeout(w)
                    finally:
                        cv.acquire()
                        self._inflight -= 1
                    if out is ClaimOutcome.BUSY:
                        heapq.heappush(self._timers, (now + retry, next(self._tie), w))
                    continue
                wait = math.inf
                if self._timers:
                    wait = (self._timers[0][0] - now) * self.cfg.tick
                if horizon is not None:
                    wait = min(wait, (horizon - now) * self.cfg.tick)
                cv.wait(None if wait == math.inf else max(wait, 0.0))
            self._done = True
            cv.notify_all()
