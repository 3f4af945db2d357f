"""One thread per process, polling channels in a shuffled order.

A waiting process repeatedly tries to take an acceptable head message from
each of its channels, in the order given by :func:`naive_poll_order`, then
checks its deadline and sleeps for ``poll_interval``.  The main thread
watches for quiescence: every live thread blocked without a deadline and no
progress since each of them last looked.
"""

from __future__ import annotations

import random
import threading
import time
import zlib
from typing import Sequence, TypeVar

from ..channels import Waiter
from ..process import ProcNode
from .base import CONTINUE, Engine, EngineConfig, Proc

T = TypeVar("T")


def naive_poll_order(chans: Sequence[T], seed: int, round: int) -> list[T]:
    """A permutation of ``chans`` that depends only on ``(seed, round)``."""
    out = list(chans)
    if len(out) > 1:
        random.Random(f"{seed}/{round}").shuffle(out)
    return out


class NaiveEngine(Engine):
    name = "naive"

    def __init__(self, cfg: EngineConfig | None = None) -> None:
        super().__init__(cfg)
        self._lock = threading.Lock()
        self._threads: dict[str, threading.Thread] = {}
        self._blocked: dict[str, tuple[int, bool]] = {}
        self._version = 0
        self._t0 = time.monotonic()

    def _now(self) -> float:
        return round((time.monotonic() - self._t0) / self.cfg.tick, 3)

    def _progress(self) -> None:
        with self._lock:
            self._version += 1

    def _spawn(self, proc: Proc) -> None:
        t = threading.Thread(target=self._main, args=(proc,), name=proc.pid, daemon=True)
        with self._lock:
            self._threads[proc.pid] = t
            self._version += 1
        t.start()

    def _wake(self, proc: Proc, node: ProcNode) -> None:  # never called: no parked waiters
        raise AssertionError("naive engine does not park waiters")

    def _main(self, proc: Proc) -> None:
        while not self._stop and self._step(proc) == CONTINUE:
            pass

    def _execute(self, root: Proc) -> None:
        self._t0 = time.monotonic()
        self._spawn(root)
        horizon = self.cfg.max_time
        while not self._stop:
            time.sleep(self.cfg.poll_interval)
            with self._lock:
                live = [pid for pid, t in self._threads.items() if t.is_alive()]
                if not live:
                    break
                if all(self._quiet(pid) for pid in live):
                    break
            if horizon is not None and self._now() >= horizon:
                break
        self._stop = True
        for t in list(self._threads.values()):
            t.join()

    def _quiet(self, pid: str) -> bool:
        b = self._blocked.get(pid)
        return b is not None and b[0] == self._version and not b[1]

    def _do_wait(self, proc: Proc, node) -> ProcNode | None:
        w: Waiter = self._make_waiter(proc, node)
        self.registry.track(w)
        seed = self.cfg.seed ^ zlib.crc32(proc.pid.encode())
        try:
            while not self._stop:
                seen = self._version
                for cid in naive_poll_order(w.channels, seed, proc.poll_rounds):
                    env = self.registry.try_take(cid, w.accepts)
                    if env is not None:
                        w.try_claim()
                        w.resolve()
                        self._emit_deliver(w, cid, env)
                        self._progress()
                        return self._dispatch(lambda: w.dispatch_message(cid, env))
                proc.poll_rounds += 1
                if w.deadline is not None and self._now() >= w.deadline:
                    w.try_claim()
                    w.resolve()
                    self._progress()
                    return self._dispatch(w.dispatch_timeout)
                with self._lock:
                    self._blocked[proc.pid] = (seen, w.deadline is not None)
                time.sleep(self.cfg.poll_interval)
        finally:
            with self._lock:
                self._blocked.pop(proc.pid, None)
        return None
