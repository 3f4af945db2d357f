"""Interpreter core shared by the three engines.

An engine owns a :class:`ChannelRegistry` and a set of :class:`Proc`
records.  :meth:`Engine._step` interprets exactly one node of one process;
subclasses decide which process steps next, how parked waiters are woken and
how time passes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable

from ..channels import (
    BadTimeoutDuration,
    ChannelClosed,
    ChannelRegistry,
    DeliveredTo,
    Envelope,
    ImmediateResolve,
    Waiter,
)
from ..process import (
    WAITABLE,
    Branch,
    CatchTimeout,
    ChanExpr,
    ChanParam,
    End,
    Loop,
    NewChan,
    Par,
    ProcNode,
    Rec,
    Recv,
    Send,
    UnboundLoopVar,
    describe,
    unfold,
)
from ..protocol import Capability
from ..values import ChanRef, Labelled, Value, label_of
from . import trace as tr

ENGINES = ("naive", "executor", "sim")

CONTINUE = 0
PARKED = 1
ENDED = 2


@dataclass
class EngineConfig:
    """``tick`` is the wall-clock length of one time unit for the threaded
    engines; the simulator's clock counts ticks directly."""

    engine: str = "sim"
    workers: int = 4
    seed: int = 0
    max_steps: int | None = 1_000_000
    poll_interval: float = 0.0005
    tick: float = 0.001
    max_time: int | None = None
    retry_delay: float = 0.001
    drop: Callable[[str, Value], bool] | None = None

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.poll_interval <= 0 or self.tick <= 0:
            raise ValueError("poll_interval and tick must be positive")


@dataclass(frozen=True)
class FaultNode:
    """Internal marker: the next step of this process reports a fault."""

    kind: str
    detail: str = ""


class _Fault(Exception):
    def __init__(self, kind: str, detail: str = "") -> None:
        super().__init__(kind, detail)
        self.kind = kind
        self.detail = detail


class Proc:
    """A running process: current node, loop bindings and id counters.

    Ids are derived from the spawn tree, so they do not depend on the order
    in which a concurrent engine happens to run things.
    """

    __slots__ = ("pid", "node", "loops", "pending_timeout", "_children", "_waits", "_msgs", "poll_rounds")

    def __init__(self, pid: str, node: ProcNode, loops: dict | None = None) -> None:
        self.pid = pid
        self.node = node
        self.loops = loops if loops is not None else {}
        self.pending_timeout = None
        self._children = 0
        self._waits = 0
        self._msgs = 0
        self.poll_rounds = 0

    def child_pid(self) -> str:
        self._children += 1
        return f"{self.pid}.{self._children}"

    def waiter_id(self) -> str:
        self._waits += 1
        return f"{self.pid}:w{self._waits}"

    def msg_id(self) -> str:
        self._msgs += 1
        return f"{self.pid}:m{self._msgs}"

    def __repr__(self) -> str:
        return f"Proc({self.pid}, {describe(self.node) if not isinstance(self.node, FaultNode) else self.node})"


class Engine:
    name = "base"

    def __init__(self, cfg: EngineConfig | None = None) -> None:
        self.cfg = cfg or EngineConfig(engine=self.name)
        self.registry = ChannelRegistry()
        self.events: list[tr.TraceEvent] = []
        self._emit_lock = threading.Lock()
        self._bindings: dict[str, int] = {}
        self._steps = 0
        self._stop = False
        self._budget_reported = False

    # -- hooks for subclasses --

    def _now(self) -> int | float:
        raise NotImplementedError

    def _execute(self, root: Proc) -> None:
        raise NotImplementedError

    def _spawn(self, proc: Proc) -> None:
        raise NotImplementedError

    def _wake(self, proc: Proc, node: ProcNode) -> None:
        raise NotImplementedError

    def _parked(self, proc: Proc, w: Waiter) -> None:
        """Called after ``w`` was linked into its channels."""

    def _progress(self) -> None:
        """Something observable changed (naive quiescence detection)."""

    # -- entry point --

    def run(self, program: ProcNode, channels: Iterable[str] = ()) -> tr.Trace:
        for name in channels:
            self._bindings[name] = self.registry.create_channel(name)
        root = Proc("p0", program)
        self._emit(tr.SPAWN, root)
        self._execute(root)
        self.registry.close_all()
        for ch, env in self.registry.residual():
            self._emit(tr.RESIDUAL, None, chan=ch.display, label=env.label, msg=env.msg_id, value=env.value)
        trace = tr.Trace(self.name, self.cfg.seed, self.events, end_time=self._now())
        for w in self.registry.waiters:
            trace.waiters[w.id] = tr.WaiterStat(w.id, w.kind, w.dispatches, w.state.value, tuple(s.value for s in w.history))
        return trace

    # -- events --

    def _emit(self, kind: str, proc: Proc | None, **fields) -> None:
        with self._emit_lock:
            ev = tr.TraceEvent(len(self.events), self._now(), kind, proc.pid if proc else None, **fields)
            self.events.append(ev)

    def _chan_name(self, cid: int) -> str:
        return self.registry[cid].display

    # -- the interpreter --

    def _resolve(self, ch: ChanExpr) -> int:
        if isinstance(ch, ChanRef):
            if ch.id not in self.registry.channels:
                raise _Fault("UnresolvedChannel", f"no channel #{ch.id}")
            return ch.id
        name = ch.name if isinstance(ch, ChanParam) else ch
        try:
            return self._bindings[name]
        except KeyError:
            raise _Fault("UnresolvedChannel", f"channel {name!r} is not bound") from None

    def _over_budget(self) -> bool:
        self._steps += 1
        if self.cfg.max_steps is not None and self._steps > self.cfg.max_steps:
            with self._emit_lock:
                report = not self._budget_reported
                self._budget_reported = True
            if report:
                self._emit(tr.FAULT, None, fault="StepBudget", detail=f"{self.cfg.max_steps} steps")
            self._stop = True
            return True
        return False

    def _step(self, proc: Proc) -> int:
        if self._stop or self._over_budget():
            return ENDED
        node = proc.node
        try:
            return self._interpret(proc, node)
        except _Fault as f:
            self._emit(tr.FAULT, proc, fault=f.kind, detail=f.detail)
            return ENDED
        except ChannelClosed as exc:
            self._emit(tr.FAULT, proc, fault="ChannelClosed", detail=str(exc))
            return ENDED
        except Exception as exc:  # host code inside a continuation
            self._emit(tr.FAULT, proc, fault="ContinuationError", detail=f"{type(exc).__name__}: {exc}")
            return ENDED

    def _interpret(self, proc: Proc, node: ProcNode) -> int:
        if isinstance(node, Send):
            self._do_send(proc, node)
            proc.node = node.cont()
            return CONTINUE
        if isinstance(node, WAITABLE):
            nxt = self._do_wait(proc, node)
            if nxt is None:
                return PARKED
            proc.node = nxt
            return CONTINUE
        if isinstance(node, (Rec, Loop)):
            try:
                proc.node = unfold(node, proc.loops)
            except UnboundLoopVar as exc:
                raise _Fault("UnboundLoopVar", f"loop to {exc}") from None
            return CONTINUE
        if isinstance(node, CatchTimeout):
            inner = node.inner()
            try:
                for _ in range(1000):
                    if not isinstance(inner, (Rec, Loop)):
                        break
                    inner = unfold(inner, proc.loops)
            except UnboundLoopVar as exc:
                raise _Fault("UnboundLoopVar", f"loop to {exc}") from None
            if not isinstance(inner, WAITABLE):
                raise _Fault("BadTimeoutInner", f"catch_timeout wraps {describe(inner)}")
            if inner.timeout is None:
                raise _Fault("BadTimeoutDuration", f"catch_timeout wraps {describe(inner)} without a duration")
            proc.pending_timeout = node.on_timeout
            proc.node = inner
            return CONTINUE
        if isinstance(node, Par):
            child = Proc(proc.child_pid(), node.right, dict(proc.loops))
            self._emit(tr.SPAWN, child)
            self._progress()
            proc.node = node.left
            self._spawn(child)
            return CONTINUE
        if isinstance(node, NewChan):
            cid = self.registry.create_channel()
            proc.node = node.cont(ChanRef(cid, Capability.INOUT, node.payload))
            return CONTINUE
        if isinstance(node, End):
            self._emit(tr.PROC_END, proc)
            self._progress()
            return ENDED
        if isinstance(node, FaultNode):
            raise _Fault(node.kind, node.detail)
        raise _Fault("BadNode", f"not a process node: {node!r}")

    def _do_send(self, proc: Proc, node: Send) -> None:
        cid = self._resolve(node.chan)
        env = Envelope(proc.msg_id(), node.value)
        chan = self._chan_name(cid)
        self._emit(tr.SEND, proc, chan=chan, label=env.label, msg=env.msg_id, value=env.value)
        self._progress()
        if self.cfg.drop is not None and self.cfg.drop(chan, env.value):
            self._emit(tr.DROPPED, proc, chan=chan, label=env.label, msg=env.msg_id, value=env.value)
            return
        out = self.registry.send_message(cid, env)
        if isinstance(out, DeliveredTo):
            w = out.waiter
            self._emit_deliver(w, cid, env)
            self._wake(w.owner, self._dispatch(lambda: w.dispatch_message(cid, env)))

    def _emit_deliver(self, w: Waiter, cid: int, env: Envelope) -> None:
        self._emit(tr.DELIVER, w.owner, chan=self._chan_name(cid), label=env.label, waiter=w.id, msg=env.msg_id, value=env.value)

    def _dispatch(self, fn: Callable[[], ProcNode]) -> ProcNode:
        try:
            return fn()
        except Exception as exc:
            return FaultNode("ContinuationError", f"{type(exc).__name__}: {exc}")

    def _make_waiter(self, proc: Proc, node: Recv | Branch) -> Waiter:
        handler = proc.pending_timeout
        proc.pending_timeout = None
        if node.timeout is not None and handler is None:
            raise _Fault("UncaughtTimeout", f"{describe(node)} has a timeout but no catch_timeout")
        if handler is not None and node.timeout is None:
            raise _Fault("BadTimeoutDuration", f"{describe(node)} has no duration")
        wid = proc.waiter_id()

        if isinstance(node, Recv):
            cids = (self._resolve(node.chan),)

            def accepts(cid: int, v: Value) -> bool:
                return True

            def on_message(cid: int, env: Envelope) -> ProcNode:
                self._emit(tr.RECV_DONE, proc, chan=self._chan_name(cid), label=env.label, waiter=wid)
                return node.cont(env.value)
        else:
            cids = tuple(self._resolve(c) for c in node.chans)

            # the case chosen when a value was accepted, reused on dispatch
            chosen: list = [None, None]

            def accepts(cid: int, v: Value) -> bool:
                idx = node.select(v)
                chosen[0], chosen[1] = v, idx
                return idx is not None

            def on_message(cid: int, env: Envelope) -> ProcNode:
                idx = chosen[1] if chosen[0] is env.value else node.select(env.value)
                self._emit(tr.BRANCH_TAKEN, proc, chan=self._chan_name(cid), label=label_of(env.value), waiter=wid, case_index=idx)
                payload = env.value.payload if isinstance(env.value, Labelled) else env.value
                return node.cases[idx].cont(payload)

        on_timeout = None
        deadline = None
        if handler is not None:
            deadline = self._now() + node.timeout

            def on_timeout() -> ProcNode:
                self._emit(tr.TIMEOUT_FIRED, proc, waiter=wid)
                return handler()

        kind = "recv" if isinstance(node, Recv) else "branch"
        return Waiter(wid, kind, cids, accepts, on_message, deadline, on_timeout, owner=proc)

    def _do_wait(self, proc: Proc, node: Recv | Branch) -> ProcNode | None:
        w = self._make_waiter(proc, node)
        try:
            out = self.registry.register_waiter(w)
        except BadTimeoutDuration as exc:
            raise _Fault("BadTimeoutDuration", str(exc)) from None
        if isinstance(out, ImmediateResolve):
            self._emit_deliver(w, out.chan, out.envelope)
            self._progress()
            return self._dispatch(lambda: w.dispatch_message(out.chan, out.envelope))
        self._parked(proc, w)
        return None

    def _fire_timeout(self, w: Waiter) -> None:
        """Finish a timeout whose claim succeeded and resume the owner."""
        w.resolve()
        self.registry.unlink(w)
        self._wake(w.owner, self._dispatch(w.dispatch_timeout))
