"""Runnable process terms and the DSL that builds them.

A process is a tree of immutable nodes whose continuations are suspended
host functions, so recursive programs stay finite.  Engines force one
continuation at a time and interpret the node it returns.

    >>> from branchpi.process import *
    >>> agency = branch([c1], [case("Accept", UNIT, lambda _: send(c2, "ticket")),
    ...                        case("Reject", UNIT, lambda _: end())])
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence, Union

from .protocol import (
    BranchT,
    Capability,
    Case,
    ChanT,
    DiagKind,
    TOP,
    TypeExpr,
    branch_type_valid,
    subsumes,
)
from .values import ChanRef, Labelled, Value, inhabits


@dataclass(frozen=True)
class ChanParam:
    """A channel named by the program and bound to a real channel at spawn."""

    name: str
    capability: Capability = Capability.INOUT
    payload: TypeExpr = TOP

    def __str__(self) -> str:
        return self.name


ChanExpr = Union[ChanParam, ChanRef, str]


def chan_capability(ch: ChanExpr) -> Capability:
    return Capability.INOUT if isinstance(ch, str) else ch.capability


def chan_payload(ch: ChanExpr) -> TypeExpr:
    return TOP if isinstance(ch, str) else ch.payload


def chan_label(ch: ChanExpr) -> str:
    return ch if isinstance(ch, str) else str(ch)


Thunk = Callable[[], "ProcNode"]
Cont = Callable[[Value], "ProcNode"]


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Send:
    chan: ChanExpr
    value: Value
    cont: Thunk


@dataclass(frozen=True)
class Recv:
    chan: ChanExpr
    cont: Cont
    timeout: int | None = None


@dataclass(frozen=True)
class MatchCase:
    """A branch arm: ``arg`` is the runtime test applied to the payload."""

    label: str
    arg: TypeExpr
    cont: Cont

    def matches(self, v: Value) -> bool:
        return isinstance(v, Labelled) and v.label == self.label and inhabits(v.payload, self.arg)


@dataclass(frozen=True)
class Branch:
    """Build with :func:`mk_branch`; direct construction skips validation."""

    chans: tuple[ChanExpr, ...]
    cases: tuple[MatchCase, ...]
    timeout: int | None = None

    def select(self, v: Value) -> int | None:
        for i, c in enumerate(self.cases):
            if c.matches(v):
                return i
        return None

    def accepts(self, v: Value) -> bool:
        return self.select(v) is not None


@dataclass(frozen=True)
class CatchTimeout:
    inner: Thunk
    on_timeout: Thunk


@dataclass(frozen=True)
class Par:
    left: "ProcNode"
    right: "ProcNode"


@dataclass(frozen=True)
class Rec:
    var: str
    body: Thunk


@dataclass(frozen=True)
class Loop:
    var: str


@dataclass(frozen=True)
class NewChan:
    """Create a fresh channel and pass a :class:`ChanRef` to ``cont``."""

    payload: TypeExpr
    cont: Cont


ProcNode = Union[End, Send, Recv, Branch, CatchTimeout, Par, Rec, Loop, NewChan]
WAITABLE = (Recv, Branch)


class ConstructionErrorKind(str, Enum):
    EMPTY_CHANNELS = "EmptyChannels"
    EMPTY_CASES = "EmptyCases"
    NOT_INPUT_CHANNEL = "NotInputChannel"
    NOT_OUTPUT_CHANNEL = "NotOutputChannel"
    UNCOVERED_LABEL = "UncoveredLabel"
    PAYLOAD_MISMATCH = "PayloadMismatch"
    UNLABELLED_PAYLOAD = "UnlabelledPayload"
    BAD_DURATION = "BadDuration"
    NOT_CALLABLE = "NotCallable"

    def __str__(self) -> str:
        return self.value


class ConstructionError(ValueError):
    def __init__(self, kind: ConstructionErrorKind, message: str = "", label: str | None = None):
        super().__init__(f"{kind}: {message}" if message else str(kind))
        self.kind = kind
        self.label = label


class ShadowedCaseWarning(UserWarning):
    """A branch arm can never be selected because earlier arms catch its inputs."""


class UnboundLoopVar(LookupError):
    pass


def _check_duration(timeout: int | None) -> None:
    if timeout is None:
        return
    if isinstance(timeout, bool) or not isinstance(timeout, int) or timeout < 0:
        raise ConstructionError(ConstructionErrorKind.BAD_DURATION, f"timeout must be a non-negative int of ticks, got {timeout!r}")


_DIAG_TO_ERROR = {
    DiagKind.UNCOVERED_LABEL: ConstructionErrorKind.UNCOVERED_LABEL,
    DiagKind.PAYLOAD_MISMATCH: ConstructionErrorKind.PAYLOAD_MISMATCH,
    DiagKind.UNLABELLED_PAYLOAD: ConstructionErrorKind.UNLABELLED_PAYLOAD,
    DiagKind.BAD_CAPABILITY: ConstructionErrorKind.NOT_INPUT_CHANNEL,
}


def shadowed_cases(cases: Sequence[MatchCase | Case]) -> list[int]:
    """Indices of arms whose every input is caught by an earlier arm."""
    out = []
    for i, c in enumerate(cases):
        if any(p.label == c.label and subsumes(c.arg, p.arg) for p in cases[:i]):
            out.append(i)
    return out


# Programs rebuild the same branch shape on every loop iteration, usually
# from the same type objects, so results are memoised by object identity.
_SHAPE_MEMO: dict[tuple, tuple] = {}


def _shape_check(chans: tuple[ChanExpr, ...], cases: tuple[MatchCase, ...]) -> tuple[tuple, tuple[int, ...]]:
    caps = tuple(chan_capability(c) for c in chans)
    parts = tuple(chan_payload(c) for c in chans) + tuple(c.arg for c in cases)
    key = (caps, tuple(c.label for c in cases), tuple(map(id, parts)))
    hit = _SHAPE_MEMO.get(key)
    if hit is not None and all(a is b for a, b in zip(hit[0], parts)):
        return hit[1]
    shape = BranchT(
        tuple(ChanT(cap, chan_payload(ch)) for cap, ch in zip(caps, chans)),
        tuple(Case(c.label, c.arg) for c in cases),
    )
    result = (tuple(branch_type_valid(shape, ordered=True)), tuple(shadowed_cases(cases)))
    if len(_SHAPE_MEMO) > 4096:
        _SHAPE_MEMO.clear()
    _SHAPE_MEMO[key] = (parts, result)
    return result


def mk_branch(chans: Sequence[ChanExpr], cases: Sequence[MatchCase], timeout: int | None = None) -> Branch:
    chans = tuple(chans)
    cases = tuple(cases)
    if not chans:
        raise ConstructionError(ConstructionErrorKind.EMPTY_CHANNELS, "branch needs at least one channel")
    if not cases:
        raise ConstructionError(ConstructionErrorKind.EMPTY_CASES, "branch needs at least one case")
    for ch in chans:
        if not chan_capability(ch).can_receive:
            raise ConstructionError(ConstructionErrorKind.NOT_INPUT_CHANNEL, f"{chan_label(ch)} is output-only")
    for c in cases:
        if not callable(c.cont):
            raise ConstructionError(ConstructionErrorKind.NOT_CALLABLE, f"continuation for {c.label} is not callable")
    _check_duration(timeout)

    problems, shadowed = _shape_check(chans, cases)
    for d in problems:
        raise ConstructionError(_DIAG_TO_ERROR.get(d.kind, ConstructionErrorKind.UNCOVERED_LABEL), d.message, d.label)
    for i in shadowed:
        warnings.warn(f"case {i} ({cases[i].label}) is shadowed by an earlier case", ShadowedCaseWarning, stacklevel=2)
    return Branch(chans, cases, timeout)


def mk_catch_timeout(inner: Thunk, on_timeout: Thunk) -> CatchTimeout:
    # inner is suspended; the engine checks that it yields a timed Recv/Branch
    if not callable(inner) or not callable(on_timeout):
        raise ConstructionError(ConstructionErrorKind.NOT_CALLABLE, "catch_timeout takes two thunks")
    return CatchTimeout(inner, on_timeout)


def unfold(p: ProcNode, env: dict[str, Thunk]) -> ProcNode:
    """One unfolding step: ``Rec`` binds and enters its body, ``Loop`` re-enters."""
    if isinstance(p, Rec):
        env[p.var] = p.body
        return p.body()
    if isinstance(p, Loop):
        try:
            body = env[p.var]
        except KeyError:
            raise UnboundLoopVar(p.var) from None
        return body()
    return p


def unfold_all(p: ProcNode, env: dict[str, Thunk], limit: int = 10_000) -> ProcNode:
    for _ in range(limit):
        if not isinstance(p, (Rec, Loop)):
            return p
        p = unfold(p, env)
    raise RecursionError("recursion does not reach a process action")


# -- DSL --------------------------------------------------------------------

_END = End()


def end() -> End:
    return _END


def _done() -> End:
    return _END


def send(chan: ChanExpr, value: Value, then: Thunk = _done) -> Send:
    if not chan_capability(chan).can_send:
        raise ConstructionError(ConstructionErrorKind.NOT_OUTPUT_CHANNEL, f"{chan_label(chan)} is input-only")
    return Send(chan, value, then)


def recv(chan: ChanExpr, cont: Cont, timeout: int | None = None) -> Recv:
    if not chan_capability(chan).can_receive:
        raise ConstructionError(ConstructionErrorKind.NOT_INPUT_CHANNEL, f"{chan_label(chan)} is output-only")
    _check_duration(timeout)
    return Recv(chan, cont, timeout)


def case(label: str, arg: TypeExpr, cont: Cont) -> MatchCase:
    return MatchCase(label, arg, cont)


branch = mk_branch
catch_timeout = mk_catch_timeout


def par(left: ProcNode, right: ProcNode, *more: ProcNode) -> Par:
    if more:
        return Par(left, par(right, *more))
    return Par(left, right)


def rec(var: str, body: Thunk) -> Rec:
    return Rec(var, body)


def loop(var: str) -> Loop:
    return Loop(var)


def new_chan(payload: TypeExpr, cont: Cont) -> NewChan:
    return NewChan(payload, cont)


def seq_sends(sends: Sequence[tuple[ChanExpr, Value]], then: Thunk = _done) -> ProcNode:
    """Send each ``(chan, value)`` in order, then continue with ``then``."""
    node: Thunk = then
    for ch, v in reversed(sends):
        node = (lambda ch=ch, v=v, nxt=node: send(ch, v, nxt))
    return node()


def delay(ticks: int, then: Thunk) -> ProcNode:
    """Wait ``ticks`` on a private channel, then continue."""
    return new_chan(TOP, lambda c: catch_timeout(lambda: recv(c, lambda _: end(), timeout=ticks), then))


def describe(p: ProcNode) -> str:
    """One-line rendering for traces and diagnostics."""
    if isinstance(p, End):
        return "end"
    if isinstance(p, Send):
        return f"send({chan_label(p.chan)}, {p.value})"
    if isinstance(p, Recv):
        t = f", timeout={p.timeout}" if p.timeout is not None else ""
        return f"recv({chan_label(p.chan)}{t})"
    if isinstance(p, Branch):
        chans = ", ".join(chan_label(c) for c in p.chans)
        labels = " | ".join(c.label for c in p.cases)
        t = f", timeout={p.timeout}" if p.timeout is not None else ""
        return f"branch(({chans}), {labels}{t})"
    if isinstance(p, CatchTimeout):
        return "catch_timeout(...)"
    if isinstance(p, Par):
        return f"par({describe(p.left)}, {describe(p.right)})"
    if isinstance(p, Rec):
        return f"rec {p.var}"
    if isinstance(p, Loop):
        return f"loop {p.var}"
    if isinstance(p, NewChan):
        return "chan()"
    return repr(p)


def kind_name(p: Any) -> str:
    return type(p).__name__
