"""Check a process tree against a behavioural type.

Continuations are host functions, so the checker explores them: each input
position is fed one canonical value per member of its payload type
(:func:`synth_values`) and the node the continuation returns is checked
against the corresponding type continuation.  Recursion is handled
coinductively: once a ``(process var, type var)`` pair has been entered on a
path, meeting it again on that path is assumed to conform.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .process import (
    Branch,
    CatchTimeout,
    ChanExpr,
    End,
    Loop,
    NewChan,
    Par,
    ProcNode,
    Rec,
    Recv,
    Send,
    chan_label,
    kind_name,
)
from .protocol import (
    Base,
    Bottom,
    BranchT,
    ChanT,
    DiagKind,
    Diagnostic,
    InT,
    LabelledT,
    NewChanT,
    NilT,
    OutT,
    ParT,
    RecordT,
    RecT,
    TimeoutT,
    Top,
    TypeExpr,
    UnionT,
    VarT,
    head_name,
    subsumes,
    well_formed,
)
from .values import ChanRef, Labelled, Record, Value, render, type_of

MAX_DEPTH = 400
MAX_PRODUCT = 64


class Uninhabitable(ValueError):
    pass


@dataclass
class ConformanceEnv:
    """``channels`` types the free channel names; ``loops`` binds recursion
    variables that the checked type refers to but does not itself bind."""

    channels: dict[str, ChanT] = field(default_factory=dict)
    loops: dict[str, RecT] = field(default_factory=dict)


_BASE_VALUES = {"unit": None, "bool": False, "int": 0, "string": ""}


class _Synth:
    def __init__(self) -> None:
        self._ids = itertools.count(-1, -1)
        self.aliases: dict[int, str] = {}

    def values(self, t: TypeExpr, name: str | None = None) -> list[Value]:
        if isinstance(t, Base):
            return [_BASE_VALUES[t.kind]]
        if isinstance(t, Top):
            return [None]
        if isinstance(t, Bottom):
            raise Uninhabitable("bottom has no values")
        if isinstance(t, LabelledT):
            return [Labelled(t.label, v) for v in self.values(t.inner, name)]
        if isinstance(t, UnionT):
            if not t.members:
                raise Uninhabitable("empty union")
            out: list[Value] = []
            for m in t.members:
                out.extend(self.values(m, name))
            return out
        if isinstance(t, RecordT):
            per_field = [self.values(ft, f"{name}.{k}" if name else None) for k, ft in t.fields]
            combos = itertools.islice(itertools.product(*per_field), MAX_PRODUCT)
            keys = [k for k, _ in t.fields]
            return [Record(tuple(zip(keys, combo))) for combo in combos]
        if isinstance(t, ChanT):
            ref = ChanRef(next(self._ids), t.capability, t.payload)
            if name:
                self.aliases[ref.id] = name
            return [ref]
        raise Uninhabitable(f"{head_name(t)} is not a payload type")


def synth_values(t: TypeExpr) -> list[Value]:
    """Canonical inhabitants of ``t``: one per union member."""
    return _Synth().values(t)


def synth_value(t: TypeExpr) -> Value:
    return synth_values(t)[0]


@dataclass(frozen=True)
class _Ctx:
    tpath: str
    ppath: str
    chans: Mapping[str, ChanT]
    tvars: Mapping[str, RecT]
    var_map: Mapping[str, str | None]
    assumed: frozenset
    unfolded: frozenset
    timed: bool = False
    depth: int = 0

    def step(self, tseg: str = "", pseg: str = "", **kw) -> "_Ctx":
        return replace(
            self,
            tpath=self.tpath + tseg,
            ppath=self.ppath + pseg,
            depth=self.depth + 1,
            **kw,
        )


class _Checker:
    def __init__(self, env: ConformanceEnv) -> None:
        self.env = env
        self.synth = _Synth()

    # -- helpers --

    def diag(self, ctx: _Ctx, kind: DiagKind, msg: str, label: str | None = None, severity: str = "error") -> Diagnostic:
        return Diagnostic(kind, ctx.tpath or "/", msg, label, ctx.ppath or "/", severity)

    def proc_chan(self, ch: ChanExpr) -> str:
        if isinstance(ch, ChanRef):
            return self.synth.aliases.get(ch.id, str(ch))
        return chan_label(ch)

    def force(self, ctx: _Ctx, thunk, *args) -> tuple[ProcNode | None, list[Diagnostic]]:
        try:
            return thunk(*args), []
        except Exception as exc:  # host continuation blew up
            return None, [self.diag(ctx, DiagKind.CONTINUATION_ERROR, f"continuation raised {type(exc).__name__}: {exc}")]

    def lookup_rec(self, ctx: _Ctx, var: str) -> RecT | None:
        return ctx.tvars.get(var) or self.env.loops.get(var)

    def chan_matches(self, ctx: _Ctx, proc_ch: ChanExpr, type_ch) -> bool:
        if isinstance(type_ch, ChanT):
            return True
        return self.proc_chan(proc_ch) == type_ch

    # -- the walk --

    def check(self, p: ProcNode, t: TypeExpr, ctx: _Ctx) -> list[Diagnostic]:
        if ctx.depth > MAX_DEPTH:
            return [self.diag(ctx, DiagKind.EXPLORATION_LIMIT, "exploration depth exceeded")]

        if isinstance(t, RecT):
            if isinstance(p, Rec):
                return self.enter_rec(p, t, ctx)
            inner = ctx.step(f"/rec:{t.var}", tvars={**ctx.tvars, t.var: t})
            return self.check(p, t.body, inner)

        if isinstance(t, VarT):
            rt = self.lookup_rec(ctx, t.var)
            if rt is None:
                return [self.diag(ctx, DiagKind.UNBOUND_VAR, f"type variable {t.var} is not bound")]
            if isinstance(p, Loop):
                return self.check_loop(p, t.var, ctx)
            if isinstance(p, Rec):
                if (p.var, t.var) in ctx.assumed:
                    return []
                return self.enter_rec(p, rt, ctx)
            if t.var in ctx.unfolded:
                return []
            inner = ctx.step(f"/var:{t.var}", tvars={**ctx.tvars, t.var: rt}, unfolded=ctx.unfolded | {t.var})
            return self.check(p, rt.body, inner)

        if isinstance(t, UnionT):
            return self.check_choice(p, t, ctx)

        if isinstance(p, Rec):
            body, errs = self.force(ctx, p.body)
            if errs:
                return errs
            inner = ctx.step(pseg=f"/rec:{p.var}", var_map={**ctx.var_map, p.var: None})
            return self.check(body, t, inner)

        if ctx.timed and not isinstance(p, (Recv, Branch)):
            return [self.diag(ctx, DiagKind.BAD_TIMEOUT_INNER, f"catch_timeout wraps a {kind_name(p)}, not a receive or branch")]

        if isinstance(p, Loop):
            return self.check_loop(p, None, ctx)
        if isinstance(p, End) and isinstance(t, NilT):
            return []
        if isinstance(p, Send) and isinstance(t, OutT):
            return self.check_send(p, t, ctx)
        if isinstance(p, Recv) and isinstance(t, InT):
            return self.check_recv(p, t, ctx)
        if isinstance(p, Branch) and isinstance(t, BranchT):
            return self.check_branch(p, t, ctx)
        if isinstance(p, CatchTimeout) and isinstance(t, TimeoutT):
            return self.check_timeout(p, t, ctx)
        if isinstance(p, Par) and isinstance(t, ParT):
            return self.check(p.left, t.left, ctx.step("/par[0]", "/par[0]")) + self.check(
                p.right, t.right, ctx.step("/par[1]", "/par[1]")
            )
        if isinstance(p, NewChan) and isinstance(t, NewChanT):
            ref = self.synth.values(t.chan, t.var)[0]
            node, errs = self.force(ctx, p.cont, ref)
            if errs:
                return errs
            inner = ctx.step(f"/new:{t.var}", "/chan()", chans={**ctx.chans, t.var: t.chan})
            return self.check(node, t.cont, inner)
        return [self.diag(ctx, DiagKind.SHAPE_MISMATCH, f"got {_proc_shape(p)}-shaped process, expected {head_name(t)}")]

    def enter_rec(self, p: Rec, t: RecT, ctx: _Ctx) -> list[Diagnostic]:
        pair = (p.var, t.var)
        if pair in ctx.assumed:
            return []
        body, errs = self.force(ctx, p.body)
        if errs:
            return errs
        inner = ctx.step(
            f"/rec:{t.var}",
            f"/rec:{p.var}",
            tvars={**ctx.tvars, t.var: t},
            var_map={**ctx.var_map, p.var: t.var},
            assumed=ctx.assumed | {pair},
        )
        return self.check(body, t.body, inner)

    def check_loop(self, p: Loop, tvar: str | None, ctx: _Ctx) -> list[Diagnostic]:
        if p.var not in ctx.var_map:
            return [self.diag(ctx, DiagKind.UNBOUND_LOOP_VAR, f"loop to unbound variable {p.var}")]
        bound = ctx.var_map[p.var]
        if tvar is None:
            return [self.diag(ctx, DiagKind.SHAPE_MISMATCH, f"process loops to {p.var} where the type does not recurse")]
        if bound != tvar:
            return [self.diag(ctx, DiagKind.LOOP_MISMATCH, f"process loops to {p.var} (type {bound}), type expects {tvar}")]
        return []

    def check_choice(self, p: ProcNode, t: UnionT, ctx: _Ctx) -> list[Diagnostic]:
        best: list[Diagnostic] | None = None
        for i, m in enumerate(t.members):
            ds = self.check(p, m, ctx.step(f"/union[{i}]"))
            errors = [d for d in ds if d.is_error]
            if not errors:
                return ds
            if best is None or len(errors) < len([d for d in best if d.is_error]):
                best = ds
        return best or [self.diag(ctx, DiagKind.SHAPE_MISMATCH, "empty choice")]

    def timing(self, timeout: int | None, ctx: _Ctx) -> list[Diagnostic]:
        if ctx.timed and timeout is None:
            return [self.diag(ctx, DiagKind.BAD_TIMEOUT_DURATION, "catch_timeout wraps an input without a timeout duration")]
        if not ctx.timed and timeout is not None:
            return [self.diag(ctx, DiagKind.UNCAUGHT_TIMEOUT, "input has a timeout but no enclosing catch_timeout")]
        return []

    def check_send(self, p: Send, t: OutT, ctx: _Ctx) -> list[Diagnostic]:
        out: list[Diagnostic] = []
        if not self.chan_matches(ctx, p.chan, t.chan):
            out.append(self.diag(ctx, DiagKind.CHANNEL_MISMATCH, f"sends on {self.proc_chan(p.chan)}, type expects {t.chan}"))
        try:
            ok = subsumes(type_of(p.value), t.payload)
        except TypeError:
            ok = False
        if not ok:
            out.append(self.diag(ctx, DiagKind.PAYLOAD_MISMATCH, f"sends {render(p.value)}, not of the declared payload type"))
        node, errs = self.force(ctx, p.cont)
        if errs:
            return out + errs
        return out + self.check(node, t.cont, ctx.step("/out", "/send"))

    def check_recv(self, p: Recv, t: InT, ctx: _Ctx) -> list[Diagnostic]:
        out = self.timing(p.timeout, ctx)
        if not self.chan_matches(ctx, p.chan, t.chan):
            out.append(self.diag(ctx, DiagKind.CHANNEL_MISMATCH, f"receives on {self.proc_chan(p.chan)}, type expects {t.chan}"))
        try:
            vals = self.synth.values(t.payload, t.var)
        except Uninhabitable as exc:
            return out + [self.diag(ctx, DiagKind.UNINHABITABLE, str(exc))]
        for v in vals:
            node, errs = self.force(ctx, p.cont, v)
            out += errs or self.check(node, t.cont, ctx.step("/in", "/recv", timed=False))
        return out

    def check_branch(self, p: Branch, t: BranchT, ctx: _Ctx) -> list[Diagnostic]:
        out = self.timing(p.timeout, ctx)
        pchans = sorted(self.proc_chan(c) for c in p.chans)
        tchans = sorted(c if isinstance(c, str) else "(inline)" for c in t.chans)
        if pchans != tchans:
            out.append(self.diag(ctx, DiagKind.CHANNEL_SET_MISMATCH, f"listens on ({', '.join(pchans)}), type expects ({', '.join(tchans)})"))
        taken: set[int] = set()
        type_labels = {c.label for c in t.cases}
        for tc in t.cases:
            try:
                vals = self.synth.values(tc.arg, tc.var)
            except Uninhabitable as exc:
                out.append(self.diag(ctx, DiagKind.UNINHABITABLE, str(exc), tc.label))
                continue
            for v in vals:
                idx = p.select(Labelled(tc.label, v))
                if idx is None:
                    out.append(self.diag(ctx, DiagKind.MISSING_CASE, f"no case accepts {tc.label}({render(v)})", tc.label))
                    continue
                taken.add(idx)
                sub = ctx.step(f"/branch/{tc.label}", f"/case[{idx}]:{tc.label}", timed=False)
                node, errs = self.force(sub, p.cases[idx].cont, v)
                out += errs or self.check(node, tc.cont, sub)
        for i, pc in enumerate(p.cases):
            if i in taken:
                continue
            if pc.label in type_labels:
                out.append(self.diag(ctx, DiagKind.SHADOWED_CASE, f"case {i} ({pc.label}) is never selected", pc.label, "warning"))
            else:
                out.append(self.diag(ctx, DiagKind.UNREACHABLE_CASE, f"case {i} ({pc.label}) handles a label the protocol never sends", pc.label, "warning"))
        return out

    def check_timeout(self, p: CatchTimeout, t: TimeoutT, ctx: _Ctx) -> list[Diagnostic]:
        inner, errs = self.force(ctx, p.inner)
        if errs:
            return errs
        out = self.check(inner, t.inner, ctx.step("/timeout", "/catch", timed=True))
        handler, errs = self.force(ctx, p.on_timeout)
        if errs:
            return out + errs
        return out + self.check(handler, t.handler, ctx.step("/on-timeout", "/on-timeout"))


def _proc_shape(p: ProcNode) -> str:
    return {
        End: "NilT", Send: "OutT", Recv: "InT", Branch: "BranchT", CatchTimeout: "TimeoutT",
        Par: "ParT", Rec: "RecT", Loop: "VarT", NewChan: "NewChanT",
    }.get(type(p), kind_name(p))


def check(p: ProcNode, t: TypeExpr, env: ConformanceEnv | None = None) -> list[Diagnostic]:
    """Diagnostics for ``p`` against ``t``; ``[]`` means ``p`` conforms."""
    env = env or ConformanceEnv()
    bad = well_formed(t, {k: r.body for k, r in env.loops.items()})
    if bad:
        return bad
    ctx = _Ctx("", "", dict(env.channels), {}, {}, frozenset(), frozenset())
    # several synthesized inputs can reach the same fault
    return list(dict.fromkeys(_Checker(env).check(p, t, ctx)))


def errors(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.is_error]


def conforms(p: ProcNode, t: TypeExpr, env: ConformanceEnv | None = None) -> bool:
    return not errors(check(p, t, env))


__all__ = [
    "ConformanceEnv", "Uninhabitable", "check", "conforms", "errors",
    "synth_value", "synth_values",
]
