"""Behavioural types: the protocol AST and its validity checks.

Payload types (base kinds, labelled values, unions, records, channels) and
process types (``nil``, ``out``, ``in``, ``branch``, ``timeout``, ``par``,
``rec``/``var``, ``new``) share one tagged union, :data:`TypeExpr`.  All nodes
are frozen and hashable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Union

BASE_KINDS = ("unit", "bool", "int", "string")


class Capability(Enum):
    IN = "i"
    OUT = "o"
    INOUT = "io"

    @property
    def can_receive(self) -> bool:
        return self is not Capability.OUT

    @property
    def can_send(self) -> bool:
        return self is not Capability.IN


def _freeze(obj, name: str) -> None:
    value = getattr(obj, name)
    if not isinstance(value, tuple):
        object.__setattr__(obj, name, tuple(value))


def _check_name(name: str, what: str) -> None:
    if not isinstance(name, str) or not name:
        raise ValueError(f"{what} must be a non-empty string, got {name!r}")


@dataclass(frozen=True)
class Base:
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in BASE_KINDS:
            raise ValueError(f"unknown base kind {self.kind!r}")


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bottom:
    pass


@dataclass(frozen=True)
class ChanT:
    capability: Capability
    payload: "TypeExpr"


@dataclass(frozen=True)
class LabelledT:
    label: str
    inner: "TypeExpr"

    def __post_init__(self) -> None:
        _check_name(self.label, "label")


@dataclass(frozen=True)
class UnionT:
    members: tuple["TypeExpr", ...]

    def __post_init__(self) -> None:
        _freeze(self, "members")


@dataclass(frozen=True)
class RecordT:
    fields: tuple[tuple[str, "TypeExpr"], ...] = ()

    def __post_init__(self) -> None:
        _freeze(self, "fields")
        object.__setattr__(self, "fields", tuple((k, t) for k, t in self.fields))
        names = [k for k, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate record fields in {names}")


@dataclass(frozen=True)
class NilT:
    pass


# A channel reference inside a process type: a bound channel name or an
# inline channel type.
TypeRef = Union[str, ChanT]


@dataclass(frozen=True)
class OutT:
    chan: TypeRef
    payload: "TypeExpr"
    cont: "TypeExpr" = NilT()


@dataclass(frozen=True)
class InT:
    chan: TypeRef
    payload: "TypeExpr"
    var: str
    cont: "TypeExpr" = NilT()


@dataclass(frozen=True)
class Case:
    """One branch arm.  ``var`` optionally names the payload so that
    continuations can refer to channels carried inside it (``var.field``)."""

    label: str
    arg: "TypeExpr"
    cont: "TypeExpr" = NilT()
    var: str | None = None

    def __post_init__(self) -> None:
        _check_name(self.label, "label")


@dataclass(frozen=True)
class BranchT:
    chans: tuple[TypeRef, ...]
    cases: tuple[Case, ...]

    def __post_init__(self) -> None:
        _freeze(self, "chans")
        _freeze(self, "cases")


@dataclass(frozen=True)
class TimeoutT:
    inner: "TypeExpr"
    handler: "TypeExpr"


@dataclass(frozen=True)
class ParT:
    left: "TypeExpr"
    right: "TypeExpr"


@dataclass(frozen=True)
class RecT:
    var: str
    body: "TypeExpr"


@dataclass(frozen=True)
class VarT:
    var: str


@dataclass(frozen=True)
class NewChanT:
    """Create a fresh channel of type ``chan`` bound to ``var`` in ``cont``."""

    var: str
    chan: ChanT
    cont: "TypeExpr"


TypeExpr = Union[
    Base, Top, Bottom, ChanT, LabelledT, UnionT, RecordT,
    NilT, OutT, InT, BranchT, TimeoutT, ParT, RecT, VarT, NewChanT,
]

UNIT = Base("unit")
BOOL = Base("bool")
INT = Base("int")
STRING = Base("string")
TOP = Top()
BOTTOM = Bottom()
NIL = NilT()

PAYLOAD_TYPES = (Base, Top, Bottom, ChanT, LabelledT, UnionT, RecordT)


class DiagKind(str, Enum):
    EMPTY_INDEX_SET = "EmptyIndexSet"
    UNBOUND_VAR = "UnboundVar"
    BAD_TIMEOUT_INNER = "BadTimeoutInner"
    BAD_CAPABILITY = "BadCapability"
    DUPLICATE_LABEL = "DuplicateLabel"
    UNCOVERED_LABEL = "UncoveredLabel"
    PAYLOAD_MISMATCH = "PayloadMismatch"
    UNLABELLED_PAYLOAD = "UnlabelledPayload"
    # conformance
    SHAPE_MISMATCH = "ShapeMismatch"
    CHANNEL_MISMATCH = "ChannelMismatch"
    CHANNEL_SET_MISMATCH = "ChannelSetMismatch"
    MISSING_CASE = "MissingCase"
    UNREACHABLE_CASE = "UnreachableCase"
    SHADOWED_CASE = "ShadowedCase"
    LOOP_MISMATCH = "LoopMismatch"
    UNBOUND_LOOP_VAR = "UnboundLoopVar"
    UNCAUGHT_TIMEOUT = "UncaughtTimeout"
    BAD_TIMEOUT_DURATION = "BadTimeoutDuration"
    UNINHABITABLE = "Uninhabitable"
    CONTINUATION_ERROR = "ContinuationError"
    EXPLORATION_LIMIT = "ExplorationLimit"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagKind
    path: str
    message: str = ""
    label: str | None = None
    proc_path: str | None = None
    severity: str = "error"

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self) -> str:
        return f"{self.path}  {self.kind}  {self.message}"


class UnresolvedChannel(LookupError):
    """A channel name in a type has no binding in the environment."""


# -- unions -----------------------------------------------------------------


def flatten_union(t: TypeExpr) -> list[TypeExpr]:
    if not isinstance(t, UnionT):
        return [t]
    out: list[TypeExpr] = []
    for m in t.members:
        out.extend(flatten_union(m))
    return out


def union(*members: TypeExpr) -> TypeExpr:
    return members[0] if len(members) == 1 else UnionT(members)


# -- subsumption ------------------------------------------------------------


def subsumes(sub: TypeExpr, sup: TypeExpr) -> bool:
    """``sub <= sup`` on the payload fragment; process types by equality."""
    if sub == sup or isinstance(sup, Top) or isinstance(sub, Bottom):
        return True
    if isinstance(sub, UnionT):
        return all(subsumes(m, sup) for m in sub.members)
    if isinstance(sup, UnionT):
        return any(subsumes(sub, m) for m in sup.members)
    if isinstance(sub, Base) and isinstance(sup, Base):
        return sub.kind == sup.kind
    if isinstance(sub, LabelledT) and isinstance(sup, LabelledT):
        return sub.label == sup.label and subsumes(sub.inner, sup.inner)
    if isinstance(sub, RecordT) and isinstance(sup, RecordT):
        if [k for k, _ in sub.fields] != [k for k, _ in sup.fields]:
            return False
        return all(subsumes(a, b) for (_, a), (_, b) in zip(sub.fields, sup.fields))
    if isinstance(sub, ChanT) and isinstance(sup, ChanT):
        cap_ok = sub.capability == sup.capability or sub.capability is Capability.INOUT
        return cap_ok and subsumes(sub.payload, sup.payload) and subsumes(sup.payload, sub.payload)
    return False


# -- well-formedness --------------------------------------------------------


def _timeoutable(t: TypeExpr, recs: Mapping[str, TypeExpr], seen: frozenset = frozenset()) -> bool:
    while True:
        if isinstance(t, (InT, BranchT)):
            return True
        if isinstance(t, RecT):
            recs = {**recs, t.var: t.body}
            t = t.body
        elif isinstance(t, VarT) and t.var in recs and t.var not in seen:
            seen = seen | {t.var}
            t = recs[t.var]
        else:
            return False


def well_formed(t: TypeExpr, loops: Mapping[str, TypeExpr] | None = None) -> list[Diagnostic]:
    """One diagnostic per structural violation; ``[]`` means well-formed.

    ``loops`` maps recursion variables bound outside ``t`` to their bodies.
    """
    out: list[Diagnostic] = []
    _wf(t, "", dict(loops or {}), out)
    return out


def _wf(t: TypeExpr, path: str, recs: dict, out: list[Diagnostic]) -> None:
    here = path or "/"

    def bad(kind: DiagKind, msg: str, label: str | None = None) -> None:
        out.append(Diagnostic(kind, here, msg, label))

    def ref(r: TypeRef, p: str, need: str) -> None:
        if isinstance(r, ChanT):
            ok = r.capability.can_receive if need == "in" else r.capability.can_send
            if not ok:
                bad(DiagKind.BAD_CAPABILITY, f"channel {r.capability.value} cannot be used for {need}put")
            _wf(r, p, recs, out)

    if isinstance(t, (Base, Top, Bottom, NilT)):
        return
    if isinstance(t, ChanT):
        _wf(t.payload, f"{path}/payload", recs, out)
    elif isinstance(t, LabelledT):
        _wf(t.inner, f"{path}/{t.label}", recs, out)
    elif isinstance(t, UnionT):
        if not t.members:
            bad(DiagKind.EMPTY_INDEX_SET, "union has no members")
        for i, m in enumerate(t.members):
            _wf(m, f"{path}/union[{i}]", recs, out)
    elif isinstance(t, RecordT):
        for k, ft in t.fields:
            _wf(ft, f"{path}/{k}", recs, out)
    elif isinstance(t, OutT):
        ref(t.chan, f"{path}/out/chan", "out")
        _wf(t.payload, f"{path}/out/payload", recs, out)
        _wf(t.cont, f"{path}/out", recs, out)
    elif isinstance(t, InT):
        ref(t.chan, f"{path}/in/chan", "in")
        _wf(t.payload, f"{path}/in/payload", recs, out)
        _wf(t.cont, f"{path}/in", recs, out)
    elif isinstance(t, BranchT):
        if not t.chans:
            bad(DiagKind.EMPTY_INDEX_SET, "branch listens on no channels")
        if not t.cases:
            bad(DiagKind.EMPTY_INDEX_SET, "branch has no cases")
        for i, r in enumerate(t.chans):
            ref(r, f"{path}/branch/chan[{i}]", "in")
        for c in t.cases:
            _wf(c.arg, f"{path}/branch/{c.label}/arg", recs, out)
            _wf(c.cont, f"{path}/branch/{c.label}", recs, out)
    elif isinstance(t, TimeoutT):
        if not _timeoutable(t.inner, recs):
            bad(DiagKind.BAD_TIMEOUT_INNER, "timeout must wrap a receive or a branch")
        _wf(t.inner, f"{path}/timeout", recs, out)
        _wf(t.handler, f"{path}/on-timeout", recs, out)
    elif isinstance(t, ParT):
        _wf(t.left, f"{path}/par[0]", recs, out)
        _wf(t.right, f"{path}/par[1]", recs, out)
    elif isinstance(t, RecT):
        _wf(t.body, f"{path}/rec:{t.var}", {**recs, t.var: t.body}, out)
    elif isinstance(t, VarT):
        if t.var not in recs:
            bad(DiagKind.UNBOUND_VAR, f"recursion variable {t.var!r} is not bound")
    elif isinstance(t, NewChanT):
        _wf(t.chan, f"{path}/new:{t.var}", recs, out)
        _wf(t.cont, f"{path}/new:{t.var}", recs, out)
    else:
        raise TypeError(f"not a type: {t!r}")


# -- branch validity --------------------------------------------------------


def resolve_ref(r: TypeRef, env: Mapping[str, TypeExpr]) -> ChanT:
    if isinstance(r, ChanT):
        return r
    try:
        t = env[r]
    except KeyError:
        raise UnresolvedChannel(r) from None
    if not isinstance(t, ChanT):
        raise UnresolvedChannel(f"{r} is bound to a non-channel type")
    return t


def branch_type_valid(
    b: BranchT,
    env: Mapping[str, TypeExpr] | None = None,
    path: str = "/",
    ordered: bool = False,
) -> list[Diagnostic]:
    """Label distinctness, continuation coverage and payload compatibility.

    With ``ordered=True`` repeated labels are allowed and the first case that
    accepts a payload wins, which is how the runtime selects continuations.
    """
    env = env or {}
    out: list[Diagnostic] = []
    incoming: list[TypeExpr] = []
    for r in b.chans:
        ct = resolve_ref(r, env)
        if not ct.capability.can_receive:
            name = r if isinstance(r, str) else "(inline)"
            out.append(Diagnostic(DiagKind.BAD_CAPABILITY, path, f"branch listens on output-only channel {name}"))
        incoming.extend(flatten_union(ct.payload))

    if not ordered:
        seen: set[str] = set()
        for c in b.cases:
            if c.label in seen:
                out.append(Diagnostic(DiagKind.DUPLICATE_LABEL, path, f"label {c.label} appears more than once", c.label))
            seen.add(c.label)

    reported: set[tuple[DiagKind, str]] = set()
    for m in incoming:
        if isinstance(m, Top):
            continue  # untyped channel: nothing to check statically
        if not isinstance(m, LabelledT):
            key = (DiagKind.UNLABELLED_PAYLOAD, repr(m))
            if key not in reported:
                reported.add(key)
                out.append(Diagnostic(DiagKind.UNLABELLED_PAYLOAD, path, "branch channels must carry labelled messages"))
            continue
        arms = [c for c in b.cases if c.label == m.label]
        if not arms:
            kind = DiagKind.UNCOVERED_LABEL
            msg = f"no continuation for incoming label {m.label}"
        elif ordered and any(subsumes(m.inner, c.arg) for c in arms):
            continue
        elif not ordered and subsumes(m.inner, arms[0].arg):
            continue
        else:
            kind = DiagKind.PAYLOAD_MISMATCH
            msg = f"payload of {m.label} is not accepted by its continuation"
        if (kind, m.label) not in reported:
            reported.add((kind, m.label))
            out.append(Diagnostic(kind, path, msg, m.label))
    return out


def iter_branches(
    t: TypeExpr, env: Mapping[str, TypeExpr] | None = None, path: str = ""
) -> Iterator[tuple[BranchT, dict, str]]:
    """Yield every branch type in ``t`` with the channel environment in scope."""
    env = dict(env or {})
    if isinstance(t, BranchT):
        yield t, env, path or "/"
        for c in t.cases:
            yield from iter_branches(c.cont, env, f"{path}/branch/{c.label}")
    elif isinstance(t, (OutT, InT)):
        kind = "out" if isinstance(t, OutT) else "in"
        yield from iter_branches(t.cont, env, f"{path}/{kind}")
    elif isinstance(t, TimeoutT):
        yield from iter_branches(t.inner, env, f"{path}/timeout")
        yield from iter_branches(t.handler, env, f"{path}/on-timeout")
    elif isinstance(t, ParT):
        yield from iter_branches(t.left, env, f"{path}/par[0]")
        yield from iter_branches(t.right, env, f"{path}/par[1]")
    elif isinstance(t, RecT):
        yield from iter_branches(t.body, env, f"{path}/rec:{t.var}")
    elif isinstance(t, UnionT):
        for i, m in enumerate(t.members):
            yield from iter_branches(m, env, f"{path}/union[{i}]")
    elif isinstance(t, NewChanT):
        yield from iter_branches(t.cont, {**env, t.var: t.chan}, f"{path}/new:{t.var}")


def is_payload_type(t: TypeExpr) -> bool:
    return isinstance(t, PAYLOAD_TYPES)


def head_name(t: TypeExpr) -> str:
    """Short constructor name used in messages (``OutT``, ``NilT`` ...)."""
    return type(t).__name__


__all__ = [
    "BASE_KINDS", "Base", "Bottom", "BranchT", "Capability", "Case", "ChanT",
    "DiagKind", "Diagnostic", "InT", "LabelledT", "NewChanT", "NilT", "OutT",
    "ParT", "RecT", "RecordT", "TimeoutT", "Top", "TypeExpr", "TypeRef",
    "UnionT", "UnresolvedChannel", "VarT", "UNIT", "BOOL", "INT", "STRING",
    "TOP", "BOTTOM", "NIL", "branch_type_valid", "flatten_union", "head_name",
    "is_payload_type", "iter_branches", "resolve_ref", "subsumes", "union",
    "well_formed",
]
