"""Runtime values carried over channels.

Scalars are plain Python objects (``None`` is the unit value, then ``bool``,
``int`` and ``str``).  Structured values are small frozen dataclasses so they
hash, compare and print predictably.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

from .protocol import (
    Base,
    Capability,
    ChanT,
    LabelledT,
    RecordT,
    TOP,
    Top,
    TypeExpr,
    UnionT,
    subsumes,
)

Value = Any


@dataclass(frozen=True)
class ChanRef:
    """A first-class channel handle, as produced by ``chan()``."""

    id: int
    capability: Capability = Capability.INOUT
    payload: TypeExpr = TOP

    def __str__(self) -> str:
        return f"#{self.id}"


@dataclass(frozen=True)
class Labelled:
    label: str
    payload: Value = None

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("label must be non-empty")

    def __str__(self) -> str:
        if self.payload is None:
            return f"{self.label}()"
        return f"{self.label}({render(self.payload)})"


@dataclass(frozen=True)
class Record:
    """Named fields in declaration order; ``rec["term"]`` reads a field."""

    fields: tuple[tuple[str, Value], ...] = field(default_factory=tuple)

    def __getitem__(self, name: str) -> Value:
        for key, value in self.fields:
            if key == name:
                return value
        raise KeyError(name)

    def __iter__(self) -> Iterator[str]:
        return (key for key, _ in self.fields)

    def get(self, name: str, default: Value = None) -> Value:
        try:
            return self[name]
        except KeyError:
            return default


def record(**fields: Value) -> Record:
    return Record(tuple(fields.items()))


def type_of(v: Value) -> TypeExpr:
    """The most precise type of a runtime value."""
    if v is None:
        return Base("unit")
    if isinstance(v, bool):
        return Base("bool")
    if isinstance(v, int):
        return Base("int")
    if isinstance(v, str):
        return Base("string")
    if isinstance(v, ChanRef):
        return ChanT(v.capability, v.payload)
    if isinstance(v, Labelled):
        return LabelledT(v.label, type_of(v.payload))
    if isinstance(v, Record):
        return RecordT(tuple((k, type_of(x)) for k, x in v.fields))
    raise TypeError(f"not a channel value: {v!r}")


_SCALAR_KIND = {type(None): "unit", bool: "bool", int: "int", str: "string"}


def inhabits(v: Value, t: TypeExpr) -> bool:
    """``v`` is a value of ``t``; same answer as ``subsumes(type_of(v), t)``
    without building the value's type."""
    if isinstance(t, Top):
        return True
    if isinstance(t, UnionT):
        return any(inhabits(v, m) for m in t.members)
    kind = _SCALAR_KIND.get(type(v))
    if kind is not None:
        return isinstance(t, Base) and t.kind == kind
    if isinstance(v, Labelled):
        return isinstance(t, LabelledT) and t.label == v.label and inhabits(v.payload, t.inner)
    if isinstance(v, Record):
        if not isinstance(t, RecordT) or len(t.fields) != len(v.fields):
            return False
        return all(k == tk and inhabits(x, ft) for (k, x), (tk, ft) in zip(v.fields, t.fields))
    if isinstance(v, ChanRef):
        if not isinstance(t, ChanT):
            return False
        if v.capability is not t.capability and v.capability is not Capability.INOUT:
            return False
        return v.payload is t.payload or (subsumes(v.payload, t.payload) and subsumes(t.payload, v.payload))
    return False


def label_of(v: Value) -> str | None:
    return v.label if isinstance(v, Labelled) else None


def to_json(v: Value) -> Any:
    """JSON-compatible rendering used in traces."""
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, ChanRef):
        return {"chan": v.id}
    if isinstance(v, Labelled):
        return {"label": v.label, "payload": to_json(v.payload)}
    if isinstance(v, Record):
        return {k: to_json(x) for k, x in v.fields}
    return repr(v)


def render(v: Value) -> str:
    if v is None:
        return "()"
    if isinstance(v, str):
        return repr(v)
    if isinstance(v, Record):
        return "{" + ", ".join(f"{k}={render(x)}" for k, x in v.fields) + "}"
    return str(v)
