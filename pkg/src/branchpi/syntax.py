"""Canonical s-expression text form of :mod:`branchpi.protocol` types.

Grammar (whitespace separates tokens, ``;`` starts a comment)::

    type   ::= unit | bool | int | string | top | bottom | nil
             | (chan CAP type)                 CAP ::= i | o | io
             | (label NAME type)
             | (union type+)
             | (record (NAME type)*)
             | (out ref type type)
             | (in ref type NAME type)
             | (branch (ref+) case+)
             | (timeout type type)
             | (par type type)
             | (rec NAME type)
             | (var NAME)
             | (new NAME (chan CAP type) type)
    case   ::= (case NAME type type) | (case NAME type type NAME)
    ref    ::= NAME | (chan CAP type)

``print_type`` emits exactly one spelling per type so that
``parse_type(print_type(t)) == t``.
"""

from __future__ import annotations

import re

from .protocol import (
    BASE_KINDS,
    Base,
    Bottom,
    BranchT,
    Capability,
    Case,
    ChanT,
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
)

_ATOMS = {"top": Top(), "bottom": Bottom(), "nil": NilT()}
_ATOMS.update({k: Base(k) for k in BASE_KINDS})
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_TOKEN = re.compile(r"[()]|[^\s()]+")


class TypeSyntaxError(ValueError):
    pass


def _name(n: str) -> str:
    if not _NAME.match(n) or n in _ATOMS:
        raise TypeSyntaxError(f"cannot print name {n!r}")
    return n


def _ref(r) -> str:
    return print_type(r) if isinstance(r, ChanT) else _name(r)


def print_type(t: TypeExpr) -> str:
    if isinstance(t, Base):
        return t.kind
    if isinstance(t, Top):
        return "top"
    if isinstance(t, Bottom):
        return "bottom"
    if isinstance(t, NilT):
        return "nil"
    if isinstance(t, ChanT):
        return f"(chan {t.capability.value} {print_type(t.payload)})"
    if isinstance(t, LabelledT):
        return f"(label {_name(t.label)} {print_type(t.inner)})"
    if isinstance(t, UnionT):
        return "(union " + " ".join(print_type(m) for m in t.members) + ")"
    if isinstance(t, RecordT):
        return "(record" + "".join(f" ({_name(k)} {print_type(v)})" for k, v in t.fields) + ")"
    if isinstance(t, OutT):
        return f"(out {_ref(t.chan)} {print_type(t.payload)} {print_type(t.cont)})"
    if isinstance(t, InT):
        return f"(in {_ref(t.chan)} {print_type(t.payload)} {_name(t.var)} {print_type(t.cont)})"
    if isinstance(t, BranchT):
        chans = " ".join(_ref(r) for r in t.chans)
        cases = []
        for c in t.cases:
            tail = f" {_name(c.var)}" if c.var else ""
            cases.append(f"(case {_name(c.label)} {print_type(c.arg)} {print_type(c.cont)}{tail})")
        return f"(branch ({chans}) " + " ".join(cases) + ")"
    if isinstance(t, TimeoutT):
        return f"(timeout {print_type(t.inner)} {print_type(t.handler)})"
    if isinstance(t, ParT):
        return f"(par {print_type(t.left)} {print_type(t.right)})"
    if isinstance(t, RecT):
        return f"(rec {_name(t.var)} {print_type(t.body)})"
    if isinstance(t, VarT):
        return f"(var {_name(t.var)})"
    if isinstance(t, NewChanT):
        return f"(new {_name(t.var)} {print_type(t.chan)} {print_type(t.cont)})"
    raise TypeError(f"not a type: {t!r}")


def _tokenize(text: str) -> list[str]:
    text = "\n".join(line.split(";", 1)[0] for line in text.splitlines())
    return _TOKEN.findall(text)


def _read(tokens: list[str], i: int):
    if i >= len(tokens):
        raise TypeSyntaxError("unexpected end of input")
    tok = tokens[i]
    if tok == ")":
        raise TypeSyntaxError("unexpected ')'")
    if tok != "(":
        return tok, i + 1
    items = []
    i += 1
    while True:
        if i >= len(tokens):
            raise TypeSyntaxError("missing ')'")
        if tokens[i] == ")":
            return items, i + 1
        item, i = _read(tokens, i)
        items.append(item)


def parse_type(text: str) -> TypeExpr:
    tokens = _tokenize(text)
    tree, end = _read(tokens, 0)
    if end != len(tokens):
        raise TypeSyntaxError(f"trailing input after type: {' '.join(tokens[end:])}")
    return _build(tree)


def _sym(x, what: str = "name") -> str:
    if not isinstance(x, str) or x in ("(", ")"):
        raise TypeSyntaxError(f"expected {what}, got {x!r}")
    if not _NAME.match(x):
        raise TypeSyntaxError(f"bad {what} {x!r}")
    return x


def _cap(x) -> Capability:
    try:
        return Capability(x)
    except ValueError:
        raise TypeSyntaxError(f"bad capability {x!r}") from None


def _build_ref(x):
    if isinstance(x, str):
        return _sym(x, "channel name")
    t = _build(x)
    if not isinstance(t, ChanT):
        raise TypeSyntaxError("channel reference must be a name or (chan ...)")
    return t


def _arity(form: list, n: int) -> None:
    if len(form) != n:
        raise TypeSyntaxError(f"({form[0]} ...) takes {n - 1} arguments, got {len(form) - 1}")


def _build(x) -> TypeExpr:
    if isinstance(x, str):
        if x in _ATOMS:
            return _ATOMS[x]
        raise TypeSyntaxError(f"unknown type {x!r}")
    if not x:
        raise TypeSyntaxError("empty form")
    head = x[0]
    if head == "chan":
        _arity(x, 3)
        return ChanT(_cap(x[1]), _build(x[2]))
    if head == "label":
        _arity(x, 3)
        return LabelledT(_sym(x[1], "label"), _build(x[2]))
    if head == "union":
        if len(x) < 2:
            raise TypeSyntaxError("union needs at least one member")
        return UnionT(tuple(_build(m) for m in x[1:]))
    if head == "record":
        fields = []
        for f in x[1:]:
            if not isinstance(f, list) or len(f) != 2:
                raise TypeSyntaxError("record field must be (NAME type)")
            fields.append((_sym(f[0], "field"), _build(f[1])))
        return RecordT(tuple(fields))
    if head == "out":
        _arity(x, 4)
        return OutT(_build_ref(x[1]), _build(x[2]), _build(x[3]))
    if head == "in":
        _arity(x, 5)
        return InT(_build_ref(x[1]), _build(x[2]), _sym(x[3], "variable"), _build(x[4]))
    if head == "branch":
        if len(x) < 2 or not isinstance(x[1], list):
            raise TypeSyntaxError("branch needs a channel list")
        chans = tuple(_build_ref(r) for r in x[1])
        cases = []
        for c in x[2:]:
            if not isinstance(c, list) or not c or c[0] != "case" or len(c) not in (4, 5):
                raise TypeSyntaxError("branch arm must be (case LABEL type type [VAR])")
            var = _sym(c[4], "variable") if len(c) == 5 else None
            cases.append(Case(_sym(c[1], "label"), _build(c[2]), _build(c[3]), var))
        return BranchT(chans, tuple(cases))
    if head == "timeout":
        _arity(x, 3)
        return TimeoutT(_build(x[1]), _build(x[2]))
    if head == "par":
        _arity(x, 3)
        return ParT(_build(x[1]), _build(x[2]))
    if head == "rec":
        _arity(x, 3)
        return RecT(_sym(x[1], "variable"), _build(x[2]))
    if head == "var":
        _arity(x, 2)
        return VarT(_sym(x[1], "variable"))
    if head == "new":
        _arity(x, 4)
        chan = _build(x[2])
        if not isinstance(chan, ChanT):
            raise TypeSyntaxError("(new NAME (chan ...) type)")
        return NewChanT(_sym(x[1], "variable"), chan, _build(x[3]))
    raise TypeSyntaxError(f"unknown form ({head} ...)")
