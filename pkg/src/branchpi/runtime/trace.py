"""Observable run log and its JSON-lines form.

Line 1 is a header ``{"schema": "branchpi.trace/1", ...}``; every further line
is one event with keys in the fixed order of :data:`FIELDS`, absent keys
omitted.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Any, Iterable

from ..values import to_json

SCHEMA = "branchpi.trace/1"

SPAWN = "Spawn"
SEND = "Send"
DELIVER = "Deliver"
BRANCH_TAKEN = "BranchTaken"
TIMEOUT_FIRED = "TimeoutFired"
RECV_DONE = "RecvDone"
PROC_END = "ProcEnd"
FAULT = "Fault"
DROPPED = "Dropped"
RESIDUAL = "Residual"

FIELDS = ("seq", "time", "kind", "proc", "chan", "label", "waiter", "caseIndex", "msg", "value", "fault", "detail")


@dataclass(slots=True)
class TraceEvent:
    seq: int
    time: int | float
    kind: str
    proc: str | None = None
    chan: str | None = None
    label: str | None = None
    waiter: str | None = None
    case_index: int | None = None
    msg: str | None = None
    value: Any = None
    fault: str | None = None
    detail: str | None = None

    def to_dict(self) -> dict:
        raw = {
            "seq": self.seq, "time": self.time, "kind": self.kind, "proc": self.proc,
            "chan": self.chan, "label": self.label, "waiter": self.waiter,
            "caseIndex": self.case_index, "msg": self.msg,
            "value": to_json(self.value) if self.kind in (SEND, DELIVER, RESIDUAL, DROPPED) else None,
            "fault": self.fault, "detail": self.detail,
        }
        out = {}
        for k in FIELDS:
            v = raw[k]
            if v is not None or (k == "value" and self.kind in (SEND, DELIVER, RESIDUAL, DROPPED)):
                out[k] = v
        return out

    def key(self) -> tuple:
        """Identity modulo ``seq`` and ``time``, for cross-engine comparison."""
        d = self.to_dict()
        d.pop("seq")
        d.pop("time")
        return tuple((k, json.dumps(v, sort_keys=True)) for k, v in d.items())


@dataclass(frozen=True)
class WaiterStat:
    id: str
    kind: str
    dispatches: int
    state: str
    history: tuple[str, ...]


@dataclass
class Trace:
    engine: str
    seed: int | None
    events: list[TraceEvent] = field(default_factory=list)
    waiters: dict[str, WaiterStat] = field(default_factory=dict)
    end_time: int | float = 0

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of(self, *kinds: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]

    @property
    def faults(self) -> list[TraceEvent]:
        return self.of(FAULT)

    def header(self) -> dict:
        return {"schema": SCHEMA, "engine": self.engine, "seed": self.seed}

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), separators=(",", ":"))]
        lines.extend(json.dumps(e.to_dict(), separators=(",", ":")) for e in self.events)
        return "\n".join(lines) + "\n"

    def write(self, fp: IO[str]) -> None:
        fp.write(self.to_jsonl())

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def multiset(self) -> Counter:
        return Counter(e.key() for e in self.events)

    def summary(self) -> str:
        counts = Counter(e.kind for e in self.events)
        faults = ", ".join(sorted({e.fault for e in self.faults if e.fault})) or "none"
        return f"{len(self.events)} events ({counts[SEND]} sends, {counts[BRANCH_TAKEN]} branches, {counts[TIMEOUT_FIRED]} timeouts), faults: {faults}"


def read_jsonl(lines: Iterable[str]) -> tuple[dict, list[dict]]:
    it = iter(lines)
    header = json.loads(next(it))
    if header.get("schema") != SCHEMA:
        raise ValueError(f"unknown trace schema {header.get('schema')!r}")
    return header, [json.loads(line) for line in it if line.strip()]
