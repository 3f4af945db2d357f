"""Branching over many channels and catchable timeouts for message-passing
processes, with behavioural types, a conformance checker and three runtimes.
"""

from .conformance import ConformanceEnv, check, conforms
from .process import (
    ConstructionError,
    ConstructionErrorKind,
    branch,
    case,
    catch_timeout,
    delay,
    end,
    loop,
    new_chan,
    par,
    rec,
    recv,
    send,
)
from .protocol import DiagKind, Diagnostic, branch_type_valid, subsumes, well_formed
from .runtime import EngineConfig, Trace, run, run_sim
from .values import ChanRef, Labelled, Record, record

__version__ = "0.1.0"

__all__ = [
    "ChanRef", "ConformanceEnv", "ConstructionError", "ConstructionErrorKind", "DiagKind", "Diagnostic",
    "EngineConfig", "Labelled", "Record", "Trace", "branch", "branch_type_valid", "case", "catch_timeout",
    "check", "conforms", "delay", "end", "loop", "new_chan", "par", "rec", "record", "recv", "run", "run_sim",
    "send", "subsumes", "well_formed",
]
