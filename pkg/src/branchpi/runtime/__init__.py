"""Execution engines and their common entry point."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable

from ..process import ProcNode
from .base import ENGINES, Engine, EngineConfig
from .executor import ExecutorEngine
from .naive import NaiveEngine, naive_poll_order
from .sim import SimEngine
from .trace import Trace, TraceEvent, read_jsonl

_ENGINES: dict[str, type[Engine]] = {"naive": NaiveEngine, "executor": ExecutorEngine, "sim": SimEngine}


def run(p: ProcNode, cfg: EngineConfig | None = None, channels: Iterable[str] = ()) -> Trace:
    """Run ``p`` to quiescence (or budget/horizon) and return its trace.

    ``channels`` names the free channels of ``p``; each gets a fresh channel.
    """
    cfg = cfg or EngineConfig()
    return _ENGINES[cfg.engine](cfg).run(p, channels)


def run_sim(p: ProcNode, seed: int, cfg: EngineConfig | None = None, channels: Iterable[str] = ()) -> Trace:
    cfg = replace(cfg or EngineConfig(), engine="sim", seed=seed)
    return run(p, cfg, channels)


__all__ = [
    "ENGINES", "EngineConfig", "Trace", "TraceEvent", "run", "run_sim",
    "naive_poll_order", "read_jsonl", "SimEngine", "ExecutorEngine", "NaiveEngine",
]
