"""Fixed-size cluster harness and trace checkers."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable

from ..process import ProcNode, par
from ..protocol import Capability
from ..runtime import EngineConfig, Trace, run
from ..runtime import trace as tr
from ..values import ChanRef, Record, Value
from .messages import RPC
from .node import MONITOR, NodeConfig, node_channels, node_name, node_timer, raft_node


@dataclass(frozen=True)
class LeaderElected:
    node: str
    term: int
    time: int | float
    seq: int


@dataclass
class ClusterTrace:
    n: int
    seed: int
    trace: Trace
    configs: list[NodeConfig] = field(default_factory=list)

    @property
    def leaders(self) -> list[LeaderElected]:
        return [
            LeaderElected(e.value.payload["node"], e.value.payload["term"], e.time, e.seq)
            for e in self.trace.of(tr.SEND)
            if e.chan == MONITOR and e.label == "LeaderElected"
        ]

    @property
    def majority(self) -> int:
        return self.n // 2 + 1

    def node_pids(self) -> dict[str, str]:
        """Main process of each node: the one that talks to its timer."""
        out: dict[str, str] = {}
        for e in self.trace.of(tr.SEND):
            if e.chan and e.chan.endswith(".reset"):
                out.setdefault(e.chan.split(".")[0], e.proc)
        return out


def cluster_channels(n: int) -> list[str]:
    names = [MONITOR]
    for i in range(n):
        names.extend(node_channels(i))
    return names


def cluster_program(
    n: int,
    seed: int = 0,
    *,
    election_timeout: tuple[int, int] = (150, 300),
    heartbeat: int = 50,
    timeout_fn: Callable[[int, int], int] | None = None,
) -> tuple[ProcNode, list[str], list[NodeConfig]]:
    """The whole cluster as one process, with the channel names to bind.

    Named channels receive ids 1, 2, ... in the order given to the engine,
    which lets each node hand out its own inbox as a reply channel.
    """
    if n < 1:
        raise ValueError("a cluster needs at least one node")
    names = cluster_channels(n)
    configs = []
    procs: list[ProcNode] = []
    for i in range(n):
        inbox = ChanRef(names.index(node_channels(i)[0]) + 1, Capability.INOUT, RPC)
        cfg = NodeConfig(i, n, inbox, seed, election_timeout, heartbeat, timeout_fn)
        configs.append(cfg)
        procs += [raft_node(cfg), node_timer(cfg)]
    return par(*procs) if len(procs) > 1 else procs[0], names, configs


def default_max_ticks(election_timeout: tuple[int, int] = (150, 300)) -> int:
    return 50 * election_timeout[1]


def run_cluster(
    n: int,
    seed: int = 0,
    max_ticks: int | None = None,
    *,
    engine: str = "sim",
    election_timeout: tuple[int, int] = (150, 300),
    heartbeat: int = 50,
    timeout_fn: Callable[[int, int], int] | None = None,
    drop: Callable[[str, Value], bool] | None = None,
    tick: float = 0.001,
    workers: int = 4,
) -> ClusterTrace:
    """Run ``n`` nodes (each with its timer) until ``max_ticks``.

    ``drop(chan, value)`` returning true loses that message in transit.
    """
    prog, names, configs = cluster_program(
        n, seed, election_timeout=election_timeout, heartbeat=heartbeat, timeout_fn=timeout_fn
    )
    horizon = default_max_ticks(election_timeout) if max_ticks is None else max_ticks
    cfg = EngineConfig(engine=engine, seed=seed, max_time=horizon, max_steps=None, drop=drop, tick=tick, workers=workers)
    return ClusterTrace(n, seed, run(prog, cfg, channels=names), configs)


# -- checkers ---------------------------------------------------------------


def leaders_by_term(ct: ClusterTrace) -> dict[int, set[str]]:
    out: dict[int, set[str]] = defaultdict(set)
    for le in ct.leaders:
        out[le.term].add(le.node)
    return dict(out)


def check_election_safety(ct: ClusterTrace) -> bool:
    """At most one leader per term."""
    return all(len(nodes) <= 1 for nodes in leaders_by_term(ct).values())


def check_leader_emerges(ct: ClusterTrace) -> bool:
    return bool(ct.leaders)


def _term_of(v: Value) -> int | None:
    p = getattr(v, "payload", None)
    if isinstance(p, Record) and "term" in p:
        return p["term"]
    return None


def check_term_monotonic(ct: ClusterTrace) -> bool:
    """Terms carried by each node's own messages never decrease."""
    pids = {pid: node for node, pid in ct.node_pids().items()}
    last: dict[str, int] = {}
    for e in ct.trace.of(tr.SEND):
        node = pids.get(e.proc)
        term = _term_of(e.value)
        if node is None or term is None:
            continue
        if term < last.get(node, 0):
            return False
        last[node] = term
    return True


def check_single_vote(ct: ClusterTrace) -> bool:
    """No node grants two votes in the same term."""
    grants = Counter(
        (e.value.payload["voter"], e.value.payload["term"]) for e in ct.trace.of(tr.SEND) if e.label == "GrantVote"
    )
    return all(c <= 1 for c in grants.values())


def check_majority_before_leader(ct: ClusterTrace) -> bool:
    """Every leader had a majority of distinct votes, its own included,
    delivered to it before it announced itself."""
    pids = ct.node_pids()
    delivered: dict[tuple[str, int], list[tuple[int, str]]] = defaultdict(list)
    for e in ct.trace.of(tr.DELIVER):
        if e.label == "GrantVote":
            delivered[(e.proc, e.value.payload["term"])].append((e.seq, e.value.payload["voter"]))
    for le in ct.leaders:
        voters = {le.node} | {v for seq, v in delivered[(pids.get(le.node), le.term)] if seq < le.seq}
        if len(voters) < ct.majority:
            return False
    return True


def check_all(ct: ClusterTrace) -> dict[str, bool]:
    return {
        "election_safety": check_election_safety(ct),
        "leader_emerges": check_leader_emerges(ct),
        "term_monotonic": check_term_monotonic(ct),
        "single_vote": check_single_vote(ct),
        "majority_before_leader": check_majority_before_leader(ct),
    }


__all__ = [
    "ClusterTrace", "LeaderElected", "cluster_program", "cluster_channels", "run_cluster", "default_max_ticks",
    "leaders_by_term", "check_election_safety", "check_leader_emerges", "check_term_monotonic",
    "check_single_vote", "check_majority_before_leader", "check_all", "node_name",
]
