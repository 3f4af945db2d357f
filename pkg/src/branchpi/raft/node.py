"""Follower, candidate and leader processes of one Raft node.

Node state lives on the host side: each transition returns a fresh process
built from the new state, so a ``rec`` node is re-entered with updated
arguments rather than mutated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from enum import Enum
from typing import Callable

from ..examples import timer_process
from ..process import (
    ChanParam,
    ProcNode,
    branch,
    case,
    loop,
    new_chan,
    par,
    rec,
    send,
    seq_sends,
)
from ..protocol import UNIT, Capability
from ..values import ChanRef, Record
from .messages import (
    ACK_APPEND,
    ACK_FIELDS,
    AE_FIELDS,
    LEADER_ELECTED,
    RPC,
    RV_FIELDS,
    TIMER_EXPIRED,
    TIMER_RESET,
    VOTE_FIELDS,
    VOTE_RESPONSE,
    ack_append,
    append_entries,
    grant_vote,
    leader_elected,
    output_end,
    refuse_vote,
    request_vote,
    timer_reset,
)

MONITOR = "monitor"

I, O = Capability.IN, Capability.OUT


def node_name(i: int) -> str:
    return f"n{i}"


def node_channels(i: int) -> tuple[str, str, str]:
    """Inbox, timer-reset and timer-expiry channel names of node ``i``."""
    n = node_name(i)
    return f"{n}.inbox", f"{n}.reset", f"{n}.timeout"


@dataclass(frozen=True)
class NodeConfig:
    id: int
    n: int
    inbox_ref: ChanRef
    seed: int = 0
    election_timeout: tuple[int, int] = (150, 300)
    heartbeat: int = 50
    timeout_fn: Callable[[int, int], int] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        lo, hi = self.election_timeout
        if not 0 < lo <= hi:
            raise ValueError(f"bad election timeout range {self.election_timeout}")
        if not 0 < self.heartbeat < lo:
            raise ValueError("heartbeat interval must be positive and below the election timeout")
        if not 0 <= self.id < self.n:
            raise ValueError(f"node id {self.id} outside cluster of {self.n}")

    @property
    def name(self) -> str:
        return node_name(self.id)

    @property
    def inbox(self) -> str:
        return node_channels(self.id)[0]

    @property
    def reset(self) -> str:
        return node_channels(self.id)[1]

    @property
    def timeout(self) -> str:
        return node_channels(self.id)[2]

    @property
    def peers(self) -> tuple[str, ...]:
        return tuple(node_channels(j)[0] for j in range(self.n) if j != self.id)

    @property
    def majority(self) -> int:
        return self.n // 2 + 1

    def election_timeout_for(self, term: int) -> int:
        if self.timeout_fn is not None:
            return self.timeout_fn(self.id, term)
        return _draw_timeout(self.seed, self.id, term, *self.election_timeout)

    @cached_property
    def chans(self) -> tuple[ChanParam, ChanParam, ChanParam]:
        """Inbox, reset and timeout as the node itself sees them."""
        return (
            ChanParam(self.inbox, I, RPC),
            ChanParam(self.reset, O, TIMER_RESET),
            ChanParam(self.timeout, I, TIMER_EXPIRED),
        )


@lru_cache(maxsize=4096)
def _draw_timeout(seed: int, node: int, term: int, lo: int, hi: int) -> int:
    return random.Random(f"{seed}/{node}/{term}").randint(lo, hi)


@dataclass(frozen=True)
class NodeState:
    term: int = 0
    voted_for: str | None = None  # vote cast in ``term``

    def at_term(self, term: int) -> "NodeState":
        return self if term == self.term else NodeState(term, None)


class Vote(Enum):
    GRANT = "Grant"
    REFUSE = "Refuse"


def vote_decision(state: NodeState, rv: Record) -> tuple[Vote, NodeState]:
    """Grant iff the request is not stale and this term's vote is free or
    already cast for the same candidate."""
    term, candidate = rv["term"], rv["candidate"]
    if term < state.term:
        return Vote.REFUSE, state
    prior = state.voted_for if term == state.term else None
    if prior is None or prior == candidate:
        return Vote.GRANT, NodeState(term, candidate)
    return Vote.REFUSE, state


# -- shared reply behaviours ------------------------------------------------

Stay = Callable[[NodeState], ProcNode]


def reply_vote(cfg: NodeConfig, state: NodeState, rv: Record, stay: Stay) -> ProcNode:
    decision, new = vote_decision(state, rv)
    reply = rv["reply"]
    if decision is Vote.GRANT:
        _, reset, _ = cfg.chans
        return send(reply, grant_vote(new.term, cfg.name), lambda: send(
            reset, timer_reset(cfg.election_timeout_for(new.term)), lambda: follower_process(cfg, new)))
    return send(reply, refuse_vote(state.term, cfg.name), lambda: stay(state))


def reply_append(cfg: NodeConfig, state: NodeState, ae: Record, stay: Stay) -> ProcNode:
    reply = ae["reply"]
    if ae["term"] < state.term:
        return send(reply, ack_append(state.term, cfg.name), lambda: stay(state))
    new = state.at_term(ae["term"])
    _, reset, _ = cfg.chans
    return send(reply, ack_append(new.term, cfg.name), lambda: send(
        reset, timer_reset(cfg.election_timeout_for(new.term)), lambda: follower_process(cfg, new)))


def on_ack(cfg: NodeConfig, state: NodeState, ack: Record, stay: Stay) -> ProcNode:
    if ack["term"] > state.term:
        return follower_process(cfg, state.at_term(ack["term"]))
    return stay(state)


def _rpc_cases(cfg: NodeConfig, state: NodeState, stay: Stay):
    return [
        case("RequestVote", RV_FIELDS, lambda rv: reply_vote(cfg, state, rv, stay)),
        case("AppendEntries", AE_FIELDS, lambda ae: reply_append(cfg, state, ae, stay)),
        case("AckAppendEntries", ACK_FIELDS, lambda ack: on_ack(cfg, state, ack, stay)),
    ]


# -- the three states -------------------------------------------------------


def follower_process(cfg: NodeConfig, state: NodeState) -> ProcNode:
    inbox, _, timeout = cfg.chans
    stay = lambda s: follower_process(cfg, s)  # noqa: E731
    return rec("RecFollower", lambda: branch([inbox, timeout], [
        *_rpc_cases(cfg, state, stay),
        case("TimerExpired", UNIT, lambda _: candidate_process(cfg, state)),
    ]))


def candidate_process(cfg: NodeConfig, state: NodeState) -> ProcNode:
    """Start an election for the next term; a timeout starts another one."""
    return rec("RecElection", lambda: _election(cfg, state))


def _election(cfg: NodeConfig, state: NodeState) -> ProcNode:
    new = NodeState(state.term + 1, cfg.name)
    _, reset, _ = cfg.chans

    def with_reply_chan(c: ChanRef) -> ProcNode:
        rv = request_vote(new.term, cfg.name, output_end(c))
        return par(
            candidate_loop(cfg, new, c, frozenset({cfg.name})),
            seq_sends([(ChanParam(p, O, RPC), rv) for p in cfg.peers]),
        )

    return send(reset, timer_reset(cfg.election_timeout_for(new.term)), lambda: new_chan(VOTE_RESPONSE, with_reply_chan))


def candidate_loop(cfg: NodeConfig, state: NodeState, c: ChanRef, votes: frozenset) -> ProcNode:
    inbox, _, timeout = cfg.chans
    stay = lambda s: candidate_loop(cfg, s, c, votes)  # noqa: E731

    def on_grant(g: Record) -> ProcNode:
        if g["term"] == state.term:
            return candidate_loop(cfg, state, c, votes | {g["voter"]})
        return stay(state)

    def on_refuse(r: Record) -> ProcNode:
        if r["term"] > state.term:
            return follower_process(cfg, state.at_term(r["term"]))
        return stay(state)

    def body() -> ProcNode:
        if len(votes) >= cfg.majority:
            return leader_process(cfg, state)
        return branch([c, inbox, timeout], [
            case("GrantVote", VOTE_FIELDS, on_grant),
            case("RefuseVote", VOTE_FIELDS, on_refuse),
            *_rpc_cases(cfg, state, stay),
            case("TimerExpired", UNIT, lambda _: candidate_process(cfg, state)),
        ])

    return rec("RecCandidate", body)


def leader_process(cfg: NodeConfig, state: NodeState) -> ProcNode:
    """Announce on the monitor, then heartbeat every ``cfg.heartbeat`` ticks."""
    monitor = ChanParam(MONITOR, O, LEADER_ELECTED)
    _, reset, _ = cfg.chans
    ae = append_entries(state.term, cfg.name, output_end(cfg.inbox_ref, ACK_APPEND))

    def heartbeat() -> ProcNode:
        return send(reset, timer_reset(cfg.heartbeat), lambda: par(
            leader_loop(cfg, state),
            seq_sends([(ChanParam(p, O, RPC), ae) for p in cfg.peers]),
        ))

    return send(monitor, leader_elected(cfg.name, state.term), lambda: rec("RecLeaderHeartbeat", heartbeat))


def leader_loop(cfg: NodeConfig, state: NodeState) -> ProcNode:
    inbox, _, timeout = cfg.chans
    stay = lambda s: leader_loop(cfg, s)  # noqa: E731
    return rec("RecLeader", lambda: branch([inbox, timeout], [
        *_rpc_cases(cfg, state, stay),
        case("TimerExpired", UNIT, lambda _: loop("RecLeaderHeartbeat")),
    ]))


def raft_node(cfg: NodeConfig, state: NodeState = NodeState()) -> ProcNode:
    """Arm the timer, then start as a follower."""
    _, reset, _ = cfg.chans
    return send(reset, timer_reset(cfg.election_timeout_for(state.term)), lambda: follower_process(cfg, state))


def node_timer(cfg: NodeConfig) -> ProcNode:
    return timer_process(cfg.reset, cfg.timeout, cfg.election_timeout[0])
