"""Protocol types of the three node states.

The types nest the way the states hand over to each other: a follower
becomes a candidate, a candidate a leader, and every state can fall back to
``RecFollower``.  Reply channels carried in requests are referred to as
``rv.reply`` and ``ae.reply``; the fresh vote channel of an election is
``C``.
"""

from __future__ import annotations

from ..conformance import ConformanceEnv
from ..examples import TIMER_EXPIRED, TIMER_RESET
from ..protocol import (
    NIL,
    UNIT,
    BranchT,
    Capability,
    Case,
    ChanT,
    NewChanT,
    OutT,
    ParT,
    RecT,
    TypeExpr,
    VarT,
    union,
)
from .messages import (
    ACK_APPEND,
    ACK_FIELDS,
    AE_FIELDS,
    APPEND_ENTRIES,
    GRANT_VOTE,
    LEADER_ELECTED,
    REFUSE_VOTE,
    REQUEST_VOTE,
    RPC,
    RV_FIELDS,
    VOTE_FIELDS,
    VOTE_RESPONSE,
)
from .node import MONITOR, NodeConfig

I, O = Capability.IN, Capability.OUT


def _follow(cfg: NodeConfig) -> TypeExpr:
    return OutT(cfg.reset, TIMER_RESET, VarT("RecFollower"))


def grant_vote_behaviour(cfg: NodeConfig, reply: str) -> TypeExpr:
    return OutT(reply, GRANT_VOTE, _follow(cfg))


def refuse_vote_behaviour(reply: str, back_to: str) -> TypeExpr:
    return OutT(reply, REFUSE_VOTE, VarT(back_to))


def vote_reply_behaviour(cfg: NodeConfig, reply: str, back_to: str) -> TypeExpr:
    return union(grant_vote_behaviour(cfg, reply), refuse_vote_behaviour(reply, back_to))


def append_reply_behaviour(cfg: NodeConfig, reply: str, back_to: str) -> TypeExpr:
    return union(OutT(reply, ACK_APPEND, VarT(back_to)), OutT(reply, ACK_APPEND, _follow(cfg)))


def _rpc_cases(cfg: NodeConfig, back_to: str) -> tuple[Case, ...]:
    return (
        Case("RequestVote", RV_FIELDS, vote_reply_behaviour(cfg, "rv.reply", back_to), "rv"),
        Case("AppendEntries", AE_FIELDS, append_reply_behaviour(cfg, "ae.reply", back_to), "ae"),
        Case("AckAppendEntries", ACK_FIELDS, union(VarT(back_to), VarT("RecFollower"))),
    )


def broadcast(peers: tuple[str, ...], msg: TypeExpr) -> TypeExpr:
    t: TypeExpr = NIL
    for p in reversed(peers):
        t = OutT(p, msg, t)
    return t


def leader_type(cfg: NodeConfig) -> TypeExpr:
    loop = RecT("RecLeader", BranchT((cfg.inbox, cfg.timeout), (
        *_rpc_cases(cfg, "RecLeader"),
        Case("TimerExpired", UNIT, VarT("RecLeaderHeartbeat")),
    )))
    beat = RecT("RecLeaderHeartbeat", OutT(cfg.reset, TIMER_RESET, ParT(loop, broadcast(cfg.peers, APPEND_ENTRIES))))
    return OutT(MONITOR, LEADER_ELECTED, beat)


def candidate_type(cfg: NodeConfig) -> TypeExpr:
    listen = BranchT(("C", cfg.inbox, cfg.timeout), (
        Case("GrantVote", VOTE_FIELDS, VarT("RecCandidate")),
        Case("RefuseVote", VOTE_FIELDS, union(VarT("RecCandidate"), VarT("RecFollower"))),
        *_rpc_cases(cfg, "RecCandidate"),
        Case("TimerExpired", UNIT, VarT("RecElection")),
    ))
    election = ParT(RecT("RecCandidate", union(listen, leader_type(cfg))), broadcast(cfg.peers, REQUEST_VOTE))
    return RecT("RecElection", OutT(cfg.reset, TIMER_RESET, NewChanT("C", ChanT(Capability.INOUT, VOTE_RESPONSE), election)))


def follower_type(cfg: NodeConfig) -> TypeExpr:
    return RecT("RecFollower", BranchT((cfg.inbox, cfg.timeout), (
        *_rpc_cases(cfg, "RecFollower"),
        Case("TimerExpired", UNIT, candidate_type(cfg)),
    )))


def node_type(cfg: NodeConfig) -> TypeExpr:
    return OutT(cfg.reset, TIMER_RESET, follower_type(cfg))


def node_env(cfg: NodeConfig) -> ConformanceEnv:
    """Channel types of one node, plus the recursion variables that the
    candidate and leader types jump back to."""
    channels = {
        cfg.inbox: ChanT(I, RPC),
        cfg.reset: ChanT(O, TIMER_RESET),
        cfg.timeout: ChanT(I, TIMER_EXPIRED),
        MONITOR: ChanT(O, LEADER_ELECTED),
    }
    for p in cfg.peers:
        channels[p] = ChanT(O, RPC)
    follower = follower_type(cfg)
    candidate = candidate_type(cfg)
    loops = {"RecFollower": follower, "RecElection": candidate}
    return ConformanceEnv(channels=channels, loops=loops)


def all_types(cfg: NodeConfig) -> dict[str, TypeExpr]:
    return {"follower": follower_type(cfg), "candidate": candidate_type(cfg), "leader": leader_type(cfg)}
