"""Raft election messages: value constructors and their payload types."""

from __future__ import annotations

from dataclasses import replace

from ..examples import TIMER_EXPIRED, TIMER_RESET
from ..protocol import INT, STRING, Capability, ChanT, LabelledT, RecordT, union
from ..values import ChanRef, Labelled, record

VOTE_FIELDS = RecordT((("term", INT), ("voter", STRING)))
GRANT_VOTE = LabelledT("GrantVote", VOTE_FIELDS)
REFUSE_VOTE = LabelledT("RefuseVote", VOTE_FIELDS)
VOTE_RESPONSE = union(GRANT_VOTE, REFUSE_VOTE)

ACK_FIELDS = RecordT((("term", INT), ("follower", STRING)))
ACK_APPEND = LabelledT("AckAppendEntries", ACK_FIELDS)

RV_FIELDS = RecordT((("term", INT), ("candidate", STRING), ("reply", ChanT(Capability.OUT, VOTE_RESPONSE))))
REQUEST_VOTE = LabelledT("RequestVote", RV_FIELDS)

AE_FIELDS = RecordT((("term", INT), ("leader", STRING), ("reply", ChanT(Capability.OUT, ACK_APPEND))))
APPEND_ENTRIES = LabelledT("AppendEntries", AE_FIELDS)

RPC = union(REQUEST_VOTE, APPEND_ENTRIES, ACK_APPEND)

LEADER_ELECTED = LabelledT("LeaderElected", RecordT((("node", STRING), ("term", INT))))

__all__ = [
    "VOTE_FIELDS", "GRANT_VOTE", "REFUSE_VOTE", "VOTE_RESPONSE", "ACK_FIELDS", "ACK_APPEND",
    "RV_FIELDS", "REQUEST_VOTE", "AE_FIELDS", "APPEND_ENTRIES", "RPC", "LEADER_ELECTED",
    "TIMER_RESET", "TIMER_EXPIRED",
    "request_vote", "append_entries", "grant_vote", "refuse_vote", "ack_append", "timer_reset",
    "leader_elected", "output_end",
]


def output_end(ch: ChanRef, payload=None) -> ChanRef:
    """The send-only view of ``ch`` handed to a peer as a reply channel."""
    return replace(ch, capability=Capability.OUT, payload=ch.payload if payload is None else payload)


def request_vote(term: int, candidate: str, reply: ChanRef) -> Labelled:
    return Labelled("RequestVote", record(term=term, candidate=candidate, reply=reply))


def append_entries(term: int, leader: str, reply: ChanRef) -> Labelled:
    return Labelled("AppendEntries", record(term=term, leader=leader, reply=reply))


def grant_vote(term: int, voter: str) -> Labelled:
    return Labelled("GrantVote", record(term=term, voter=voter))


def refuse_vote(term: int, voter: str) -> Labelled:
    return Labelled("RefuseVote", record(term=term, voter=voter))


def ack_append(term: int, follower: str) -> Labelled:
    return Labelled("AckAppendEntries", record(term=term, follower=follower))


def timer_reset(duration: int | None = None) -> Labelled:
    return Labelled("TimerReset", duration)


def leader_elected(node: str, term: int) -> Labelled:
    return Labelled("LeaderElected", record(node=node, term=term))
