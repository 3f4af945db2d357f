"""Raft leader election built on the branching and timeout operators."""

from .behaviour import all_types, candidate_type, follower_type, leader_type, node_env, node_type
from .cluster import (
    ClusterTrace,
    LeaderElected,
    check_all,
    check_election_safety,
    check_leader_emerges,
    check_majority_before_leader,
    check_single_vote,
    check_term_monotonic,
    cluster_program,
    default_max_ticks,
    leaders_by_term,
    run_cluster,
)
from .node import (
    NodeConfig,
    NodeState,
    Vote,
    candidate_process,
    follower_process,
    leader_process,
    node_timer,
    raft_node,
    vote_decision,
)

__all__ = [
    "ClusterTrace", "LeaderElected", "NodeConfig", "NodeState", "Vote", "all_types",
    "candidate_process", "candidate_type", "check_all", "check_election_safety", "check_leader_emerges",
    "check_majority_before_leader", "check_single_vote", "check_term_monotonic", "cluster_program",
    "default_max_ticks", "follower_process", "follower_type", "leader_process", "leader_type", "leaders_by_term",
    "node_env", "node_timer", "node_type", "raft_node", "run_cluster", "vote_decision",
]
