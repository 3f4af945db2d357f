"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import hashlib
import sys
import time
from dataclasses import replace

import pytest

from branchpi import examples as ex
from branchpi.conformance import check
from branchpi.process import ChanParam, ConstructionError, ConstructionErrorKind, case, end, mk_branch
from branchpi.protocol import BranchT, Capability, DiagKind, LabelledT, branch_type_valid, flatten_union, iter_branches, resolve_ref
from branchpi.raft import all_types, check_election_safety, check_leader_emerges, cluster_program, node_env, run_cluster
from branchpi.runtime import EngineConfig, run, run_sim
from branchpi.runtime import trace as tr
from branchpi.stress import dispatch_counts, lost_messages, race_program

STRESS_ROUNDS = 1000
SIM_SEEDS = 1000
SIM_ROUNDS = 50  # per seed; 1000 rounds for each of 1000 seeds would not fit the time budget


def report(capsys, number: int, title: str, ok: bool, elapsed: float, limit: float | None, detail: str = "") -> None:
    budget = f" / {limit:g} s" if limit is not None else ""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({elapsed:.2f} s{budget}){' ' + detail if detail else ''}"
    with capsys.disabled():
        print("\n" + line)


def within(elapsed: float, limit: float | None) -> bool:
    return limit is None or elapsed < limit


# -- 1 ----------------------------------------------------------------------


def test_conformance_fidelity(capsys):
    t0 = time.perf_counter()
    good = check(ex.travel_agency(), ex.AGENCY_TYPE, ex.AGENCY_ENV)
    bad = check(ex.travel_agency_faulty(), ex.AGENCY_TYPE, ex.AGENCY_ENV)
    elapsed = time.perf_counter() - t0
    at_reject = [d for d in bad if d.path.endswith("/branch/Reject")]
    ok = good == [] and len(at_reject) >= 1 and within(elapsed, 1)
    report(capsys, 1, "conformance fidelity", ok, elapsed, 1,
           f"good: {len(good)} diagnostics, mutant: {len(at_reject)} at the Reject continuation")
    assert good == []
    assert at_reject and at_reject[0].kind is DiagKind.SHAPE_MISMATCH
    assert within(elapsed, 1)


# -- 2 ----------------------------------------------------------------------


def example_branches():
    """Every branch type in the example protocols, with its channel scope."""
    out = []
    for name, t, env in [
        ("agency", ex.AGENCY_TYPE, ex.AGENCY_ENV.channels),
        ("auction", ex.AUCTION_TYPE, ex.AUCTION_ENV.channels),
    ]:
        out += [(name, b, scope) for b, scope, _ in iter_branches(t, env)]
    cfg = cluster_program(3)[2][0]
    raft_env = node_env(cfg).channels
    seen = set()
    for state, t in all_types(cfg).items():
        for b, scope, _ in iter_branches(t, raft_env):
            if b not in seen:
                seen.add(b)
                out.append((f"raft-{state}", b, scope))
    return out


def incoming_labels(b: BranchT, env) -> set[str]:
    labels = set()
    for r in b.chans:
        labels |= {m.label for m in flatten_union(resolve_ref(r, env).payload) if isinstance(m, LabelledT)}
    return labels


def test_branch_validity(capsys):
    t0 = time.perf_counter()
    branches = example_branches()
    problems = []
    checked = 0
    for name, b, env in branches:
        if branch_type_valid(b, env):
            problems.append(f"{name}: fixture itself invalid")
        for i, dropped in enumerate(b.cases):
            cut = BranchT(b.chans, b.cases[:i] + b.cases[i + 1:])
            expected = sorted(incoming_labels(b, env) - {c.label for c in cut.cases})
            got = [(d.kind, d.label) for d in branch_type_valid(cut, env)]
            if got != [(DiagKind.UNCOVERED_LABEL, lb) for lb in expected] or expected != [dropped.label]:
                problems.append(f"{name} without {dropped.label}: {got}")
            dup = BranchT(b.chans, b.cases + (dropped,))
            got = [(d.kind, d.label) for d in branch_type_valid(dup, env)]
            if got != [(DiagKind.DUPLICATE_LABEL, dropped.label)]:
                problems.append(f"{name} with {dropped.label} twice: {got}")
            checked += 2
        for j in range(len(b.chans)):
            chans = [ChanParam(str(r), Capability.IN, resolve_ref(r, env).payload) for r in b.chans]
            chans[j] = replace(chans[j], capability=Capability.OUT)
            try:
                mk_branch(chans, [case(c.label, c.arg, lambda _: end()) for c in b.cases])
                problems.append(f"{name}: output channel {chans[j].name} accepted")
            except ConstructionError as err:
                if err.kind is not ConstructionErrorKind.NOT_INPUT_CHANNEL:
                    problems.append(f"{name}: {err.kind} for an output channel")
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = not problems and within(elapsed, 1)
    report(capsys, 2, "branch validity", ok, elapsed, 1, f"{len(branches)} branch types, {checked} mutants")
    assert len(branches) >= 5
    assert problems == []
    assert within(elapsed, 1)


# -- 3 and 4 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def stress_results():
    t0 = time.perf_counter()
    runs = []
    for workers in (1, 4, 16):
        cfg = EngineConfig(engine="executor", workers=workers, seed=workers, max_steps=None)
        t = run(race_program(STRESS_ROUNDS, seed=workers), cfg)
        runs.append((f"executor/{workers}", STRESS_ROUNDS, dispatch_counts(t), lost_messages(t), len(t.of(tr.SEND))))
    for seed in range(SIM_SEEDS):
        t = run_sim(race_program(SIM_ROUNDS, seed=seed), seed)
        runs.append((f"sim/{seed}", SIM_ROUNDS, dispatch_counts(t), lost_messages(t), len(t.of(tr.SEND))))
    return runs, time.perf_counter() - t0


def test_exactly_once_under_races(capsys, stress_results):
    runs, elapsed = stress_results
    bad = [
        name for name, rounds, counts, _, _ in runs
        if len(counts) != rounds or any(c != 1 for c in counts.values())
    ]
    waiters = sum(len(r[2]) for r in runs)
    ok = not bad and within(elapsed, 60)
    report(capsys, 3, "exactly-once under races", ok, elapsed, 60,
           f"{len(runs)} runs, {waiters} waiters, {len(bad)} runs with a count other than 1")
    assert bad == []
    assert within(elapsed, 60)


def test_no_message_loss(capsys, stress_results):
    runs, _ = stress_results
    t0 = time.perf_counter()
    lost = {name: missing for name, _, _, missing, _ in runs if missing}
    sends = sum(r[4] for r in runs)
    ok = not lost
    report(capsys, 4, "no message loss", ok, time.perf_counter() - t0, None,
           f"{sends} sends across {len(runs)} runs, {sum(map(len, lost.values()))} unaccounted")
    assert lost == {}


# -- 5 ----------------------------------------------------------------------


def quiet_gap(sc: ex.AuctionScenario, patience: int) -> bool:
    """Some stretch before the close longer than ``patience`` has no bid."""
    marks = [0] + [t for t in sc.bid_times if t < sc.close_at] + [sc.close_at]
    return any(b - a > patience for a, b in zip(marks, marks[1:]))


def test_auction_semantics(capsys):
    t0 = time.perf_counter()
    cfg = ex.AuctionConfig()
    trapped_total = 0
    problems = []
    expected_timeouts = timed_out = 0
    for seed in range(100):
        sc = ex.auction_scenario(seed)
        t = run_sim(ex.auction_system(seed, cfg, sc), seed, channels=ex.AUCTION_CHANNELS)
        close = [e for e in t.of(tr.BRANCH_TAKEN) if e.proc == "p0" and e.label == "CloseAuction"]
        if close:
            late = {e.msg for e in t.events if e.kind == tr.SEND and e.label == "Bid" and e.seq > close[0].seq}
            delivered = {e.msg for e in t.of(tr.DELIVER) if e.proc == "p0"}
            residual = {e.msg for e in t.of(tr.RESIDUAL)}
            if late & delivered or not late <= residual:
                problems.append(f"seed {seed}: late bids {sorted(late)} not all queued")
            trapped_total += len(late)
        if quiet_gap(sc, cfg.patience):
            expected_timeouts += 1
            timed_out += any(e.proc == "p0" for e in t.of(tr.TIMEOUT_FIRED))
    silent = sum(
        any(e.proc == "p0" for e in run_sim(ex.silent_auction(cfg), seed, channels=ex.AUCTION_CHANNELS).of(tr.TIMEOUT_FIRED))
        for seed in range(100)
    )
    elapsed = time.perf_counter() - t0
    ok = not problems and trapped_total > 0 and silent == 100 and timed_out == expected_timeouts and within(elapsed, 10)
    report(capsys, 5, "auction-house semantics", ok, elapsed, 10,
           f"{trapped_total} late bids all queued; silent auctions timed out {silent}/100; "
           f"quiet scenarios timed out {timed_out}/{expected_timeouts}")
    assert problems == []
    assert trapped_total > 0  # the property is not vacuous
    assert silent == 100
    assert timed_out == expected_timeouts
    assert within(elapsed, 10)


# -- 6 ----------------------------------------------------------------------


def expiry_times(resets: list[int], duration: int, seed: int) -> list[int]:
    t = run_sim(ex.timer_system(resets, duration), seed, channels=ex.TIMER_CHANNELS)
    return [e.time for e in t.of(tr.SEND) if e.chan == "timeout" and e.label == "TimerExpired"]


def test_timer_semantics(capsys):
    t0 = time.perf_counter()
    duration = 150
    cases = {
        "reset, silence": ([0], [duration]),
        "reset, reset, silence": ([0, 60], [60 + duration]),
        "late reset, reset, silence": ([30, 100], [100 + duration]),
        "no reset": ([], []),
    }
    wrong = []
    for name, (resets, expected) in cases.items():
        for seed in range(5):
            got = expiry_times(resets, duration, seed)
            if got != expected:
                wrong.append(f"{name} seed {seed}: expired at {got}, expected {expected}")
    elapsed = time.perf_counter() - t0
    ok = not wrong and within(elapsed, 1)
    report(capsys, 6, "timer semantics", ok, elapsed, 1, f"{len(cases)} scenarios x 5 seeds, exact virtual ticks")
    assert wrong == []
    assert within(elapsed, 1)


# -- 7 ----------------------------------------------------------------------


def test_raft_election_safety(capsys):
    t0 = time.perf_counter()
    unsafe, emerged = [], {1: 0, 3: 0, 5: 0}
    for n in (1, 3, 5):
        for seed in range(100):
            ct = run_cluster(n, seed)  # horizon defaults to 50x the largest election timeout
            if not check_election_safety(ct):
                unsafe.append((n, seed))
            emerged[n] += check_leader_emerges(ct)
    elapsed = time.perf_counter() - t0
    liveness = (emerged[3] + emerged[5]) / 200
    ok = not unsafe and liveness >= 0.99 and within(elapsed, 120)
    report(capsys, 7, "raft election safety", ok, elapsed, 120,
           f"safe in {300 - len(unsafe)}/300 runs; leader emerged n=1 {emerged[1]}/100, "
           f"n=3 {emerged[3]}/100, n=5 {emerged[5]}/100")
    assert unsafe == []
    assert liveness >= 0.99
    assert within(elapsed, 120)


# -- 8 ----------------------------------------------------------------------


def scenarios():
    return {
        "travel-agency": lambda: (ex.travel_agency_system(3), ex.AGENCY_CHANNELS, 3),
        "auction-house": lambda: (ex.auction_system(11), ex.AUCTION_CHANNELS, 11),
        "timer": lambda: (ex.timer_system([0, 7, 30], 20), ex.TIMER_CHANNELS, 5),
        "race": lambda: (race_program(20, seed=2), (), 2),
        "raft-3": lambda: cluster_program(3, 6)[:2] + (6,),
    }


def test_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    differing = []
    for name, make in scenarios().items():
        hashes = set()
        for i in range(20):
            prog, channels, seed = make()
            trace = run(prog, EngineConfig(seed=seed, max_time=3000), channels)
            path = tmp_path / f"{name}-{i}.jsonl"
            with open(path, "w", encoding="utf-8") as fp:
                trace.write(fp)
            hashes.add(hashlib.sha256(path.read_bytes()).hexdigest())
        if len(hashes) != 1:
            differing.append(name)
    elapsed = time.perf_counter() - t0
    ok = not differing and within(elapsed, 10)
    report(capsys, 8, "determinism", ok, elapsed, 10, f"5 scenarios x 20 repeats, {len(differing)} with differing hashes")
    assert differing == []
    assert within(elapsed, 10)


# -- 9 ----------------------------------------------------------------------


def test_engine_agreement(capsys):
    t0 = time.perf_counter()
    programs = {
        "agency-accept": (lambda: ex.travel_agency_system(decision="Accept"), ex.AGENCY_CHANNELS),
        "agency-reject": (lambda: ex.travel_agency_system(decision="Reject"), ex.AGENCY_CHANNELS),
        "timer-once": (lambda: ex.timer_system([0], 20), ex.TIMER_CHANNELS),
        "timer-twice": (lambda: ex.timer_system([0, 5], 20), ex.TIMER_CHANNELS),
        "timer-never": (lambda: ex.timer_system([], 20), ex.TIMER_CHANNELS),
    }
    disagree = []
    for name, (make, channels) in programs.items():
        reference = None
        for engine in ("sim", "executor", "naive"):
            # threaded engines measure ticks on the wall clock; 5 ms keeps the
            # resets well ahead of the deadlines on a loaded machine
            cfg = EngineConfig(engine=engine, seed=1, tick=0.005, max_time=200)
            ms = run(make(), cfg, channels).multiset()
            if reference is None:
                reference = ms
            elif ms != reference:
                disagree.append(f"{name}/{engine}")
    elapsed = time.perf_counter() - t0
    ok = not disagree and within(elapsed, 10)
    report(capsys, 9, "engine agreement", ok, elapsed, 10,
           f"{len(programs)} programs x 3 engines, {len(disagree)} disagreements")
    assert disagree == []
    assert within(elapsed, 10)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
