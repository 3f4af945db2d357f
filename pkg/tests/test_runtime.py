import io
import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchpi import examples as ex
from branchpi.process import (
    ChanParam,
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
from branchpi.protocol import INT, UNIT, Capability, LabelledT
from branchpi.runtime import EngineConfig, Trace, naive_poll_order, read_jsonl, run, run_sim
from branchpi.runtime import trace as tr
from branchpi.stress import dispatch_counts, lost_messages, race_program
from branchpi.values import Labelled

HIT = LabelledT("Hit", INT)
ENGINES = ["sim", "executor", "naive"]


def kinds(t: Trace):
    return [e.kind for e in t.events]


def faults(t: Trace):
    return [e.fault for e in t.faults]


class TestConfig:
    def test_defaults(self):
        cfg = EngineConfig()
        assert cfg.engine == "sim" and cfg.max_steps == 1_000_000

    @pytest.mark.parametrize("kw", [{"engine": "fast"}, {"workers": 0}, {"poll_interval": 0}, {"tick": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EngineConfig(**kw)


@pytest.mark.parametrize("engine", ENGINES)
class TestEveryEngine:
    def test_end(self, engine):
        assert kinds(run(end(), EngineConfig(engine=engine))) == [tr.SPAWN, tr.PROC_END]

    def test_agency_accept(self, engine):
        t = run(ex.travel_agency_system(decision="Accept"), EngineConfig(engine=engine), ex.AGENCY_CHANNELS)
        taken = [i for i, e in enumerate(t.events) if e.kind == tr.BRANCH_TAKEN]
        ticket = [i for i, e in enumerate(t.events) if e.kind == tr.SEND and e.value == ex.TICKET]
        assert len(taken) == 1 and t.events[taken[0]].label == "Accept"
        assert t.events[taken[0]].case_index == 0
        assert len(ticket) == 1 and taken[0] < ticket[0]
        assert not t.faults

    def test_timer_expires(self, engine):
        t = run(ex.timer_system([0], 10), EngineConfig(engine=engine, tick=0.002, max_time=60), ex.TIMER_CHANNELS)
        fired = [i for i, e in enumerate(t.events) if e.kind == tr.TIMEOUT_FIRED]
        expired = [i for i, e in enumerate(t.events) if e.kind == tr.SEND and e.label == "TimerExpired"]
        assert len(fired) == 1 and len(expired) == 1 and fired[0] < expired[0]

    def test_seq_increasing_and_exactly_once(self, engine):
        t = run(ex.auction_system(3), EngineConfig(engine=engine, tick=0.002), ex.AUCTION_CHANNELS)
        assert [e.seq for e in t.events] == list(range(len(t.events)))
        assert set(dispatch_counts(t).values()) <= {1}
        assert lost_messages(t) == []
        assert all(w.state != "Claiming" for w in t.waiters.values())
        assert not t.faults

    def test_bad_timeout_inner(self, engine):
        p = catch_timeout(lambda: send("c", 1), lambda: end())
        assert faults(run(p, EngineConfig(engine=engine), ["c"])) == ["BadTimeoutInner"]

    def test_missing_duration(self, engine):
        p = catch_timeout(lambda: recv("c", lambda _: end()), lambda: end())
        assert faults(run(p, EngineConfig(engine=engine), ["c"])) == ["BadTimeoutDuration"]

    def test_uncaught_timeout(self, engine):
        p = recv("c", lambda _: end(), timeout=2)
        assert faults(run(p, EngineConfig(engine=engine), ["c"])) == ["UncaughtTimeout"]

    def test_unresolved_channel(self, engine):
        assert faults(run(send("nowhere", 1), EngineConfig(engine=engine))) == ["UnresolvedChannel"]

    def test_continuation_error(self, engine):
        p = par(recv("c", lambda v: v["missing"]), send("c", 1))
        assert faults(run(p, EngineConfig(engine=engine), ["c"])) == ["ContinuationError"]

    def test_step_budget(self, engine):
        spin = rec("X", lambda: send("c", 1, lambda: loop("X")))
        t = run(spin, EngineConfig(engine=engine, max_steps=500), ["c"])
        assert faults(t) == ["StepBudget"]

    def test_fresh_channels(self, engine):
        def body(c):
            return par(recv(c, lambda v: send("out", v)), send(c, 7))

        t = run(new_chan(INT, body), EngineConfig(engine=engine), ["out"])
        assert [e.value for e in t.of(tr.SEND) if e.chan == "out"] == [7]
        assert not t.faults

    def test_drop_hook(self, engine):
        p = par(send("c", 1, lambda: send("c", 2)), recv("c", lambda v: end(), timeout=None))
        t = run(p, EngineConfig(engine=engine, drop=lambda ch, v: v == 1), ["c"])
        assert [e.value for e in t.of(tr.DROPPED)] == [1]
        assert [e.value for e in t.of(tr.DELIVER)] == [2]
        assert lost_messages(t) == []

    def test_residual_reported(self, engine):
        t = run(send("c", 5), EngineConfig(engine=engine), ["c"])
        assert [(e.chan, e.value) for e in t.of(tr.RESIDUAL)] == [("c", 5)]


class TestSim:
    def test_timer_virtual_time(self):
        t = run_sim(ex.timer_system([0, 4], 10), 1, channels=ex.TIMER_CHANNELS)
        (fired,) = [e for e in t.of(tr.TIMEOUT_FIRED) if e.proc == "p0"]  # the driver's delays fire too
        assert fired.time == 14

    def test_time_non_decreasing(self):
        t = run_sim(ex.auction_system(5), 5, channels=ex.AUCTION_CHANNELS)
        times = [e.time for e in t.events]
        assert times == sorted(times)

    def test_same_seed_same_bytes(self):
        a = run_sim(ex.auction_system(2), 9, channels=ex.AUCTION_CHANNELS)
        b = run_sim(ex.auction_system(2), 9, channels=ex.AUCTION_CHANNELS)
        assert a.to_jsonl() == b.to_jsonl()

    def test_seeds_change_interleaving(self):
        digests = {run_sim(race_program(5, seed=0), s).digest() for s in range(10)}
        assert len(digests) > 1

    def test_silent_auction_times_out(self):
        for seed in range(100):
            t = run_sim(ex.silent_auction(), seed, channels=ex.AUCTION_CHANNELS)
            assert t.of(tr.TIMEOUT_FIRED)

    def test_message_vs_timeout_same_tick(self):
        # the sender and the deadline both land on tick 3
        hit = ChanParam("c", Capability.INOUT, HIT)
        prog = par(
            catch_timeout(
                lambda: branch([hit], [case("Hit", INT, lambda _: end())], timeout=3),
                lambda: end(),
            ),
            delay(3, lambda: send(hit, Labelled("Hit", 1))),
        )
        outcomes = Counter()
        for seed in range(200):
            t = run_sim(prog, seed, channels=["c"])
            main = [e for e in t.of(tr.BRANCH_TAKEN, tr.TIMEOUT_FIRED) if e.proc == "p0"]
            assert len(main) == 1
            outcomes[main[0].kind] += 1
            if main[0].kind == tr.TIMEOUT_FIRED:
                assert [e.value for e in t.of(tr.RESIDUAL)] == [Labelled("Hit", 1)]
            assert lost_messages(t) == []
        assert outcomes[tr.BRANCH_TAKEN] and outcomes[tr.TIMEOUT_FIRED]

    def test_zero_timeout_fires_without_waiting(self):
        p = catch_timeout(lambda: recv("c", lambda _: end(), timeout=0), lambda: send("out", 1))
        t = run_sim(p, 0, channels=["c", "out"])
        assert t.of(tr.TIMEOUT_FIRED)[0].time == 0

    def test_horizon(self):
        spin = rec("X", lambda: delay(5, lambda: loop("X")))
        t = run(spin, EngineConfig(max_time=50, max_steps=None))
        assert t.end_time <= 50 and not t.faults

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.integers(1, 6))
    def test_stress_exactly_once(self, seed, rounds):
        t = run_sim(race_program(rounds, seed=seed), seed)
        counts = dispatch_counts(t)
        assert len(counts) == rounds and set(counts.values()) == {1}
        assert lost_messages(t) == []


class TestExecutor:
    @pytest.mark.parametrize("workers", [1, 4, 16])
    def test_stress(self, workers):
        t = run(race_program(200, seed=workers), EngineConfig(engine="executor", workers=workers, max_steps=None))
        counts = dispatch_counts(t)
        assert len(counts) == 200 and set(counts.values()) == {1}
        assert lost_messages(t) == []
        assert all(w.state == "Resolved" for w in t.waiters.values())

    def test_timeout_in_wall_time(self):
        t = run(ex.silent_auction(ex.AuctionConfig(patience=5, max_drops=1)),
                EngineConfig(engine="executor", tick=0.002), ex.AUCTION_CHANNELS)
        assert [e.label for e in t.of(tr.SEND)] == ["PriceLowered", "Unsold"]


class TestNaive:
    def test_poll_order_single(self):
        assert naive_poll_order(["a"], 3, 0) == ["a"]

    def test_poll_order_deterministic(self):
        assert naive_poll_order(list("abcdef"), 7, 12) == naive_poll_order(list("abcdef"), 7, 12)

    def test_poll_order_is_permutation(self):
        for r in range(50):
            assert sorted(naive_poll_order(list(range(8)), 1, r)) == list(range(8))

    def test_two_channels_fair(self):
        firsts = Counter(naive_poll_order(["a", "b"], 0, r)[0] for r in range(10_000))
        assert abs(firsts["a"] - 5000) <= 300 and abs(firsts["b"] - 5000) <= 300

    @pytest.mark.parametrize("n", range(2, 9))
    def test_fair_up_to_eight(self, n):
        rounds = 20_000
        firsts = Counter(naive_poll_order(list(range(n)), 5, r)[0] for r in range(rounds))
        for c in range(n):
            assert abs(firsts[c] / rounds - 1 / n) <= 0.05

    def test_branch_over_two_channels(self):
        d = ChanParam("d", Capability.INOUT, ex.DECISION)
        c1 = ChanParam("c1", Capability.INOUT, ex.DECISION)
        p = par(
            branch([c1, d], [case("Accept", UNIT, lambda _: end()), case("Reject", UNIT, lambda _: end())]),
            send(d, Labelled("Reject")),
        )
        t = run(p, EngineConfig(engine="naive"), ["c1", "d"])
        assert [(e.chan, e.label) for e in t.of(tr.BRANCH_TAKEN)] == [("d", "Reject")]


class TestTraceFormat:
    def test_jsonl(self):
        t = run_sim(ex.travel_agency_system(decision="Accept"), 0, channels=ex.AGENCY_CHANNELS)
        buf = io.StringIO()
        t.write(buf)
        lines = buf.getvalue().splitlines()
        header, events = read_jsonl(lines)
        assert header == {"schema": tr.SCHEMA, "engine": "sim", "seed": 0}
        assert len(events) == len(t.events)
        for raw, ev in zip(events, t.events):
            assert list(raw)[:3] == ["seq", "time", "kind"]
            assert raw["kind"] == ev.kind
        taken = next(r for r in events if r["kind"] == tr.BRANCH_TAKEN)
        assert list(taken) == [k for k in tr.FIELDS if k in taken]
        assert taken["caseIndex"] == 0 and taken["label"] == "Accept"

    def test_bad_schema(self):
        with pytest.raises(ValueError):
            read_jsonl([json.dumps({"schema": "other"})])

    def test_multiset_ignores_seq_and_time(self):
        a = run_sim(ex.timer_system([0], 10), 0, channels=ex.TIMER_CHANNELS)
        b = run_sim(ex.timer_system([0], 10), 1, channels=ex.TIMER_CHANNELS)
        assert a.multiset() == b.multiset()
