import re
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchpi.channels import (
    BadTimeoutDuration,
    ChannelClosed,
    ChannelRegistry,
    ClaimOutcome,
    DeliveredTo,
    Envelope,
    IllegalTransition,
    ImmediateResolve,
    Parked,
    Queued,
    Waiter,
    WaiterState,
    try_claim,
)
from branchpi.values import Labelled

LEGAL = re.compile(r"^P(CP)*(CR)?$")
IN_FLIGHT = re.compile(r"^P(CP)*(CR?)?$")  # may stop mid-claim


def waiter(wid="w", chans=(1,), accept=lambda c, v: True, deadline=None, on_timeout=None):
    return Waiter(wid, "branch", chans, accept, lambda c, env: (c, env.value), deadline, on_timeout)


def history(w: Waiter) -> str:
    return "".join(s.value[0] for s in w.history)


def env(i, label="A"):
    return Envelope(f"m{i}", Labelled(label, i))


class TestClaim:
    def test_single_claimer(self):
        w = waiter()
        assert try_claim(w) is ClaimOutcome.CLAIMED
        assert w.state is WaiterState.CLAIMING

    def test_second_claimer_busy_then_resolved(self):
        w = waiter()
        w.try_claim()
        assert w.try_claim() is ClaimOutcome.BUSY
        w.resolve()
        assert w.try_claim() is ClaimOutcome.ALREADY_RESOLVED

    def test_release(self):
        w = waiter()
        w.try_claim()
        w.release()
        assert w.state is WaiterState.PENDING and w.try_claim() is ClaimOutcome.CLAIMED

    def test_illegal(self):
        w = waiter()
        with pytest.raises(IllegalTransition):
            w.resolve()
        with pytest.raises(IllegalTransition):
            w.release()

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from(["claim", "release", "resolve"]), max_size=12))
    def test_history_is_legal(self, ops):
        w = waiter()
        for op in ops:
            try:
                getattr(w, {"claim": "try_claim"}.get(op, op))()
            except IllegalTransition:
                pass
        assert IN_FLIGHT.match(history(w))
        if w.state is not WaiterState.CLAIMING:
            assert LEGAL.match(history(w))

    def test_threads_exactly_one_winner(self):
        for _ in range(200):
            w = waiter()
            wins = []
            barrier = threading.Barrier(4)

            def go():
                barrier.wait()
                if w.try_claim() is ClaimOutcome.CLAIMED:
                    wins.append(1)
                    w.resolve()

            ts = [threading.Thread(target=go) for _ in range(4)]
            for t in ts:
                t.start()
            for t in ts:
                t.join()
            assert len(wins) == 1


class TestRegistry:
    def test_ids_unique(self):
        reg = ChannelRegistry()
        ids = [reg.create_channel() for _ in range(100_000)]
        assert len(set(ids)) == len(ids)

    def test_names(self):
        reg = ChannelRegistry()
        cid = reg.create_channel("c1")
        assert reg.by_name["c1"] == cid and reg[cid].display == "c1"
        with pytest.raises(ValueError):
            reg.create_channel("c1")

    def test_send_to_waiter(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        w = waiter(chans=(c,))
        assert isinstance(reg.register_waiter(w), Parked)
        out = reg.send_message(c, env(1))
        assert isinstance(out, DeliveredTo) and out.waiter is w
        assert w.state is WaiterState.RESOLVED and reg.linked(w) == []

    def test_send_without_waiter_queues(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        assert isinstance(reg.send_message(c, env(1)), Queued)
        assert [e.msg_id for _, e in reg.residual()] == ["m1"]

    def test_register_takes_queued(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        reg.send_message(c, env(1))
        out = reg.register_waiter(waiter(chans=(c,)))
        assert isinstance(out, ImmediateResolve) and out.envelope.msg_id == "m1"
        assert reg.residual() == []

    def test_register_in_channel_order(self):
        reg = ChannelRegistry()
        a, b = reg.create_channel(), reg.create_channel()
        reg.send_message(a, env(1))
        reg.send_message(b, env(2))
        out = reg.register_waiter(waiter(chans=(b, a)))
        assert out.chan == b

    def test_parked_on_all_channels_then_unlinked(self):
        reg = ChannelRegistry()
        a, b = reg.create_channel(), reg.create_channel()
        w = waiter(chans=(a, b))
        reg.register_waiter(w)
        assert reg.linked(w) == [a, b]
        reg.send_message(b, env(1))
        assert reg.linked(w) == []
        assert isinstance(reg.send_message(a, env(2)), Queued)

    def test_predicate_filters(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        picky = waiter("p", (c,), accept=lambda cid, v: v.label == "B")
        anyone = waiter("a", (c,))
        reg.register_waiter(picky)
        reg.register_waiter(anyone)
        assert reg.send_message(c, env(1, "A")).waiter is anyone
        assert reg.send_message(c, env(2, "B")).waiter is picky

    def test_registration_order(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        first, second = waiter("1", (c,)), waiter("2", (c,))
        reg.register_waiter(first)
        reg.register_waiter(second)
        assert reg.send_message(c, env(1)).waiter is first

    def test_claiming_waiter_is_skipped(self):
        # a timeout holds the claim: the message must stay queued
        reg = ChannelRegistry()
        c = reg.create_channel()
        w = waiter(chans=(c,), deadline=5, on_timeout=lambda: None)
        reg.register_waiter(w)
        assert w.try_claim() is ClaimOutcome.CLAIMED
        assert isinstance(reg.send_message(c, env(1)), Queued)
        w.resolve()
        reg.unlink(w)
        assert [e.msg_id for _, e in reg.residual()] == ["m1"]
        assert w.dispatches == 0

    def test_fifo_head_only(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        reg.send_message(c, env(1, "A"))
        reg.send_message(c, env(2, "B"))
        assert isinstance(reg.register_waiter(waiter(chans=(c,), accept=lambda cid, v: v.label == "B")), Parked)

    def test_deadline_needs_handler(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        with pytest.raises(BadTimeoutDuration):
            reg.register_waiter(waiter(chans=(c,), deadline=3))

    def test_closed(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        reg.close_all()
        with pytest.raises(ChannelClosed):
            reg.send_message(c, env(1))

    def test_stuck_empty_after_normal_use(self):
        reg = ChannelRegistry()
        c = reg.create_channel()
        reg.register_waiter(waiter("p", (c,), accept=lambda cid, v: v.label == "B"))
        reg.send_message(c, env(1, "A"))
        assert reg.stuck() == []

    def test_concurrent_send_and_register_no_lost_wakeup(self):
        # each pair races a sender against a receiver; a message must never sit
        # in a queue while a waiter that accepts it is parked
        reg = ChannelRegistry()
        pairs = 2_000
        chans = [reg.create_channel() for _ in range(pairs)]
        waiters = [waiter(f"w{i}", (c,)) for i, c in enumerate(chans)]

        def senders():
            for i, c in enumerate(chans):
                reg.send_message(c, env(i))

        def receivers():
            for w in waiters:
                reg.register_waiter(w)

        ts = [threading.Thread(target=senders), threading.Thread(target=receivers)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert reg.stuck() == []
        assert reg.residual() == []
        assert all(w.state is WaiterState.RESOLVED for w in waiters)
