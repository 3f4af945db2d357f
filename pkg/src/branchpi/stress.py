"""Race workload: many senders against one timing-out branch.

Every round creates ``width`` fresh channels, starts one sender per channel
and a branch over all of them whose timeout is 0 or 1 tick, so message
delivery and timer expiry compete for the same waiter.  Unchosen messages
stay queued on their channels.
"""

from __future__ import annotations

import random
from collections import Counter
from typing import Callable

from .process import ProcNode, branch, case, catch_timeout, end, new_chan, par, send
from .protocol import INT, LabelledT
from .runtime import Trace
from .runtime import trace as tr
from .values import ChanRef, Labelled

HIT = LabelledT("Hit", INT)


def fresh_channels(n: int, then: Callable[[list[ChanRef]], ProcNode], acc: tuple = ()) -> ProcNode:
    if n == 0:
        return then(list(acc))
    return new_chan(HIT, lambda c: fresh_channels(n - 1, then, acc + (c,)))


def race_program(rounds: int, width: int = 8, seed: int = 0) -> ProcNode:
    rng = random.Random(seed)
    timeouts = [rng.randint(0, 1) for _ in range(rounds)]

    def round_(k: int) -> ProcNode:
        if k == rounds:
            return end()

        def body(chans: list[ChanRef]) -> ProcNode:
            listen = catch_timeout(
                lambda: branch(chans, [case("Hit", INT, lambda _: round_(k + 1))], timeout=timeouts[k]),
                lambda: round_(k + 1),
            )
            return par(listen, *[send(c, Labelled("Hit", i)) for i, c in enumerate(chans)])

        return fresh_channels(width, body)

    return round_(0)


def dispatch_counts(trace: Trace) -> Counter:
    """How many times each waiter's continuation ran."""
    return Counter({w.id: w.dispatches for w in trace.waiters.values()})


def lost_messages(trace: Trace) -> list[str]:
    """Ids of sent messages neither delivered nor left in a queue (nor
    deliberately dropped)."""
    accounted = {e.msg for e in trace.of(tr.DELIVER, tr.RESIDUAL, tr.DROPPED)}
    return [e.msg for e in trace.of(tr.SEND) if e.msg not in accounted]
