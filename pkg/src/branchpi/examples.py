"""Example protocols: travel agency, auction house and timer.

Each example comes as a behavioural type, a conforming process, a faulty
variant and a small runnable system that pairs the process with clients.
``FIXTURES`` maps names to ``(process, type, env)`` for checking.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .conformance import ConformanceEnv
from .process import (
    ChanParam,
    ProcNode,
    branch,
    case,
    catch_timeout,
    delay,
    end,
    loop,
    par,
    rec,
    recv,
    send,
)
from .protocol import (
    INT,
    NIL,
    STRING,
    UNIT,
    BranchT,
    Capability,
    Case,
    ChanT,
    InT,
    LabelledT,
    OutT,
    RecT,
    TimeoutT,
    TypeExpr,
    VarT,
    union,
)
from .values import Labelled

I, O = Capability.IN, Capability.OUT

# -- travel agency ----------------------------------------------------------

DECISION = union(LabelledT("Accept", UNIT), LabelledT("Reject", UNIT))

AGENCY_ENV = ConformanceEnv(channels={"c1": ChanT(I, DECISION), "c2": ChanT(O, STRING)})

AGENCY_TYPE = BranchT(
    ("c1",),
    (
        Case("Accept", UNIT, OutT("c2", STRING)),
        Case("Reject", UNIT, NIL),
    ),
)

# The same protocol with a plain receive: the ticket is an internal choice,
# so it cannot tell a correct agency from one that tickets rejections.
AGENCY_WEAK_TYPE = InT("c1", DECISION, "d", union(OutT("c2", STRING), NIL))

TICKET = "Your ticket"

_c1 = ChanParam("c1", I, DECISION)
_c2 = ChanParam("c2", O, STRING)


def travel_agency() -> ProcNode:
    return branch([_c1], [
        case("Accept", UNIT, lambda _: send(_c2, TICKET)),
        case("Reject", UNIT, lambda _: end()),
    ])


def travel_agency_faulty() -> ProcNode:
    """Sends a ticket after a rejection."""
    return branch([_c1], [
        case("Accept", UNIT, lambda _: send(_c2, TICKET)),
        case("Reject", UNIT, lambda _: send(_c2, TICKET)),
    ])


def travel_agency_recv(ticket_on_reject: bool = False) -> ProcNode:
    """Agency written with a single receive and a host-level match."""

    def decide(d: Labelled) -> ProcNode:
        if d.label == "Accept" or ticket_on_reject:
            return send(_c2, TICKET)
        return end()

    return recv(_c1, decide)


def client_decision(seed: int) -> str:
    return "Accept" if random.Random(seed).random() < 0.5 else "Reject"


def travel_client(decision: str) -> ProcNode:
    c1 = ChanParam("c1", O, DECISION)
    c2 = ChanParam("c2", I, STRING)
    if decision == "Accept":
        return send(c1, Labelled("Accept"), lambda: recv(c2, lambda _: end()))
    return send(c1, Labelled(decision))


def travel_agency_system(seed: int = 0, decision: str | None = None, faulty: bool = False) -> ProcNode:
    agency = travel_agency_faulty() if faulty else travel_agency()
    return par(agency, travel_client(decision or client_decision(seed)))


AGENCY_CHANNELS = ("c1", "c2")

# -- auction house ----------------------------------------------------------

BID = LabelledT("Bid", INT)
CLOSE = LabelledT("CloseAuction", UNIT)
PRICE_LOWERED = LabelledT("PriceLowered", INT)
UNSOLD = LabelledT("Unsold", UNIT)

AUCTION_ENV = ConformanceEnv(channels={
    "bids": ChanT(I, BID),
    "control": ChanT(I, CLOSE),
    "announce": ChanT(O, union(PRICE_LOWERED, UNSOLD)),
})

AUCTION_BRANCH = BranchT(
    ("bids", "control"),
    (
        Case("Bid", INT, VarT("Auction")),
        Case("CloseAuction", UNIT, NIL),
    ),
)

AUCTION_TYPE = RecT(
    "Auction",
    TimeoutT(
        AUCTION_BRANCH,
        union(
            OutT("announce", PRICE_LOWERED, VarT("Auction")),
            OutT("announce", UNSOLD, NIL),
        ),
    ),
)

AUCTION_CHANNELS = ("bids", "control", "announce")


@dataclass(frozen=True)
class AuctionConfig:
    start_price: int = 100
    step: int = 10
    patience: int = 20  # ticks without a bid before lowering the price
    max_drops: int = 3


def auction_house(cfg: AuctionConfig = AuctionConfig(), *, keep_bidding_after_close: bool = False) -> ProcNode:
    bids = ChanParam("bids", I, BID)
    control = ChanParam("control", I, CLOSE)
    announce = ChanParam("announce", O, union(PRICE_LOWERED, UNSOLD))

    def house(price: int, best: int, drops: int) -> ProcNode:
        def on_close(_) -> ProcNode:
            return loop("Auction") if keep_bidding_after_close else end()

        def on_timeout() -> ProcNode:
            if drops >= cfg.max_drops:
                return send(announce, Labelled("Unsold"))
            lower = price - cfg.step
            return send(announce, Labelled("PriceLowered", lower), lambda: house(lower, best, drops + 1))

        return rec("Auction", lambda: catch_timeout(
            lambda: branch([bids, control], [
                case("Bid", INT, lambda amount: house(price, max(best, amount), drops)),
                case("CloseAuction", UNIT, on_close),
            ], timeout=cfg.patience),
            on_timeout,
        ))

    return house(cfg.start_price, 0, 0)


def bidder(times: list[int], amounts: list[int]) -> ProcNode:
    """Send ``Bid(amounts[k])`` at absolute tick ``times[k]`` (sorted)."""
    bids = ChanParam("bids", O, BID)

    def at(k: int, now: int) -> ProcNode:
        if k == len(times):
            return end()
        return delay(times[k] - now, lambda: send(bids, Labelled("Bid", amounts[k]), lambda: at(k + 1, times[k])))

    return at(0, 0)


def auctioneer(close_at: int) -> ProcNode:
    control = ChanParam("control", O, CLOSE)
    return delay(close_at, lambda: send(control, Labelled("CloseAuction")))


@dataclass(frozen=True)
class AuctionScenario:
    bid_times: list[int]
    bid_amounts: list[int]
    close_at: int


def auction_scenario(seed: int, n_bids: int = 6, close_at: int = 40, horizon: int = 80) -> AuctionScenario:
    rng = random.Random(seed)
    times = sorted(rng.randrange(0, horizon) for _ in range(n_bids))
    amounts = [rng.randrange(50, 150) for _ in range(n_bids)]
    return AuctionScenario(times, amounts, close_at)


def auction_system(seed: int = 0, cfg: AuctionConfig = AuctionConfig(), scenario: AuctionScenario | None = None) -> ProcNode:
    sc = scenario or auction_scenario(seed)
    return par(auction_house(cfg), bidder(sc.bid_times, sc.bid_amounts), auctioneer(sc.close_at))


def silent_auction(cfg: AuctionConfig = AuctionConfig()) -> ProcNode:
    """Nobody bids and nobody closes: the house lowers its price and gives up."""
    return auction_house(cfg)


def merged_auction_system(seed: int = 0, cfg: AuctionConfig = AuctionConfig()) -> ProcNode:
    """The single-channel workaround: forwarders copy bids and control
    messages onto one ``merged`` channel that the house receives on.

    After a close, a bid can be taken by its forwarder and then stranded,
    while the bidder saw its send succeed.  Run with ``MERGED_CHANNELS``.
    """
    sc = auction_scenario(seed)
    merged_in = ChanParam("merged", I)
    merged_out = ChanParam("merged", O)

    def forward(src: str) -> ProcNode:
        return rec("Fwd", lambda: recv(ChanParam(src, I), lambda v: send(merged_out, v, lambda: loop("Fwd"))))

    def house(best: int) -> ProcNode:
        def on(v) -> ProcNode:
            if v.label == "Bid":
                return house(max(best, v.payload))
            return end()

        return recv(merged_in, on)

    return par(house(0), forward("bids"), forward("control"), bidder(sc.bid_times, sc.bid_amounts), auctioneer(sc.close_at))


MERGED_CHANNELS = ("bids", "control", "merged")

# -- timer ------------------------------------------------------------------

# A reset may carry a new duration; a unit payload keeps the default.
TIMER_RESET = LabelledT("TimerReset", union(UNIT, INT))
TIMER_EXPIRED = LabelledT("TimerExpired", UNIT)


def timer_type(reset: str = "reset", timeout: str = "timeout") -> TypeExpr:
    return RecT("RecX", InT(reset, TIMER_RESET, "r", RecT("RecY", TimeoutT(
        InT(reset, TIMER_RESET, "r", VarT("RecY")),
        OutT(timeout, TIMER_EXPIRED, VarT("RecX")),
    ))))


def timer_env(reset: str = "reset", timeout: str = "timeout") -> ConformanceEnv:
    return ConformanceEnv(channels={reset: ChanT(I, TIMER_RESET), timeout: ChanT(O, TIMER_EXPIRED)})


TIMER_TYPE = timer_type()
TIMER_ENV = timer_env()
TIMER_CHANNELS = ("reset", "timeout")


def reset_duration(msg: Labelled, default: int) -> int:
    d = msg.payload
    return d if isinstance(d, int) and not isinstance(d, bool) and d > 0 else default


def timer_process(reset: str = "reset", timeout: str = "timeout", duration: int = 10, *, faulty: bool = False) -> ProcNode:
    """Untimed wait for the first reset, then time out unless reset again.

    After a timeout the process goes back to the untimed wait, so there is
    no pending timeout until the next reset.  ``faulty`` keeps the timeout
    armed instead, which the protocol forbids.
    """
    if duration <= 0:
        raise ValueError("timer duration must be positive")
    reset_ch = ChanParam(reset, I, TIMER_RESET)
    timeout_ch = ChanParam(timeout, O, TIMER_EXPIRED)

    def armed(d: int) -> ProcNode:
        return rec("RecY", lambda: catch_timeout(
            lambda: recv(reset_ch, lambda r: armed(reset_duration(r, duration)), timeout=d),
            lambda: send(timeout_ch, Labelled("TimerExpired"), lambda: loop("RecY" if faulty else "RecX")),
        ))

    return rec("RecX", lambda: recv(reset_ch, lambda r: armed(reset_duration(r, duration))))


def timer_driver(reset_times: list[int], reset: str = "reset", duration: int | None = None) -> ProcNode:
    """Send a reset at each absolute tick in ``reset_times``."""
    ch = ChanParam(reset, O, TIMER_RESET)

    def at(k: int, now: int) -> ProcNode:
        if k == len(reset_times):
            return end()
        msg = Labelled("TimerReset", duration)
        return delay_or_now(reset_times[k] - now, lambda: send(ch, msg, lambda: at(k + 1, reset_times[k])))

    return at(0, 0)


def delay_or_now(ticks: int, then: Callable[[], ProcNode]) -> ProcNode:
    return delay(ticks, then) if ticks > 0 else then()


def timer_system(reset_times: list[int] = (0,), duration: int = 10) -> ProcNode:
    return par(timer_process(duration=duration), timer_driver(list(reset_times)))


# -- registry ---------------------------------------------------------------

FIXTURES: dict[str, Callable[[], tuple[ProcNode, TypeExpr, ConformanceEnv]]] = {
    "travel-agency": lambda: (travel_agency(), AGENCY_TYPE, AGENCY_ENV),
    "travel-agency-faulty": lambda: (travel_agency_faulty(), AGENCY_TYPE, AGENCY_ENV),
    "travel-agency-weak": lambda: (travel_agency_recv(ticket_on_reject=True), AGENCY_WEAK_TYPE, AGENCY_ENV),
    "auction-house": lambda: (auction_house(), AUCTION_TYPE, AUCTION_ENV),
    "auction-house-faulty": lambda: (auction_house(keep_bidding_after_close=True), AUCTION_TYPE, AUCTION_ENV),
    "timer": lambda: (timer_process(), TIMER_TYPE, TIMER_ENV),
    "timer-faulty": lambda: (timer_process(faulty=True), TIMER_TYPE, TIMER_ENV),
}
