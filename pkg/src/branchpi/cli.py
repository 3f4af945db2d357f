"""Command-line entry point.

    branchpi run-example travel-agency --engine sim --seed 7
    branchpi check travel-agency-faulty
    branchpi raft --nodes 5 --seed 3 --max-ticks 20000 --trace-out run.jsonl

Traces are JSON lines on standard output unless ``--trace-out`` names a
file; the one-line summary always goes to standard error.  Exit status is 0
on success, 1 when a check fails or a run faults or breaks safety, and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from . import examples as ex
from .conformance import ConformanceEnv, check, errors
from .process import ProcNode
from .protocol import TypeExpr
from .runtime import ENGINES, EngineConfig, Trace, run
from .syntax import TypeSyntaxError, parse_type

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

EXAMPLES = ("travel-agency", "auction-house", "timer")


def _ticks(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ticks, got {text!r}") from None
    if any(t < 0 for t in out) or out != sorted(out):
        raise argparse.ArgumentTypeError("ticks must be non-negative and ascending")
    return out


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchpi", description="Run and check branching/timeout protocols.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run-example,check,raft}")

    p = sub.add_parser("run-example", help="run one of the example systems and emit its trace")
    p.add_argument("example", choices=EXAMPLES)
    p.add_argument("--engine", choices=ENGINES, default="sim")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive, default=4, help="executor pool size")
    p.add_argument("--duration", type=_positive, default=None, help="auction patience or timer duration, in ticks")
    p.add_argument("--resets", type=_ticks, default=[0], help="timer example: ticks at which resets are sent")
    p.add_argument("--decision", choices=("Accept", "Reject"), default=None, help="travel agency: override the client")
    p.add_argument("--max-ticks", type=_positive, default=None)
    p.add_argument("--trace-out", default="-", help="file for the JSONL trace ('-' for stdout)")

    p = sub.add_parser("check", help="check a process against its protocol type")
    p.add_argument("example", nargs="?", help="fixture name; see --list")
    p.add_argument("--type", dest="type_file", default=None, help="read the protocol type from an s-expression file")
    p.add_argument("--list", action="store_true", help="list fixture names and exit")

    p = sub.add_parser("raft", help="run a Raft election cluster and check election safety")
    p.add_argument("--nodes", type=_positive, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-ticks", type=_positive, default=None)
    p.add_argument("--engine", choices=("sim", "executor"), default="sim")
    p.add_argument("--tick", type=float, default=0.001, help="executor: seconds per tick")
    p.add_argument("--trace-out", default="-")
    return parser


def _emit_trace(trace: Trace, dest: str) -> None:
    if dest == "-":
        trace.write(sys.stdout)
        sys.stdout.flush()
    else:
        with open(dest, "w", encoding="utf-8") as fp:
            trace.write(fp)


def _example_program(args) -> tuple[ProcNode, tuple[str, ...], str]:
    if args.example == "travel-agency":
        decision = args.decision or ex.client_decision(args.seed)
        return ex.travel_agency_system(args.seed, decision), ex.AGENCY_CHANNELS, f"client {decision}"
    if args.example == "auction-house":
        cfg = ex.AuctionConfig(patience=args.duration) if args.duration else ex.AuctionConfig()
        return ex.auction_system(args.seed, cfg), ex.AUCTION_CHANNELS, f"patience {cfg.patience}"
    duration = args.duration or 10
    return ex.timer_system(args.resets, duration), ex.TIMER_CHANNELS, f"resets at {args.resets}"


def cmd_run_example(args) -> int:
    prog, channels, note = _example_program(args)
    cfg = EngineConfig(engine=args.engine, seed=args.seed, workers=args.workers, max_time=args.max_ticks)
    trace = run(prog, cfg, channels=channels)
    _emit_trace(trace, args.trace_out)
    ok = not trace.faults
    print(f"{args.example} [{args.engine}, seed {args.seed}, {note}]: {trace.summary()}; {'ok' if ok else 'FAULT'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def check_fixtures() -> dict:
    from .raft import NodeConfig, NodeState, candidate_process, follower_process, leader_process, node_env
    from .raft import candidate_type, follower_type, leader_type, raft_node, node_type
    from .raft.cluster import cluster_program

    def raft(kind: str):
        def make():
            _, _, configs = cluster_program(3)
            cfg: NodeConfig = configs[0]
            procs = {
                "node": (raft_node(cfg), node_type(cfg)),
                "follower": (follower_process(cfg, NodeState()), follower_type(cfg)),
                "candidate": (candidate_process(cfg, NodeState()), candidate_type(cfg)),
                "leader": (leader_process(cfg, NodeState(1, cfg.name)), leader_type(cfg)),
            }
            p, t = procs[kind]
            return p, t, node_env(cfg)
        return make

    out = dict(ex.FIXTURES)
    for kind in ("node", "follower", "candidate", "leader"):
        out[f"raft-{kind}"] = raft(kind)
    return out


def cmd_check(args, parser: argparse.ArgumentParser) -> int:
    fixtures = check_fixtures()
    if args.list:
        print("\n".join(sorted(fixtures)))
        return EXIT_OK
    if args.example is None:
        parser.error("check needs a fixture name (see --list)")
    if args.example not in fixtures:
        parser.error(f"unknown fixture {args.example!r}; choose from {', '.join(sorted(fixtures))}")
    proc, typ, env = fixtures[args.example]()
    if args.type_file:
        try:
            with open(args.type_file, encoding="utf-8") as fp:
                typ = parse_type(fp.read())
        except (OSError, TypeSyntaxError) as exc:
            print(f"branchpi check: {exc}", file=sys.stderr)
            return EXIT_USAGE
    return report(args.example, proc, typ, env)


def report(name: str, proc: ProcNode, typ: TypeExpr, env: ConformanceEnv) -> int:
    diags = check(proc, typ, env)
    for d in diags:
        print(f"{d.severity}: {d}")
    bad = errors(diags)
    warn = len(diags) - len(bad)
    verdict = "conforms" if not bad else "does not conform"
    print(f"{name}: {verdict} ({len(bad)} errors, {warn} warnings)", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_raft(args) -> int:
    from .raft import check_all, run_cluster

    ct = run_cluster(args.nodes, args.seed, args.max_ticks, engine=args.engine, tick=args.tick)
    _emit_trace(ct.trace, args.trace_out)
    results = check_all(ct)
    leaders = ", ".join(f"{le.node}@{le.term}" for le in ct.leaders[:5]) or "none"
    more = f" (+{len(ct.leaders) - 5} more)" if len(ct.leaders) > 5 else ""
    failed = [k for k, v in results.items() if not v]
    print(
        f"raft [{args.engine}, n={args.nodes}, seed {args.seed}]: {ct.trace.summary()}; "
        f"leaders {leaders}{more}; {'all checks pass' if not failed else 'FAILED ' + ', '.join(failed)}",
        file=sys.stderr,
    )
    ok = results["election_safety"] and results["leader_emerges"]
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run-example":
            return cmd_run_example(args)
        if args.command == "check":
            return cmd_check(args, parser)
        return cmd_raft(args)
    except BrokenPipeError:  # e.g. piped into head
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
