"""Command line: validate traces, check formulas and policies, run derivations."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .beliefs import replay_beliefs
from .checker import CheckError, Checker
from .core import Beta, FrameworkParams, LogicError, parse_omega
from .ekb import DomainError, ekb_union
from .engine import derive
from .parser import ParseError, format_policy, parse_formula, parse_policy, parse_trace
from .snm import OrderedTimestampsViolated, UnknownAgent, get_semantics, validate_trace

log = logging.getLogger("kblrt")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


def _load(path: str, check_order: bool = True):
    return parse_trace(Path(path).read_text(encoding="utf-8"), check_order=check_order)


def _params(args: argparse.Namespace) -> FrameworkParams:
    return FrameworkParams(omega=args.omega, beta=Beta(args.beta), proof_depth=args.depth)


def _prepare(args: argparse.Namespace):
    trace = _load(args.trace)
    params = _params(args)
    if getattr(args, "replay_beliefs", False):
        trace, _ = replay_beliefs(trace, params, get_semantics(trace.semantics))
    return trace, params


def _emit(args: argparse.Namespace, payload, text: str) -> None:
    print(json.dumps(payload, indent=2) if args.json else text)


def cmd_validate(args: argparse.Namespace) -> int:
    trace = _load(args.trace, check_order=False)
    report = validate_trace(trace, get_semantics(trace.semantics))
    d = report.to_dict()
    lines = [f"well-formed: {'yes' if report.well_formed else 'no'}"]
    lines += [f"  {k}: {d[k]}" for k in ("ordered_timestamps", "transitions", "independence")]
    lines += [f"  - {m}" for m in report.messages]
    _emit(args, d, "\n".join(lines))
    return EXIT_OK if report.well_formed else EXIT_FAILED


def cmd_check(args: argparse.Namespace) -> int:
    trace, params = _prepare(args)
    texts = list(args.formula or [])
    if args.formulas_file:
        for line in Path(args.formulas_file).read_text(encoding="utf-8").splitlines():
            if line.strip() and not line.lstrip().startswith("#"):
                texts.append(line.strip())
    if not texts:
        raise CheckError("nothing to check: pass --formula or --formulas-file")
    vocab = trace.vocabulary()
    formulas = [parse_formula(t, **vocab, trace_timestamps=trace.timestamps) for t in texts]
    checker = Checker(trace, params, strict_history=args.strict_history)
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        verdicts = list(pool.map(checker.satisfies, formulas))
    payload, lines = [], []
    for text, v in zip(texts, verdicts):
        item = {"formula": text, **v.to_dict()}
        if not args.show_proof:
            item.pop("proof", None)
        payload.append(item)
        line = f"{'holds' if v.holds else 'fails'}: {text}"
        if v.witness:
            line += f"  witness {json.dumps(v.witness)}"
        lines.append(line)
        if args.show_proof and v.proof:
            lines.append(v.proof.to_text())
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if all(v.holds for v in verdicts) else EXIT_FAILED


def cmd_policy(args: argparse.Namespace) -> int:
    trace, params = _prepare(args)
    vocab = trace.vocabulary()
    if args.policy:
        source = Path(args.policy).read_text(encoding="utf-8") if Path(args.policy).is_file() else args.policy
        policies = [parse_policy(source, **vocab)]
    else:
        policies = [p for ps in trace.steps[-1].snm.policies.values() for p in ps]
        if not policies:
            raise CheckError("the trace carries no policies; pass --policy")
    checker = Checker(trace, params, strict_history=args.strict_history)
    payload, lines, ok = [], [], True
    for p in policies:
        v = checker.conforms(p, respect_start=args.respect_start)
        ok = ok and v.holds
        payload.append({"policy": format_policy(p), **v.to_dict()})
        line = f"{'conforms' if v.holds else 'violated'}: {format_policy(p)}"
        if v.witness:
            line += f"\n  witness {json.dumps(v.witness)}"
        lines.append(line)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if ok else EXIT_FAILED


def cmd_derive(args: argparse.Namespace) -> int:
    trace, params = _prepare(args)
    t = trace.resolve_time(args.at)
    trace.step_at(t)
    hi = t - 1 if args.strict_history else t
    gamma = ekb_union(trace, args.agent, float("-inf"), hi) if hi >= trace.timestamps[0] else frozenset()
    goal = parse_formula(args.goal, **trace.vocabulary(), trace_timestamps=trace.timestamps)
    window = params.omega if args.window is None else args.window
    ts = [s for s in trace.timestamps if s <= t]
    result = derive(gamma, goal, window, params.proof_depth, timestamps=ts)
    if result:
        _emit(args, {"derivable": True, "min_window": str(result.min_window), "proof": result.to_dict()},
              f"derivable (least window {result.min_window})\n{result.to_text()}")
        return EXIT_OK
    _emit(args, {"derivable": False, **result.to_dict()}, f"not derivable: {result.reason}")
    return EXIT_FAILED


def cmd_replay(args: argparse.Namespace) -> int:
    trace = _load(args.trace)
    params = _params(args)
    trace, reports = replay_beliefs(trace, params, get_semantics(trace.semantics), args.include_induced)
    ekbs = {}
    for step in trace.steps:
        for agent, kb in sorted(step.snm.ekbs.items()):
            if kb.belief_log:
                ekbs.setdefault(str(step.time), {})[agent] = sorted(str(f) for f in kb.formulas())
    payload: dict = {"ekbs": ekbs}
    lines = []
    if args.explain_beliefs:
        payload["reports"] = [r.to_dict() for r in reports]
        lines += [r.to_text() for r in reports]
    for time, agents in ekbs.items():
        for agent, formulas in agents.items():
            lines.append(f"{agent} @ {time}:")
            lines += [f"  {f}" for f in formulas]
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kblrt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, replay: bool = True) -> None:
        p.add_argument("trace", help="trace file (JSON)")
        p.add_argument("--omega", type=parse_omega, default=parse_omega("inf"),
                       help="memory window in ticks, or 'inf' (default)")
        p.add_argument("--beta", choices=[b.value for b in Beta], default=Beta.CONSERVATIVE.value)
        p.add_argument("--depth", type=int, default=64, help="proof depth bound")
        p.add_argument("--json", action="store_true")
        if replay:
            p.add_argument("--replay-beliefs", action="store_true",
                           help="recompute belief-bearing EKBs before checking")
            p.add_argument("--strict-history", action="store_true",
                           help="knowledge at t uses EKBs strictly before t")

    p = sub.add_parser("validate", help="check the well-formedness conditions of a trace")
    p.add_argument("trace")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check", help="model-check formulas")
    common(p)
    p.add_argument("--formula", action="append", help="formula to check (repeatable)")
    p.add_argument("--formulas-file", help="one formula per line")
    p.add_argument("--show-proof", action="store_true")
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("policy", help="check policy conformance")
    common(p)
    p.add_argument("--policy", help="policy text or a file holding it (default: the trace's policies)")
    p.add_argument("--respect-start", action="store_true", help="only enforce from the policy's start time")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("derive", help="search for a timed derivation from an agent's knowledge")
    common(p)
    p.add_argument("--agent", required=True)
    p.add_argument("--at", required=True, help="timestamp or label")
    p.add_argument("--goal", required=True)
    p.add_argument("--window", type=parse_omega, help="derivation window (default: omega)")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("replay-beliefs", help="recompute EKBs through belief propagation")
    common(p, replay=False)
    p.add_argument("--explain-beliefs", action="store_true", help="show every candidate and its outcome")
    p.add_argument("--include-induced", action="store_true",
                   help="also replay beliefs induced by the semantics' events")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc.render()}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, OrderedTimestampsViolated) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (LogicError, UnknownAgent, CheckError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
