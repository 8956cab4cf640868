"""Command-line driver: ``spudd solve ...`` prints a ``key: value`` report.

Exit codes: 0 converged, 2 invalid model or flag value, 3 not converged
within ``--max-iters``, 64 bad usage.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from typing import Sequence, TextIO

import numpy as np

from .add import DiagramError, DiagramRef, DiagramStore
from .bench import FAMILIES, BenchConfig, generate
from .flat import FlatResult, StateSpaceTooLarge, flat_value_iteration, from_spec, table
from .model import MdpSpec, validate
from .parser import ParseError, parse_file
from .solver import IterationStats, Policy, SolveConfig, extract_policy, value_iteration

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64

ORACLE_MAX_VARIABLES = 20


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _bigadd(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'inf', got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("bigadd must be at least 1")
    return float(value)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="spudd", description="Solve factored MDPs with decision diagrams.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    solve = sub.add_parser("solve", help="solve a model and print a report")
    source = solve.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", metavar="PATH", help="model file")
    source.add_argument("--gen", choices=FAMILIES, metavar="FAMILY", help=f"generated model: {', '.join(FAMILIES)}")
    solve.add_argument("--n", type=_positive_int, help="variable count for --gen")
    solve.add_argument("--seed", type=int, default=0, help="seed for --gen random")
    solve.add_argument("--method", choices=("spudd", "flat"), default="spudd")
    solve.add_argument("--epsilon", type=_positive_float, default=0.01)
    solve.add_argument("--bigadd", type=_bigadd, default=math.inf, metavar="K|inf")
    solve.add_argument("--max-iters", type=_positive_int, default=100_000, metavar="M")
    solve.add_argument("--check-oracle", action="store_true", help="also run the other method and compare")
    solve.add_argument("--dump-value", metavar="PATH", help="write the value diagram as DOT")
    solve.add_argument("--dump-policy", metavar="PATH", help="write the policy diagram as DOT")
    solve.add_argument("--stats-every", type=_positive_int, metavar="I", help="progress line on stderr every I iterations")
    return parser


def load_model(args) -> tuple[MdpSpec, str]:
    if args.input is not None:
        if args.n is not None:
            raise UsageError("--n only applies to --gen")
        return parse_file(args.input), args.input
    if args.gen != "factory_mini" and args.n is None:
        raise UsageError(f"--gen {args.gen} needs --n")
    config = BenchConfig(args.gen, n=args.n or 1, seed=args.seed)
    label = args.gen if args.gen == "factory_mini" else f"{args.gen} n={config.n}"
    if args.gen == "random":
        label += f" seed={args.seed}"
    return generate(config), label


def _fmt(x: float) -> str:
    return repr(float(x))


def _bool(flag: bool) -> str:
    return "true" if flag else "false"


def _progress(every: int | None, err: TextIO):
    def report(h: IterationStats) -> None:
        if every and h.iteration % every == 0:
            print(
                f"iteration {h.iteration}: delta {_fmt(h.delta)}, "
                f"internal_nodes {h.internal_nodes}, leaves {h.leaves}",
                file=err,
            )

    return report


def _flat_progress(every: int | None, err: TextIO):
    def report(iteration: int, delta: float) -> None:
        if every and iteration % every == 0:
            print(f"iteration {iteration}: delta {_fmt(delta)}", file=err)

    return report


def _stat_lines(prefix: str, stats: dict[str, int]) -> list[tuple[str, object]]:
    return [
        (f"{prefix}_internal_nodes", stats["internal_nodes"]),
        (f"{prefix}_leaves", stats["leaves"]),
        (f"{prefix}_equivalent_tree_leaves", stats["equivalent_tree_leaves"]),
    ]


def _policy_dot(store: DiagramStore, policy: Policy) -> str:
    return store.to_dot(policy.diagram, labels=lambda i: policy.label(int(i)))


def _flat_diagrams(spec: MdpSpec, result: FlatResult) -> tuple[DiagramRef, Policy]:
    store = spec.store
    value = store.from_table(result.values, spec.variables)
    sets = sorted(set(result.policy))
    index = {s: i for i, s in enumerate(sets)}
    policy = store.from_table([float(index[s]) for s in result.policy], spec.variables)
    return value, Policy(policy, sets)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def solve(args, out: TextIO, err: TextIO) -> int:
    spec, label = load_model(args)
    issues = validate(spec)
    if issues:
        for issue in issues:
            print(f"spudd: invalid model: {issue}", file=err)
        return EXIT_INVALID
    n = len(spec.variables)
    if args.check_oracle and n > ORACLE_MAX_VARIABLES:
        print(f"spudd: --check-oracle needs at most {ORACLE_MAX_VARIABLES} variables, model has {n}", file=err)
        return EXIT_INVALID
    store = spec.store
    config = SolveConfig(epsilon=args.epsilon, node_limit=args.bigadd, max_iterations=args.max_iters)
    report: list[tuple[str, object]] = [
        ("model", label),
        ("method", args.method),
        ("variables", n),
        ("actions", len(spec.actions)),
        ("discount", _fmt(spec.discount)),
        ("epsilon", _fmt(args.epsilon)),
        ("bigadd", "inf" if math.isinf(args.bigadd) else int(args.bigadd)),
    ]

    flat_result = None
    start = time.perf_counter()
    if args.method == "spudd":
        result = value_iteration(store, spec, config, _progress(args.stats_every, err))
        policy = extract_policy(store, spec, result.value, config)
        elapsed = time.perf_counter() - start
        value, iterations, converged, deltas = result.value, result.iterations, result.converged, result.deltas
    else:
        flat_result = flat_value_iteration(
            from_spec(spec), args.epsilon, args.max_iters, _flat_progress(args.stats_every, err)
        )
        elapsed = time.perf_counter() - start
        value, policy = _flat_diagrams(spec, flat_result)
        iterations, converged, deltas = flat_result.iterations, flat_result.converged, flat_result.deltas

    report += [
        ("iterations", iterations),
        ("converged", _bool(converged)),
        ("wall_time", f"{elapsed:.3f}"),
        ("distinct_values", len(store.terminal_values(value))),
    ]
    report += _stat_lines("value", store.stats(value))
    report += _stat_lines("policy", store.stats(policy.diagram))
    report.append(("policy_action_sets", len(policy.actions)))
    report.append(("supnorm_trace", ",".join(_fmt(d) for d in deltas)))

    if args.check_oracle:
        if args.method == "spudd":
            flat_result = flat_value_iteration(from_spec(spec), args.epsilon, args.max_iters)
            spudd_value, spudd_policy = value, policy
        else:
            other = value_iteration(store, spec, config)
            spudd_value = other.value
            spudd_policy = extract_policy(store, spec, other.value, config)
        gap = float(np.max(np.abs(table(store, spudd_value, spec.variables) - flat_result.values)))
        codes = table(store, spudd_policy.diagram, spec.variables)
        agree = all(spudd_policy.actions[int(c)] == s for c, s in zip(codes, flat_result.policy))
        report.append(("supnorm_vs_flat", _fmt(gap)))
        report.append(("policy_matches_flat", _bool(agree)))

    if args.dump_value:
        _write(args.dump_value, store.to_dot(value, labels=_fmt))
    if args.dump_policy:
        _write(args.dump_policy, _policy_dot(store, policy))

    for key, val in report:
        print(f"{key}: {val}", file=out)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def run(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return solve(args, out, err)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"spudd: {args.input}: {exc}", file=err)
        return EXIT_INVALID
    except (DiagramError, StateSpaceTooLarge, ValueError, OSError) as exc:
        print(f"spudd: {exc}", file=err)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
