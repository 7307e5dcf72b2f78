"""Command-line entry point: ``shadowham <problem> [options]``.

Exit status is 0 on success, 2 on usage errors and 3 when a numerical fault
(singularity hit, empty stencil, too few points to fit) stops the run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from shadowham import xnum
from shadowham.harness import (PROBLEM_PARAMS, ExperimentConfig, compare_methods, fit_exp_rate,
                               invariant_suite, parse_step, run_experiment, sweep_parameter,
                               trace_energy)
from shadowham.integrator import SCHEMES
from shadowham.shadow import OrderPolicy
from shadowham.xnum import format_decimal

EXIT_USAGE = 2
EXIT_FAULT = 3

PROBLEM_COMMANDS = ["pendulum", "kepler", "henon-heiles", "free"]


def _digits(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < xnum.MIN_DIGITS:
        raise argparse.ArgumentTypeError(f"precision must be at least {xnum.MIN_DIGITS} digits")
    return value


def _policy(text: str) -> OrderPolicy:
    try:
        return OrderPolicy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _step(text: str) -> str:
    try:
        return str(parse_step(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_common(sp: argparse.ArgumentParser, multi_scheme: bool = False) -> None:
    if multi_scheme:
        sp.add_argument("--scheme", action="append", choices=sorted(SCHEMES),
                        help="scheme to include (repeat; default: all three)")
    else:
        sp.add_argument("--scheme", choices=sorted(SCHEMES), default="sv")
    sp.add_argument("--h", action="append", type=_step, metavar="H",
                    help="step size, e.g. 0.05 or 1/20 (repeatable)")
    sp.add_argument("--T", default="100", help="time horizon (default 100)")
    sp.add_argument("--digits", type=_digits, default=xnum.DEFAULT_DIGITS,
                    help="working precision in decimal digits (default 120)")
    sp.add_argument("--policy", type=_policy, default=OrderPolicy.windowed(),
                    help="fixed:M, scan:CAP or window:CAP (default window:200)")
    sp.add_argument("--stride", type=_positive, default=1)
    sp.add_argument("--ecc", action="append", help="Kepler eccentricity (repeat to sweep)")
    sp.add_argument("--p0", action="append", help="initial momentum (repeat to sweep)")
    sp.add_argument("--p1", action="append", help="Henon-Heiles initial p1 (repeat to sweep)")
    sp.add_argument("--out", type=Path, help="directory for CSV output")
    sp.add_argument("--timing", action="store_true", help="record wall-clock seconds")
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowham",
        description="Energy drift of splitting integrators measured through the modified Hamiltonian.")
    parser.add_argument("--seed-check", action="store_true",
                        help="run the structural invariant suite and exit")
    parser.add_argument("--seed", type=int, default=0, help="seed for --seed-check")
    sub = parser.add_subparsers(dest="command")
    for name in PROBLEM_COMMANDS:
        _add_common(sub.add_parser(name, help=f"drift curve for the {name} problem"))
    cmp_ = sub.add_parser("compare", help="drift and fitted rate for several schemes")
    cmp_.add_argument("--problem", choices=sorted(PROBLEM_PARAMS), default="kepler")
    cmp_.add_argument("--equal-cost", action="store_true",
                      help="scale each step by gradient evaluations per step")
    _add_common(cmp_, multi_scheme=True)
    tr = sub.add_parser("trace", help="per-step modified-energy trace at one step size")
    tr.add_argument("--problem", choices=sorted(PROBLEM_PARAMS), default="kepler")
    _add_common(tr)
    return parser


def _param_values(args, problem: str):
    key = PROBLEM_PARAMS[problem][0]
    values = getattr(args, key, None)
    others = [k for k in ("ecc", "p0", "p1") if k != key and getattr(args, k, None)]
    if others:
        raise ValueError(f"--{others[0]} does not apply to {problem}")
    return values or [PROBLEM_PARAMS[problem][1]]


def _print_curve(curve, label: str = "") -> None:
    for r in curve.rows:
        d = "-" if r.drift is None else format_decimal(r.drift, 6)
        print(f"{label}h={r.h}\tdrift={d}\tmax_m={r.max_m}\t{r.status}")


def _run(args) -> int:
    problem = args.problem if args.command in ("compare", "trace") else args.command
    steps = args.h or ["1/10"]
    params = _param_values(args, problem)
    scheme = "sv" if args.command == "compare" else args.scheme
    base = dict(problem=problem, scheme=scheme, T=args.T, steps=steps, digits=args.digits,
                policy=args.policy, stride=args.stride, out=args.out, timing=args.timing)
    xnum.set_working_precision(args.digits)

    if args.command == "trace":
        if len(steps) != 1 or len(params) != 1:
            raise ValueError("trace takes exactly one --h and one parameter value")
        rows = trace_energy(ExperimentConfig(param=params[0], **base))
        peak = max(rows, key=lambda r: r.m_star)
        print(f"steps={len(rows)}\tfinal accumulated={format_decimal(rows[-1].accumulated, 6)}"
              f"\tmax m_star={peak.m_star} at t={format_decimal(peak.t, 6)}")
        return 0

    if args.command == "compare":
        if len(params) != 1:
            raise ValueError("compare takes one parameter value")
        schemes = args.scheme or ["sv", "yoshida4", "bm4"]
        results = compare_methods(ExperimentConfig(param=params[0], **base), schemes,
                                  equal_cost=args.equal_cost)
        failed = False
        for name, res in results.items():
            _print_curve(res.curve, f"{name}\t")
            if res.rate is None:
                print(f"{name}\tc=-\t({res.note})")
            else:
                print(f"{name}\tc={format_decimal(res.rate.c, 6)}"
                      f"\trel_residual={format_decimal(res.rate.relative_residual, 3)}")
            failed |= bool(res.curve.faults())
        return EXIT_FAULT if failed else 0

    if len(params) > 1:
        rows = sweep_parameter(ExperimentConfig(param=params[0], **base), params)
        for value, r in rows:
            d = "-" if r.drift is None else format_decimal(r.drift, 6)
            print(f"{PROBLEM_PARAMS[problem][0]}={value}\th={r.h}\tdrift={d}\t{r.status}")
        return EXIT_FAULT if any(r.status.startswith("fault") for _v, r in rows) else 0

    curve = run_experiment(ExperimentConfig(param=params[0], **base))
    _print_curve(curve)
    if len(curve.ok_rows()) >= 3:
        try:
            fit = fit_exp_rate(curve)
            print(f"c={format_decimal(fit.c, 6)}\trel_residual={format_decimal(fit.relative_residual, 3)}"
                  f"\tpoints={fit.points}")
        except ValueError as exc:
            print(f"fit skipped: {exc}")
    for r in curve.faults():
        print(f"fault at h={r.h}, {PROBLEM_PARAMS[problem][0]}={params[0]}: {r.status}", file=sys.stderr)
    return EXIT_FAULT if curve.faults() else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed_check:
        results = invariant_suite(seed=args.seed)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return 0 if all(ok for _n, ok, _d in results) else EXIT_FAULT
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("shadowham: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run(args)
    except (ValueError, xnum.PrecisionError) as exc:
        print(f"shadowham: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"shadowham: numerical fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
