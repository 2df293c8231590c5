"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import re
import sys
import warnings

import numpy as np

from .engine import backend_name
from .errors import ConfigError, NonConvergenceError, SingularFormError, StepError, StudyFailure
from .harness import StudyConfig, invariant_drift_study, run_study, write_csv
from .integrators import SCHEMES, integrate_path, make_stepper
from .noise import generate_lattice, truncate_increment
from .problems import build_problem, problem_names, problem_parameters

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

_POW = re.compile(r"^\s*([0-9.]+)\s*(?:\^|\*\*)\s*\(?\s*(-?[0-9.]+)\s*\)?\s*$")


def parse_number(text: str) -> float:
    """Float from ``0.0625``, ``2^-4`` or ``2**-4``."""
    m = _POW.match(text)
    try:
        value = float(m.group(1)) ** float(m.group(2)) if m else float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return value


def parse_number_list(text: str):
    return tuple(parse_number(t) for t in text.split(",") if t.strip())


def _problem_args(p):
    p.add_argument("--problem", required=True, choices=problem_names())
    p.add_argument("--c1", type=float, default=None, help="pendulum noise coefficient c1")
    p.add_argument("--c2", type=float, default=None, help="pendulum noise coefficient c2")


def _scheme_args(p, scheme=True):
    if scheme:
        p.add_argument("--scheme", default="conservative", choices=SCHEMES)
    p.add_argument("--dg", default="exact", help="exact | quadrature:<rule> | separable")
    p.add_argument("--truncate-k", type=int, default=None, help="truncate increments with this k")
    p.add_argument("--abs-tol", type=float, default=1e-12)
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--no-newton", action="store_true", help="disable the Newton fallback")
    p.add_argument("--seed", type=int, default=0)


def _study_args(p, scheme=True):
    _problem_args(p)
    _scheme_args(p, scheme)
    p.add_argument("--h-list", type=parse_number_list, default=tuple(2.0**-k for k in range(4, 10)))
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--ref-scheme", default="stochastic_midpoint",
                   choices=("stochastic_midpoint", "milstein"))
    p.add_argument("--h-ref", type=parse_number, default=2.0**-14)
    p.add_argument("--psi", nargs="*", default=[])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk", type=int, default=50)
    p.add_argument("--max-failure-rate", type=float, default=1e-3)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochdg",
        description="Invariant-preserving integrators for Stratonovich SDEs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-problems", help="names and parameters of built-in problems")

    run = sub.add_parser("run", help="integrate one path and write the trajectory")
    _problem_args(run)
    _scheme_args(run)
    run.add_argument("--h", type=parse_number, required=True)
    run.add_argument("--steps", type=int, required=True)
    run.add_argument("--out", default="-")

    order = sub.add_parser("order-study", help="strong/weak convergence study")
    _study_args(order)
    order.add_argument("--mode", choices=("strong", "weak", "both"), default="both")

    inv = sub.add_parser("invariant-study", help="invariant drift study")
    _study_args(inv)

    split = sub.add_parser("split-study", help="study of the pairwise-split composition scheme")
    _study_args(split, scheme=False)
    split.add_argument("--plan", default="pairwise")
    split.add_argument("--mode", choices=("strong", "weak", "both", "invariant"), default="both")
    return parser


def _params(args):
    return tuple((k, v) for k, v in (("c1", args.c1), ("c2", args.c2)) if v is not None)


def _study_config(args, scheme=None, plan="pairwise") -> StudyConfig:
    return StudyConfig(
        problem=args.problem,
        params=_params(args),
        scheme=scheme or args.scheme,
        dg=args.dg,
        plan=plan,
        h_list=tuple(args.h_list),
        paths=args.paths,
        ref_scheme=args.ref_scheme,
        h_ref=args.h_ref,
        seed=args.seed,
        psi=tuple(args.psi),
        truncate_k=args.truncate_k,
        abs_tol=args.abs_tol,
        max_iterations=args.max_iterations,
        newton_fallback=not args.no_newton,
        workers=args.workers,
        chunk=args.chunk,
        max_failure_rate=args.max_failure_rate,
    )


def _cmd_list(args, out):
    for name in problem_names():
        spec = build_problem(name)
        params = problem_parameters(name)
        ptxt = ", ".join(f"{k}={v:g}" for k, v in params.items()) or "-"
        print(f"{name}: d={spec.dim} m={spec.noise_count} params: {ptxt} "
              f"functionals: {', '.join(spec.functionals)}", file=out)


def _cmd_run(args, out):
    spec = build_problem(args.problem, **dict(_params(args)))
    cfg = StudyConfig(
        problem=args.problem, scheme=args.scheme, dg=args.dg, truncate_k=args.truncate_k,
        abs_tol=args.abs_tol, max_iterations=args.max_iterations,
        newton_fallback=not args.no_newton,
    )
    scheme = cfg.scheme_config()
    if not (args.h > 0 and args.steps >= 1):
        raise ConfigError("--h must be positive and --steps at least 1")
    lattice = generate_lattice(args.seed, spec.noise_count, args.h, args.steps)
    inc = truncate_increment(lattice.increments, args.h, scheme.truncation)
    traj = integrate_path(make_stepper(scheme, spec.problem, spec.form), spec.x0, args.h,
                          args.steps, inc, spec.problem.invariant)
    header = ["t"] + [f"x{k + 1}" for k in range(spec.dim)] + ["invariant"]
    fh = out if args.out == "-" else open(args.out, "w", encoding="utf-8", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x, i in zip(traj.times, traj.states, traj.invariant_values):
            w.writerow(["%.17g" % v for v in (t, *x, i)])
    finally:
        if fh is not out:
            fh.close()


def _finish_study(fn, cfg, out_path, out):
    try:
        report = fn(cfg)
    except StudyFailure as exc:
        if exc.report is not None:
            write_csv(exc.report, out_path)
        raise
    write_csv(report, out_path)
    for name, slope in report.slopes.items():
        print(f"slope_{name} = {slope:.4f}", file=out)
    if report.failed_paths:
        print(f"failed paths: {report.failed_paths} of {cfg.paths}", file=out)


def _cmd_order(args, out):
    cfg = _study_config(args)
    _finish_study(lambda c: run_study(c, args.mode), cfg, args.out, out)


def _cmd_invariant(args, out):
    _finish_study(invariant_drift_study, _study_config(args), args.out, out)


def _cmd_split(args, out):
    cfg = _study_config(args, scheme="composition", plan=args.plan)
    if args.mode == "invariant":
        _finish_study(invariant_drift_study, cfg, args.out, out)
    else:
        _finish_study(lambda c: run_study(c, args.mode), cfg, args.out, out)


_COMMANDS = {
    "list-problems": _cmd_list,
    "run": _cmd_run,
    "order-study": _cmd_order,
    "invariant-study": _cmd_invariant,
    "split-study": _cmd_split,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1 or getattr(args, "paths", 1) < 1:
        print("error: --workers and --paths must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with np.errstate(all="ignore"):
                _COMMANDS[args.command](args, out)
    except (NonConvergenceError, SingularFormError, StepError, StudyFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def backend_banner() -> str:
    return f"stochdg path engine: {backend_name()}"


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
