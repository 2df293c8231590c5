#!/usr/bin/env python3
"""Time the compiled path engine against the numpy engine.

Both engines integrate the same increments; the script also reports the
largest difference between their end states.

    python3 benchmarks/bench_kernels.py --paths 200
"""

import argparse
import time

import numpy as np

from stochdg.engine import compiled_available, simulate
from stochdg.harness import StudyConfig
from stochdg.noise import generate_increments

CASES = [
    ("pendulum", "conservative", "exact", 2.0**-8),
    ("pendulum", "stochastic_midpoint", "exact", 2.0**-8),
    ("pendulum", "milstein", "exact", 2.0**-8),
    ("lotka_volterra", "conservative", "exact", 2.0**-8),
    ("lotka_volterra", "composition", "exact", 2.0**-8),
    ("quartic", "conservative", "quadrature:simpson", 2.0**-8),
]


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not compiled_available():
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")

    print(f"{'problem':16s}{'scheme':22s}{'dg':20s}{'numpy [s]':>11s}{'compiled [s]':>14s}"
          f"{'speed-up':>10s}{'max |diff|':>12s}")
    for problem, scheme, dg, h in CASES:
        cfg = StudyConfig(problem=problem, scheme=scheme, dg=dg)
        spec = cfg.spec()
        sc = cfg.scheme_config()
        n = int(round(spec.horizon / h))
        inc = generate_increments(0, spec.noise_count, h, n, range(args.paths))
        t_np, a = timed(lambda: simulate(spec, sc, h, inc, backend="numpy"), args.repeat)
        t_c, b = timed(lambda: simulate(spec, sc, h, inc, backend="compiled"), args.repeat)
        ok = (a[3] == 0) & (b[3] == 0)
        diff = float(np.max(np.abs(a[0][ok] - b[0][ok]))) if ok.any() else float("nan")
        print(f"{problem:16s}{scheme:22s}{dg:20s}{t_np:11.3f}{t_c:14.4f}{t_np / t_c:10.1f}{diff:12.2e}")


if __name__ == "__main__":
    main()
