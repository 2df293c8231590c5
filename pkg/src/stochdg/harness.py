"""Monte Carlo convergence studies, slope fitting and CSV output.

All paths of a study are driven by one Brownian lattice per path at the
reference step ``h_ref``; coarser step sizes use block sums of that lattice,
so the reference solution and every approximation see the same Brownian path.
Per-path results are gathered in path order and reduced with numpy on the full
array, so a study's numbers depend on its configuration only, not on the
number of worker processes.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import simulate
from .errors import ConfigError, StudyFailure
from .integrators import SchemeConfig, SolverConfig
from .noise import TruncationPolicy, coarsen, generate_increments, truncate_increment
from .problems import build_problem
from .quadrature import parse_strategy

DEFAULT_H_LIST = tuple(2.0**-k for k in range(4, 10))


@dataclass(frozen=True)
class StudyConfig:
    """Everything a study needs; plain data so it pickles into worker processes.

    Parameters
    ----------
    problem : str
        Registry name of the problem.
    params : tuple of (str, float)
        Problem parameters, e.g. ``(("c1", 1.0), ("c2", 0.5))``.
    scheme, dg : str
        Scheme kind and discrete-gradient strategy text (``exact``,
        ``quadrature:<rule>`` or ``separable``).
    h_list : tuple of float
        Step sizes; each must divide the horizon and be a multiple of ``h_ref``.
    paths : int
        Number of Monte Carlo paths ``M``.
    ref_scheme : str
        Scheme used at ``h_ref`` as the stand-in for the exact solution.
    psi : tuple of str
        Weak functionals by name; empty means all functionals of the problem.
    truncate_k : int or None
        Truncate increments with this ``k``; ``None`` leaves them raw.
    workers : int
        Worker processes; results do not depend on it.
    chunk : int
        Paths per work unit.
    """

    problem: str = "pendulum"
    params: Tuple[Tuple[str, float], ...] = ()
    scheme: str = "conservative"
    dg: str = "exact"
    plan: str = "pairwise"
    h_list: Tuple[float, ...] = DEFAULT_H_LIST
    paths: int = 1000
    ref_scheme: str = "stochastic_midpoint"
    h_ref: float = 2.0**-14
    seed: int = 0
    psi: Tuple[str, ...] = ()
    truncate_k: Optional[int] = None
    abs_tol: float = 1e-12
    max_iterations: int = 100
    newton_fallback: bool = True
    horizon: Optional[float] = None
    workers: int = 1
    chunk: int = 50
    max_failure_rate: float = 1e-3
    first_path: int = 0

    def spec(self):
        return build_problem(self.problem, **dict(self.params))

    def scheme_config(self, kind=None) -> SchemeConfig:
        kind = kind or self.scheme
        return SchemeConfig(
            kind=kind,
            dg_strategy=parse_strategy(self.dg),
            solver=SolverConfig(self.abs_tol, self.max_iterations, self.newton_fallback),
            truncation=self.truncation(),
            plan=self.plan,
        )

    def truncation(self) -> TruncationPolicy:
        if self.truncate_k is None:
            return TruncationPolicy()
        return TruncationPolicy(True, self.truncate_k)


@dataclass
class StudyRow:
    h: float
    strong_error: float = math.nan
    strong_rel_error: float = math.nan
    weak_errors: Dict[str, float] = field(default_factory=dict)
    weak_rel_errors: Dict[str, float] = field(default_factory=dict)
    weak_stderrs: Dict[str, float] = field(default_factory=dict)
    invariant_drift: float = math.nan
    invariant_step_rms: float = math.nan
    mc_stderr: float = math.nan
    failure_rate: float = 0.0


@dataclass
class StudyReport:
    config: StudyConfig
    rows: List[StudyRow]
    psi: Tuple[str, ...]
    failed_paths: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return self.failed_paths / self.config.paths

    def columns(self) -> List[str]:
        cols = ["h", "strong_error", "strong_rel_error"]
        cols += [f"weak_error_{p}" for p in self.psi]
        cols += ["invariant_drift", "mc_stderr"]
        cols += [f"weak_rel_error_{p}" for p in self.psi]
        cols += [f"weak_stderr_{p}" for p in self.psi]
        cols += ["invariant_step_rms", "failure_rate"]
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([_row_value(r, name) for r in self.rows])

    @property
    def slopes(self) -> Dict[str, float]:
        """Least-squares log-log slopes of every error column with usable data."""
        out = {}
        hs = self.column("h")
        for name in self.columns():
            if name in ("h", "mc_stderr", "failure_rate") or name.startswith("weak_stderr_"):
                continue
            vals = self.column(name)
            if len(vals) >= 2 and np.all(np.isfinite(vals)) and np.all(vals > 0):
                out[name] = fit_slope(hs, vals)
        return out


def _row_value(row: StudyRow, name: str) -> float:
    for prefix, table in (
        ("weak_rel_error_", row.weak_rel_errors),
        ("weak_stderr_", row.weak_stderrs),
        ("weak_error_", row.weak_errors),
    ):
        if name.startswith(prefix):
            return table.get(name[len(prefix):], math.nan)
    return getattr(row, name)


def fit_slope(h_list: Sequence[float], error_list: Sequence[float]) -> float:
    """Least-squares slope of ``ln(error)`` against ``ln(h)``."""
    h = np.asarray(h_list, dtype=float)
    e = np.asarray(error_list, dtype=float)
    if h.shape != e.shape or h.size < 2:
        raise ValueError("fit_slope needs at least two (h, error) pairs")
    if not (np.all(h > 0) and np.all(e > 0)):
        raise ValueError("fit_slope needs positive step sizes and errors")
    x = np.log(h)
    y = np.log(e)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


# -- path simulation ---------------------------------------------------------

def _ratio(a: float, b: float, what: str) -> int:
    r = a / b
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-9 * r:
        raise ConfigError(f"{what}: {a!r} is not an integer multiple of {b!r}")
    return n


def _validate(cfg: StudyConfig, horizon: float):
    if cfg.paths < 1:
        raise ConfigError("paths must be at least 1")
    if cfg.chunk < 1 or cfg.workers < 1:
        raise ConfigError("chunk and workers must be at least 1")
    if not cfg.h_list:
        raise ConfigError("h_list is empty")
    _ratio(horizon, cfg.h_ref, "horizon vs h_ref")
    for h in cfg.h_list:
        _ratio(horizon, h, "horizon vs h")
        _ratio(h, cfg.h_ref, "h vs h_ref (coupling)")


@dataclass
class PathResults:
    """Per-path outputs of a study, in path order."""

    reference: Optional[np.ndarray]  # (M, d)
    final: np.ndarray  # (H, M, d)
    max_drift: np.ndarray  # (H, M)
    step_sq: np.ndarray  # (H, M)
    failed: np.ndarray  # (M,) bool


def _simulate_chunk(cfg: StudyConfig, start: int, stop: int, need_ref: bool):
    spec = cfg.spec()
    horizon = cfg.horizon or spec.horizon
    n_fine = _ratio(horizon, cfg.h_ref, "horizon vs h_ref")
    scheme = cfg.scheme_config()
    policy = cfg.truncation()
    fine = generate_increments(cfg.seed, spec.noise_count, cfg.h_ref, n_fine, range(start, stop))
    failed = np.zeros(stop - start, dtype=bool)
    reference = None
    if need_ref:
        ref_inc = truncate_increment(fine, cfg.h_ref, policy)
        reference, _, _, st = simulate(spec, cfg.scheme_config(cfg.ref_scheme), cfg.h_ref, ref_inc)
        failed |= st != 0
    finals, drifts, sqs = [], [], []
    for h in cfg.h_list:
        inc = truncate_increment(coarsen(fine, _ratio(h, cfg.h_ref, "h vs h_ref")), h, policy)
        final, drift, sq, st = simulate(spec, scheme, h, inc)
        failed |= st != 0
        finals.append(final)
        drifts.append(drift)
        sqs.append(sq)
    return reference, np.stack(finals), np.stack(drifts), np.stack(sqs), failed


def simulate_paths(cfg: StudyConfig, need_ref: bool = True) -> PathResults:
    """Run every path of ``cfg`` and return per-path results in path order."""
    spec = cfg.spec()
    horizon = cfg.horizon or spec.horizon
    _validate(cfg, horizon)
    for kind in (cfg.scheme, cfg.ref_scheme):
        sc = cfg.scheme_config(kind)
        if kind in ("conservative", "composition") and not sc.dg_strategy.applicable(
                spec.problem.invariant):
            raise ConfigError(f"strategy {sc.dg_strategy} is not applicable to {cfg.problem}")
    if cfg.scheme == "composition" or cfg.ref_scheme == "composition":
        from .splitting import make_plan

        make_plan(spec.form, cfg.plan)
    bounds = [
        (s, min(s + cfg.chunk, cfg.first_path + cfg.paths))
        for s in range(cfg.first_path, cfg.first_path + cfg.paths, cfg.chunk)
    ]
    if cfg.workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_simulate_chunk, *zip(*[(cfg, a, b, need_ref) for a, b in bounds])))
    else:
        parts = [_simulate_chunk(cfg, a, b, need_ref) for a, b in bounds]
    ref = np.concatenate([p[0] for p in parts]) if need_ref else None
    return PathResults(
        reference=ref,
        final=np.concatenate([p[1] for p in parts], axis=1),
        max_drift=np.concatenate([p[2] for p in parts], axis=1),
        step_sq=np.concatenate([p[3] for p in parts], axis=1),
        failed=np.concatenate([p[4] for p in parts]),
    )


def merge_results(a: PathResults, b: PathResults) -> PathResults:
    """Concatenate two path ranges (``b`` must follow ``a``)."""
    return PathResults(
        reference=None if a.reference is None else np.concatenate([a.reference, b.reference]),
        final=np.concatenate([a.final, b.final], axis=1),
        max_drift=np.concatenate([a.max_drift, b.max_drift], axis=1),
        step_sq=np.concatenate([a.step_sq, b.step_sq], axis=1),
        failed=np.concatenate([a.failed, b.failed]),
    )


# -- aggregation ---------------------------------------------------------------

def _psi_names(cfg: StudyConfig, spec) -> Tuple[str, ...]:
    names = tuple(cfg.psi) or tuple(spec.functionals)
    unknown = [p for p in names if p not in spec.functionals]
    if unknown:
        raise ConfigError(f"unknown functionals {unknown}; {cfg.problem} has {list(spec.functionals)}")
    return names


def aggregate(cfg: StudyConfig, res: PathResults, strong: bool, weak: bool,
              invariant: bool = True) -> StudyReport:
    """Reduce per-path results to one row per step size.

    Paths that failed at any step size (or in the reference) are dropped from
    every row so all rows use the same coupled sample.
    """
    spec = cfg.spec()
    psi = _psi_names(cfg, spec) if weak else ()
    ok = ~res.failed
    n_ok = int(ok.sum())
    horizon = cfg.horizon or spec.horizon
    report = StudyReport(cfg, [], psi, failed_paths=int(res.failed.sum()))
    if n_ok == 0:
        raise StudyFailure("every path failed", report)
    root_n = math.sqrt(n_ok)
    ref = res.reference[ok] if res.reference is not None else None
    if ref is not None:
        ref_norm = math.sqrt(float(np.mean(np.sum(ref**2, axis=-1))))
        ref_psi = {p: spec.functionals[p](ref) for p in psi}
    order = np.argsort(-np.asarray(cfg.h_list), kind="stable")
    for i in order:
        h = cfg.h_list[i]
        row = StudyRow(h=h, failure_rate=report.failure_rate)
        xh = res.final[i][ok]
        if strong and ref is not None:
            sq = np.sum((ref - xh) ** 2, axis=-1)
            mse = float(np.mean(sq))
            row.strong_error = math.sqrt(mse)
            row.strong_rel_error = row.strong_error / ref_norm if ref_norm > 0 else math.nan
            se_mse = float(np.std(sq)) / root_n
            row.mc_stderr = se_mse / (2.0 * row.strong_error) if row.strong_error > 0 else 0.0
        if weak and ref is not None:
            for p in psi:
                diff = spec.functionals[p](xh) - ref_psi[p]
                err = abs(float(np.mean(diff)))
                se = float(np.std(diff)) / root_n
                row.weak_errors[p] = err
                scale = abs(float(np.mean(ref_psi[p])))
                row.weak_rel_errors[p] = err / scale if scale > 0 else math.nan
                row.weak_stderrs[p] = se
                if se > 0.3 * err:
                    msg = (f"h={h:g}, psi={p}: MC stderr {se:.3g} exceeds 30% of the weak "
                           f"error {err:.3g}; the bias is not resolved at M={n_ok}")
                    report.warnings.append(msg)
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
            if not strong and psi:
                row.mc_stderr = row.weak_stderrs[psi[0]]
        if invariant:
            n_steps = _ratio(horizon, h, "horizon vs h")
            row.invariant_drift = float(np.mean(res.max_drift[i][ok]))
            row.invariant_step_rms = math.sqrt(float(np.mean(res.step_sq[i][ok])) / n_steps)
            if not (strong or weak):
                row.mc_stderr = float(np.std(res.max_drift[i][ok])) / root_n
        report.rows.append(row)
    return report


def _check(report: StudyReport, strict: bool) -> StudyReport:
    cfg = report.config
    if strict and report.failure_rate > cfg.max_failure_rate:
        raise StudyFailure(
            f"{report.failed_paths} of {cfg.paths} paths failed "
            f"({report.failure_rate:.2%} > {cfg.max_failure_rate:.2%})",
            report,
        )
    return report


def run_study(cfg: StudyConfig, mode: str = "both", strict: bool = True) -> StudyReport:
    """Strong and/or weak error study; ``mode`` is ``strong``, ``weak`` or ``both``.

    Raises :class:`StudyFailure` when more than ``cfg.max_failure_rate`` of
    the paths fail and ``strict`` is set.  The report is attached to the error.
    """
    if mode not in ("strong", "weak", "both"):
        raise ConfigError(f"unknown mode {mode!r}")
    res = simulate_paths(cfg, need_ref=True)
    report = aggregate(cfg, res, strong=mode != "weak", weak=mode != "strong")
    return _check(report, strict)


def strong_error_study(cfg: StudyConfig, strict: bool = True) -> StudyReport:
    return run_study(cfg, "strong", strict)


def weak_error_study(cfg: StudyConfig, strict: bool = True) -> StudyReport:
    return run_study(cfg, "weak", strict)


def adaptive_weak_study(cfg: StudyConfig, max_paths: int = 100_000, ratio: float = 0.3,
                        strict: bool = True) -> StudyReport:
    """Weak study that doubles ``M`` until every stderr is at most ``ratio`` times its error.

    New paths continue the path numbering, so the sample with ``2M`` paths
    contains the one with ``M``.
    """
    res = simulate_paths(cfg, need_ref=True)
    total = cfg.paths
    while True:
        grown = replace(cfg, paths=total)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report = aggregate(grown, res, strong=False, weak=True)
        resolved = all(
            r.weak_stderrs[p] <= ratio * r.weak_errors[p] for r in report.rows for p in report.psi
        )
        if resolved or total >= max_paths:
            break
        extra = min(total, max_paths - total)
        more = simulate_paths(replace(cfg, paths=extra, first_path=cfg.first_path + total))
        res = merge_results(res, more)
        total += extra
    report = aggregate(replace(cfg, paths=total), res, strong=False, weak=True)
    return _check(report, strict)


def invariant_drift_study(cfg: StudyConfig, strict: bool = True) -> StudyReport:
    """Mean over paths of ``max_n |I(X_n) - I(X_0)|`` and RMS per-step change of ``I``."""
    res = simulate_paths(cfg, need_ref=False)
    return _check(aggregate(cfg, res, strong=False, weak=False), strict)


# -- CSV -------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def write_csv(report: StudyReport, path) -> None:
    """Write one row per step size with 17 significant digits plus slope comments."""
    cols = report.columns()
    lines = [",".join(cols)]
    for row in report.rows:
        lines.append(",".join(_fmt(_row_value(row, c)) for c in cols))
    if len(report.rows) >= 2:
        for name, slope in report.slopes.items():
            lines.append(f"# slope_{name}={_fmt(slope)}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write study CSV to {path}: {exc}") from exc


def read_csv(path):
    """Parse a study CSV back into ``(columns, data rows, slopes)``."""
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read().splitlines()
    slopes = {}
    body = []
    for line in text:
        if line.startswith("# slope_"):
            key, val = line[len("# slope_"):].split("=", 1)
            slopes[key] = float(val)
        elif line and not line.startswith("#"):
            body.append(line)
    reader = csv.reader(body)
    cols = next(reader)
    rows = [[float(v) for v in r] for r in reader]
    return cols, rows, slopes


__all__ = [
    "StudyConfig",
    "StudyRow",
    "StudyReport",
    "PathResults",
    "simulate_paths",
    "aggregate",
    "run_study",
    "strong_error_study",
    "weak_error_study",
    "adaptive_weak_study",
    "invariant_drift_study",
    "fit_slope",
    "write_csv",
    "read_csv",
]
