"""One-step maps and path integration.

Steppers take ``(x, h, dW)`` and are pure: increments are always passed in,
already truncated if the caller wants truncation.  ``x`` may be a single
state ``(d,)`` with ``dW`` of shape ``(m,)``, or a batch ``(B, d)`` with
``dW`` of shape ``(B, m)``.  Implicit solves iterate each batch row until that
row alone converges, so a path's result never depends on its batch mates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import SdeProblem, SkewGradientForm, fd_jacobian, ito_corrected_drift, matvec
from .errors import ConfigError, NonConvergenceError, SingularFormError, StepError
from .noise import TruncationPolicy
from .quadrature import (
    DiscreteGradientStrategy,
    ExactAverage,
    averaged_gradient,
)

SCHEMES = ("conservative", "milstein", "euler_maruyama", "stochastic_midpoint", "composition")


@dataclass(frozen=True)
class SolverConfig:
    """Implicit-solve settings.

    ``newton_fallback`` re-solves rows on which plain fixed-point iteration
    fails (non-contractive map for large increments) with a finite-difference
    Newton iteration on the same equation.
    """

    abs_tol: float = 1e-12
    max_iterations: int = 100
    newton_fallback: bool = True

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ConfigError("abs_tol must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SchemeConfig:
    kind: str = "conservative"
    dg_strategy: DiscreteGradientStrategy = field(default_factory=ExactAverage)
    solver: SolverConfig = field(default_factory=SolverConfig)
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    plan: str = "pairwise"

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.kind!r}; choose from {SCHEMES}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    invariant_values: np.ndarray


def _as_batch(x, dW):
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float)
    single = x.ndim == 1
    if single:
        return x[None, :], dW.reshape(1, -1), True
    return x, dW.reshape(x.shape[0], -1), False


def _unbatch(z, single):
    return z[0] if single else z


def _guarded(update, z, active, res):
    """Evaluate ``update`` on ``active``, dropping rows whose iterate hits a singular set."""
    while True:
        try:
            return update(active, z[active]), active
        except SingularFormError as exc:
            if exc.rows is None or active.size == 0:
                raise
            hit = np.zeros(active.size, dtype=bool)
            hit[exc.rows] = True
            res[active[hit]] = np.inf
            active = active[~hit]
            if active.size == 0:
                return z[active], active


def _eval_or_nan(update, rows, zz):
    """``update`` on ``rows``; rows that hit a singular set come back as NaN."""
    out = np.full_like(zz, np.nan)
    keep = np.arange(rows.size)
    while keep.size:
        try:
            out[keep] = update(rows[keep], zz[keep])
            break
        except SingularFormError as exc:
            if exc.rows is None:
                raise
            mask = np.ones(keep.size, dtype=bool)
            mask[exc.rows] = False
            keep = keep[mask]
    return out


def _iterate(update, z, rows, cfg: SolverConfig):
    """Plain fixed-point iteration on ``rows``; returns the rows that failed."""
    tol = cfg.abs_tol
    active = rows
    res = np.full(z.shape[0], np.inf)
    for _ in range(cfg.max_iterations):
        new, active = _guarded(update, z, active, res)
        r = np.linalg.norm(new - z[active], axis=-1)
        z[active] = new
        res[active] = r
        finite = np.isfinite(r)
        keep = finite & (r > tol)
        active = active[keep]
        if active.size == 0:
            break
    failed = rows[~(res[rows] <= tol)]
    return failed, res


def _newton(update, z, rows, cfg: SolverConfig):
    """Finite-difference Newton on ``update(z) - z = 0`` for ``rows``."""
    tol = cfg.abs_tol
    active = rows
    res = np.full(z.shape[0], np.inf)
    d = z.shape[-1]
    scale = np.cbrt(np.finfo(float).eps)
    for _ in range(cfg.max_iterations):
        fz, active = _guarded(update, z, active, res)
        za = z[active]
        resid = fz - za
        r = np.linalg.norm(resid, axis=-1)
        res[active] = r
        ok = r <= tol
        z[active[ok]] = fz[ok]
        bad = ~np.isfinite(r)
        active = active[~ok & ~bad]
        if active.size == 0:
            break
        za = z[active]
        resid = resid[~ok & ~bad]
        eps = scale * np.maximum(1.0, np.linalg.norm(za, axis=-1))
        jac = np.empty(za.shape + (d,))
        for j in range(d):
            step = np.zeros_like(za)
            step[:, j] = eps
            plus = _eval_or_nan(update, active, za + step) - (za + step)
            minus = _eval_or_nan(update, active, za - step) - (za - step)
            jac[:, :, j] = (plus - minus) / (2.0 * eps[:, None])
        jac[~np.isfinite(jac)] = np.nan
        delta = np.full_like(za, np.nan)
        finite = np.all(np.isfinite(jac), axis=(-2, -1))
        for i in np.flatnonzero(finite):
            try:
                delta[i] = np.linalg.solve(jac[i], -resid[i])
            except np.linalg.LinAlgError:
                pass
        z[active] = za + delta
    return rows[~(res[rows] <= tol)], res


def _solve(update, start, cfg: SolverConfig):
    """Solve ``z = update(rows, z)`` row by row, starting from a 2-D ``start``."""
    z = np.array(start, dtype=float, copy=True)
    rows = np.arange(z.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        failed, res = _iterate(update, z, rows, cfg)
        if failed.size and cfg.newton_fallback:
            z[failed] = start[failed]
            failed, res = _newton(update, z, failed, cfg)
    if failed.size:
        worst = res[failed]
        worst = float(np.max(worst)) if np.all(np.isfinite(worst)) else float("inf")
        raise NonConvergenceError(worst, cfg.max_iterations, rows=failed)
    return z


def fixed_point_solve(fmap: Callable, start, cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """Iterate ``z <- fmap(z)`` until ``|fmap(z) - z| <= abs_tol``.

    Plain iteration only; no Newton fallback is applied here.
    """
    cfg = cfg or SolverConfig()
    start = np.asarray(start, dtype=float)
    z = start.reshape(1, -1).copy()
    failed, res = _iterate(lambda rows, zz: np.reshape(fmap(zz[0]), (1, -1)), z, np.arange(1), cfg)
    if failed.size:
        raise NonConvergenceError(res[0], cfg.max_iterations)
    return z[0].reshape(start.shape) if start.ndim else float(z[0, 0])


def _predictor(drift, diffusion, noise_count, x, h, dW):
    z = x + h * drift(x)
    for r in range(noise_count):
        z = z + dW[:, r, None] * diffusion(r, x)
    return z


def conservative_step(form: SkewGradientForm, x, h: float, dW, cfg: Optional[SchemeConfig] = None):
    """Advance the discrete-gradient scheme by one step.

    Solves ``x' = x + [h S(m) + sum_r dW_r T_r(m)] D(x, x')`` with ``m`` the
    midpoint and ``D`` the configured averaged gradient.
    """
    cfg = cfg or SchemeConfig()
    strategy = cfg.dg_strategy
    inv = form.invariant
    if not strategy.applicable(inv):
        raise ConfigError(f"strategy {strategy} is not applicable to this invariant")
    x2, dW2, single = _as_batch(x, dW)
    if h == 0.0 and not np.any(dW2):
        return _unbatch(x2.copy(), single)

    def update(rows, z):
        xs = x2[rows]
        mid = 0.5 * (xs + z)
        grad = averaged_gradient(inv, xs, z, strategy)
        amat = h * form.s_matrix(mid)
        for r, t in enumerate(form.t_matrices):
            amat = amat + dW2[rows, r, None, None] * t(mid)
        return xs + matvec(amat, grad)

    start = _predictor(form.drift, form.diffusion, form.noise_count, x2, h, dW2)
    return _unbatch(_solve(update, start, cfg.solver), single)


def stochastic_midpoint_step(problem: SdeProblem, x, h: float, dW, cfg: Optional[SchemeConfig] = None):
    """``x' = x + h f(m) + sum_r dW_r g_r(m)`` with ``m = (x + x')/2``."""
    cfg = cfg or SchemeConfig(kind="stochastic_midpoint")
    x2, dW2, single = _as_batch(x, dW)
    if h == 0.0 and not np.any(dW2):
        return _unbatch(x2.copy(), single)

    def diffusion(r, y):
        return problem.diffusions[r](y)

    def update(rows, z):
        xs = x2[rows]
        mid = 0.5 * (xs + z)
        out = xs + h * problem.drift(mid)
        for r, g in enumerate(problem.diffusions):
            out = out + dW2[rows, r, None] * g(mid)
        return out

    start = _predictor(problem.drift, diffusion, problem.noise_count, x2, h, dW2)
    return _unbatch(_solve(update, start, cfg.solver), single)


def euler_maruyama_step(problem: SdeProblem, x, h: float, dW):
    """Euler-Maruyama on the Ito-converted equation."""
    x2, dW2, single = _as_batch(x, dW)
    out = x2 + h * ito_corrected_drift(problem, x2)
    for r, g in enumerate(problem.diffusions):
        out = out + dW2[:, r, None] * g(x2)
    return _unbatch(out, single)


def milstein_step(form: SkewGradientForm, x, h: float, dW, cfg: Optional[SchemeConfig] = None):
    """Explicit Milstein step for the skew-gradient system (commutative-noise form)."""
    x2, dW2, single = _as_batch(x, dW)
    m = form.noise_count
    g = [form.diffusion(r, x2) for r in range(m)]
    if form.diffusion_jacobians is not None:
        jac = [form.diffusion_jacobians[r](x2) for r in range(m)]
    else:
        jac = [fd_jacobian(lambda y, r=r: form.diffusion(r, y), x2) for r in range(m)]
    out = x2 + h * form.drift(x2)
    for r in range(m):
        out = out + dW2[:, r, None] * g[r]
    for i in range(m):
        for r in range(i + 1, m):
            out = out + (dW2[:, i] * dW2[:, r])[:, None] * matvec(jac[r], g[i])
    for r in range(m):
        out = out + 0.5 * (dW2[:, r] ** 2)[:, None] * matvec(jac[r], g[r])
    return _unbatch(out, single)


def make_stepper(scheme: SchemeConfig, problem: Optional[SdeProblem] = None,
                 form: Optional[SkewGradientForm] = None):
    """Bind a scheme to a problem/form and return ``step(x, h, dW)``."""
    kind = scheme.kind
    if kind in ("conservative", "milstein", "composition") and form is None:
        raise ConfigError(f"scheme {kind!r} needs a skew-gradient form")
    if kind in ("euler_maruyama", "stochastic_midpoint") and problem is None:
        if form is None:
            raise ConfigError(f"scheme {kind!r} needs a problem")
        problem = form.as_problem()
    if kind == "conservative":
        return lambda x, h, dW: conservative_step(form, x, h, dW, scheme)
    if kind == "milstein":
        return lambda x, h, dW: milstein_step(form, x, h, dW, scheme)
    if kind == "euler_maruyama":
        return lambda x, h, dW: euler_maruyama_step(problem, x, h, dW)
    if kind == "stochastic_midpoint":
        return lambda x, h, dW: stochastic_midpoint_step(problem, x, h, dW, scheme)
    from .splitting import composition_step, make_plan

    plan = make_plan(form, scheme.plan)
    return lambda x, h, dW: composition_step(plan, x, h, dW, scheme)


def integrate_path(stepper, x0, h: float, n_steps: int, increments, invariant=None) -> Trajectory:
    """Iterate ``stepper`` over ``n_steps`` columns of an ``m x n_steps`` increment array."""
    x0 = np.asarray(x0, dtype=float)
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 2 or increments.shape[1] != n_steps:
        raise ValueError(f"increments must have shape (m, {n_steps}), got {increments.shape}")
    states = np.empty((n_steps + 1,) + x0.shape)
    states[0] = x0
    for j in range(n_steps):
        try:
            states[j + 1] = stepper(states[j], h, increments[:, j])
        except ConfigError:
            raise
        except StepError as exc:
            raise StepError(j, exc.cause, exc.label) from exc
        except Exception as exc:
            raise StepError(j, exc) from exc
    values = invariant.value(states) if invariant is not None else np.full(n_steps + 1, np.nan)
    return Trajectory(h * np.arange(n_steps + 1), states, np.asarray(values))
