"""Stratonovich SDE problems with a scalar invariant and their skew-gradient form.

All callables follow one convention: they take states of shape ``(..., d)``
and broadcast over the leading axes, so the same problem definition serves a
single path and a batch of paths.  Vector fields return ``(..., d)``, matrix
fields ``(..., d, d)`` and the invariant ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularFormError

VectorField = Callable[[np.ndarray], np.ndarray]
MatrixField = Callable[[np.ndarray], np.ndarray]

_FD_SCALE = np.cbrt(np.finfo(float).eps)


def matvec(a, v):
    """Batched ``a @ v`` with a fixed, batch-independent summation order."""
    out = a[..., :, 0] * v[..., None, 0]
    for k in range(1, v.shape[-1]):
        out = out + a[..., :, k] * v[..., None, k]
    return out


def _dot(u, v):
    out = u[..., 0] * v[..., 0]
    for k in range(1, u.shape[-1]):
        out = out + u[..., k] * v[..., k]
    return out


@dataclass(frozen=True)
class Invariant:
    """Scalar conserved quantity ``I`` with its gradient.

    ``separable_parts`` holds one ``(I_k, I_k')`` pair of scalar callables per
    coordinate when ``I(x) = sum_k I_k(x^k)``.  ``exact_avg_gradient(x, y)``
    returns the closed form of the line average of the gradient between two
    states, when the problem knows it.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: VectorField
    separable_parts: Optional[Sequence[tuple]] = None
    exact_avg_gradient: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class SdeProblem:
    """``dX = f(X) dt + sum_r g_r(X) o dW_r`` together with its invariant."""

    dim: int
    noise_count: int
    drift: VectorField
    diffusions: Sequence[VectorField]
    invariant: Invariant
    diffusion_jacobians: Optional[Sequence[MatrixField]] = None

    def __post_init__(self):
        if self.dim < 1 or self.noise_count < 1:
            raise ValueError("dim and noise_count must be positive")
        if len(self.diffusions) != self.noise_count:
            raise ValueError(
                f"expected {self.noise_count} diffusions, got {len(self.diffusions)}"
            )
        if self.diffusion_jacobians is not None and len(self.diffusion_jacobians) != self.noise_count:
            raise ValueError("one jacobian per diffusion is required")


@dataclass(frozen=True)
class SkewGradientForm:
    """Skew-symmetric matrices ``S``, ``T_r`` with ``f = S grad I``, ``g_r = T_r grad I``."""

    dim: int
    noise_count: int
    s_matrix: MatrixField
    t_matrices: Sequence[MatrixField]
    invariant: Invariant
    diffusion_jacobians: Optional[Sequence[MatrixField]] = field(default=None, compare=False)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        return matvec(self.s_matrix(x), self.invariant.gradient(x))

    def diffusion(self, r, x):
        x = np.asarray(x, dtype=float)
        return matvec(self.t_matrices[r](x), self.invariant.gradient(x))

    def as_problem(self) -> SdeProblem:
        """View the form as a plain SDE problem (drift/diffusions assembled)."""
        diffusions = [(lambda x, r=r: self.diffusion(r, x)) for r in range(self.noise_count)]
        return SdeProblem(
            dim=self.dim,
            noise_count=self.noise_count,
            drift=self.drift,
            diffusions=diffusions,
            invariant=self.invariant,
            diffusion_jacobians=self.diffusion_jacobians,
        )


def _skew_from_pair(vec, aux, grad, x):
    den = _dot(aux, grad)
    scale = np.linalg.norm(aux, axis=-1) * np.linalg.norm(grad, axis=-1)
    bad = (den == 0.0) | (np.abs(den) < 1e-14 * scale) | ~np.isfinite(den)
    if np.any(bad):
        rows = np.flatnonzero(np.atleast_1d(bad))
        point = x if x.ndim == 1 else x.reshape(-1, x.shape[-1])[rows[0]]
        raise SingularFormError(
            "auxiliary vector is (numerically) orthogonal to grad I",
            point,
            rows=None if x.ndim == 1 else rows,
        )
    outer = vec[..., :, None] * aux[..., None, :]
    return (outer - np.swapaxes(outer, -1, -2)) / den[..., None, None]


def build_skew_gradient_form(problem: SdeProblem, a: Optional[VectorField] = None,
                             b: Optional[VectorField] = None) -> SkewGradientForm:
    """Construct ``S(x) = (f a^T - a f^T)/(a^T grad I)`` and the analogous ``T_r``.

    ``a`` and ``b`` default to ``grad I``.  Singular denominators are detected
    when the matrices are evaluated, not here.
    """
    inv = problem.invariant
    a = inv.gradient if a is None else a
    b = inv.gradient if b is None else b

    def s_matrix(x):
        x = np.asarray(x, dtype=float)
        return _skew_from_pair(problem.drift(x), a(x), inv.gradient(x), x)

    def make_t(g):
        def t_matrix(x):
            x = np.asarray(x, dtype=float)
            return _skew_from_pair(g(x), b(x), inv.gradient(x), x)
        return t_matrix

    return SkewGradientForm(
        dim=problem.dim,
        noise_count=problem.noise_count,
        s_matrix=s_matrix,
        t_matrices=[make_t(g) for g in problem.diffusions],
        invariant=inv,
        diffusion_jacobians=problem.diffusion_jacobians,
    )


def fd_jacobian(func: VectorField, x) -> np.ndarray:
    """Central-difference Jacobian, step ``cbrt(eps) * max(1, |x|)`` per state."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    eps = _FD_SCALE * np.maximum(1.0, np.linalg.norm(x, axis=-1))[..., None]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        step = eps * e
        cols.append((func(x + step) - func(x - step)) / (2.0 * eps))
    return np.stack(cols, axis=-1)


def _field_jacobian(problem: SdeProblem, fld, x):
    if problem.diffusion_jacobians is not None:
        for k, g in enumerate(problem.diffusions):
            if fld is g:
                return problem.diffusion_jacobians[k](x)
    return fd_jacobian(fld, x)


def lambda_op(problem: SdeProblem, i: int, fld: VectorField, x) -> np.ndarray:
    """Apply ``Lambda_i = (g_i . d/dx)`` to ``fld`` at ``x``; ``i`` is 0-based."""
    if not 0 <= i < problem.noise_count:
        raise IndexError(f"noise index {i} out of range for m={problem.noise_count}")
    x = np.asarray(x, dtype=float)
    return matvec(_field_jacobian(problem, fld, x), problem.diffusions[i](x))


@dataclass(frozen=True)
class CommutativityReport:
    commutative: bool
    max_deviation: float
    worst_pair: Optional[tuple]
    worst_point: Optional[np.ndarray]

    def __bool__(self):
        return self.commutative


def check_commutativity(problem: SdeProblem, points, tol: float) -> CommutativityReport:
    """Test ``Lambda_i g_r = Lambda_r g_i`` for all noise pairs at the given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("points must be non-empty")
    worst, pair, where = 0.0, None, None
    g = problem.diffusions
    for i in range(problem.noise_count):
        for r in range(i + 1, problem.noise_count):
            dev = np.linalg.norm(
                lambda_op(problem, i, g[r], pts) - lambda_op(problem, r, g[i], pts), axis=-1
            )
            k = int(np.argmax(dev))
            if pair is None or dev[k] > worst:
                worst, pair, where = float(dev[k]), (i, r), pts[k].copy()
    return CommutativityReport(worst <= tol, worst, pair, where)


def ito_corrected_drift(problem: SdeProblem, x) -> np.ndarray:
    """``f(x) + 1/2 sum_r (dg_r/dx)(x) g_r(x)``: the drift of the equivalent Ito SDE."""
    x = np.asarray(x, dtype=float)
    out = problem.drift(x)
    for r, g in enumerate(problem.diffusions):
        out = out + 0.5 * lambda_op(problem, r, g, x)
    return out


# -- validation helpers ----------------------------------------------------

def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def check_problem(problem: SdeProblem, points, rtol: float = 1e-5) -> None:
    """Assert the structural invariants of a problem at sample points.

    Checks output shapes, gradient vs finite differences of ``I``, supplied
    diffusion jacobians vs finite differences and separable decompositions.
    Raises ``AssertionError`` on the first violation.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = problem.dim
    inv = problem.invariant
    assert problem.drift(pts).shape == pts.shape, "drift shape"
    for g in problem.diffusions:
        assert g(pts).shape == pts.shape, "diffusion shape"

    def value_vec(y):
        return inv.value(y)[..., None]

    for x in pts:
        grad_fd = fd_jacobian(value_vec, x)[0]
        assert _rel(inv.gradient(x), grad_fd) <= rtol, f"gradient mismatch at {x}"
        if problem.diffusion_jacobians is not None:
            for g, jac in zip(problem.diffusions, problem.diffusion_jacobians):
                assert _rel(jac(x), fd_jacobian(g, x)) <= rtol, f"jacobian mismatch at {x}"
        if inv.separable_parts is not None:
            assert len(inv.separable_parts) == d
            total = sum(part[0](x[k]) for k, part in enumerate(inv.separable_parts))
            assert abs(total - inv.value(x)) <= 1e-12 * max(1.0, abs(total)), "separable sum"


def check_form(form: SkewGradientForm, points, problem: Optional[SdeProblem] = None,
               skew_tol: float = 1e-12, recon_tol: float = 1e-10) -> None:
    """Assert skew-symmetry and, given ``problem``, ``S grad I = f``, ``T_r grad I = g_r``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mats = [form.s_matrix] + list(form.t_matrices)
    for mat in mats:
        m = mat(pts)
        assert np.max(np.abs(m + np.swapaxes(m, -1, -2))) <= skew_tol, "matrix not skew"
    if problem is None:
        return
    targets = [problem.drift] + list(problem.diffusions)
    grad = form.invariant.gradient(pts)
    for mat, target in zip(mats, targets):
        want = target(pts)
        got = matvec(mat(pts), grad)
        err = np.linalg.norm(got - want, axis=-1)
        assert np.all(err <= recon_tol * (1.0 + np.linalg.norm(want, axis=-1))), "reconstruction"
