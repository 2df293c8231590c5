"""Built-in benchmark systems and property-test fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .core import Invariant, SdeProblem, SkewGradientForm, matvec
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    problem: SdeProblem
    form: Optional[SkewGradientForm]
    x0: np.ndarray
    horizon: float
    functionals: Dict[str, Callable] = field(default_factory=dict)
    params: Dict[str, float] = field(default_factory=dict)
    kernel_id: Optional[int] = None
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self):
        return self.problem.dim

    @property
    def noise_count(self):
        return self.problem.noise_count

    def valid(self, x):
        """Boolean mask of states inside the problem's admissible region."""
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        if self.domain is not None:
            ok &= self.domain(x)
        return ok


def _const(mat):
    mat = np.asarray(mat, dtype=float)

    def field_(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(mat, x.shape[:-1] + mat.shape).copy()
    return field_


def _skew2(upper):
    """2x2 skew matrix field with ``upper(x)`` in the (0, 1) slot."""
    def field_(x):
        x = np.asarray(x, dtype=float)
        u = upper(x)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = u
        out[..., 1, 0] = -u
        return out
    return field_


# -- stochastic pendulum ----------------------------------------------------

def pendulum(c1: float = 1.0, c2: float = 0.5) -> ProblemSpec:
    """Stochastically forced pendulum, state ``(p, q)``, energy ``p^2/2 - cos q``."""
    coef = (float(c1), float(c2))

    def value(x):
        return 0.5 * x[..., 0] ** 2 - np.cos(x[..., 1])

    def gradient(x):
        return np.stack([x[..., 0], np.sin(x[..., 1])], axis=-1)

    def exact_avg(x, y):
        # (cos q0 - cos q1)/(q1 - q0) = sin(mid) * sinc(half-width), stable as q1 -> q0
        dq = y[..., 1] - x[..., 1]
        mid = 0.5 * (x[..., 1] + y[..., 1])
        return np.stack(
            [0.5 * (x[..., 0] + y[..., 0]), np.sin(mid) * np.sinc(dq / (2.0 * np.pi))], axis=-1
        )

    separable = (
        (lambda p: 0.5 * p**2, lambda p: p),
        (lambda q: -np.cos(q), np.sin),
    )
    inv = Invariant(value, gradient, separable, exact_avg)

    def drift(x):
        return np.stack([-np.sin(x[..., 1]), x[..., 0]], axis=-1)

    def make_g(c):
        def g(x):
            cq = np.cos(x[..., 1])
            return c * np.stack([-cq * np.sin(x[..., 1]), x[..., 0] * cq], axis=-1)

        def jac(x):
            p, q = x[..., 0], x[..., 1]
            out = np.zeros(x.shape + (2,))
            out[..., 0, 1] = -c * np.cos(2.0 * q)
            out[..., 1, 0] = c * np.cos(q)
            out[..., 1, 1] = -c * p * np.sin(q)
            return out
        return g, jac

    gs, jacs = zip(*(make_g(c) for c in coef))
    problem = SdeProblem(2, 2, drift, list(gs), inv, list(jacs))
    form = SkewGradientForm(
        2, 2,
        _const([[0.0, -1.0], [1.0, 0.0]]),
        [_skew2(lambda x, c=c: -c * np.cos(x[..., 1])) for c in coef],
        inv,
        diffusion_jacobians=list(jacs),
    )
    return ProblemSpec(
        name="pendulum",
        problem=problem,
        form=form,
        x0=np.array([0.2, 1.0]),
        horizon=1.0,
        functionals={"sinp_q2": lambda x: np.sin(x[..., 0]) + x[..., 1] ** 2},
        params={"c1": coef[0], "c2": coef[1]},
        kernel_id=1,
    )


# -- cyclic Lotka-Volterra --------------------------------------------------

LV_FLOOR = 1e-12


def _lv_check(x):
    bad = np.any(np.abs(x) <= LV_FLOOR, axis=-1)
    if np.any(bad):
        rows = np.flatnonzero(np.atleast_1d(bad))
        point = x if x.ndim == 1 else x.reshape(-1, x.shape[-1])[rows[0]]
        raise DomainError(
            "Lotka-Volterra skew matrices are singular where a coordinate vanishes",
            point, rows=None if x.ndim == 1 else rows,
        )


# T_r entries: coefficient * 1/(2 x^k) in slots (0,1)->k=2, (0,2)->k=1, (1,2)->k=0
_LV_T = (
    (1.0, 1.0, 3.0),
    (1.0, 1.0, -3.0),
    (-1.0, -3.0, 1.0),
)
_LV_G = ((1.0, 1.0, -2.0), (1.0, -2.0, 1.0), (-2.0, 1.0, 1.0))


def _lv_t(coefs):
    a, b, c = coefs

    def t_matrix(x):
        x = np.asarray(x, dtype=float)
        _lv_check(x)
        out = np.zeros(x.shape + (3,))
        out[..., 0, 1] = a / (2.0 * x[..., 2])
        out[..., 0, 2] = b / (2.0 * x[..., 1])
        out[..., 1, 2] = c / (2.0 * x[..., 0])
        out[..., 1, 0] = -out[..., 0, 1]
        out[..., 2, 0] = -out[..., 0, 2]
        out[..., 2, 1] = -out[..., 1, 2]
        return out
    return t_matrix


def cyclic_lotka_volterra() -> ProblemSpec:
    """Cyclic Lotka-Volterra with three multiplicative noises; invariant ``x1 x2 x3``."""

    def value(x):
        return x[..., 0] * x[..., 1] * x[..., 2]

    def gradient(x):
        return np.stack(
            [x[..., 1] * x[..., 2], x[..., 0] * x[..., 2], x[..., 0] * x[..., 1]], axis=-1
        )

    def exact_avg(x, y):
        def avg(i, j):
            # integral of the product of two linear interpolants on [0, 1]
            return (2 * x[..., i] * x[..., j] + x[..., i] * y[..., j]
                    + y[..., i] * x[..., j] + 2 * y[..., i] * y[..., j]) / 6.0
        return np.stack([avg(1, 2), avg(0, 2), avg(0, 1)], axis=-1)

    inv = Invariant(value, gradient, None, exact_avg)

    def drift(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([x1 * (x3 - x2), x2 * (x1 - x3), x3 * (x2 - x1)], axis=-1)

    def make_g(coefs):
        diag = np.asarray(coefs)

        def g(x):
            return np.asarray(x, dtype=float) * diag

        def jac(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(np.diag(diag), x.shape + (3,)).copy()
        return g, jac

    gs, jacs = zip(*(make_g(c) for c in _LV_G))
    problem = SdeProblem(3, 3, drift, list(gs), inv, list(jacs))
    form = SkewGradientForm(
        3, 3,
        _const([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]]),
        [_lv_t(c) for c in _LV_T],
        inv,
        diffusion_jacobians=list(jacs),
    )
    functionals = {
        "x1x2": lambda x: x[..., 0] * x[..., 1],
        "x2x3": lambda x: x[..., 1] * x[..., 2],
        "x1sq": lambda x: x[..., 0] ** 2,
        "normsq": lambda x: np.sum(x**2, axis=-1),
    }
    return ProblemSpec(
        name="lotka_volterra",
        problem=problem,
        form=form,
        x0=np.array([0.01, 0.01, 0.01]),
        horizon=1.0,
        functionals=functionals,
        kernel_id=2,
        domain=lambda x: np.all(x > LV_FLOOR, axis=-1),
    )


# -- fixtures ---------------------------------------------------------------

def quartic_fixture() -> ProblemSpec:
    """Separable quartic invariant ``(x1^4 + x2^4)/4`` with constant skew matrices."""
    s = np.array([[0.0, 1.0], [-1.0, 0.0]])
    t = 0.2 * s

    def value(x):
        return 0.25 * (x[..., 0] ** 4 + x[..., 1] ** 4)

    def gradient(x):
        return np.asarray(x, dtype=float) ** 3

    def exact_avg(x, y):
        return 0.25 * (y**3 + y**2 * x + y * x**2 + x**3)

    part = (lambda u: 0.25 * u**4, lambda u: u**3)
    inv = Invariant(value, gradient, (part, part), exact_avg)

    def drift(x):
        return matvec(np.broadcast_to(s, x.shape + (2,)), gradient(x))

    def g(x):
        return 0.2 * drift(x)

    def jac(x):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 1] = 0.6 * x[..., 1] ** 2
        out[..., 1, 0] = -0.6 * x[..., 0] ** 2
        return out

    problem = SdeProblem(2, 1, drift, [g], inv, [jac])
    form = SkewGradientForm(2, 1, _const(s), [_const(t)], inv, diffusion_jacobians=[jac])
    return ProblemSpec(
        name="quartic",
        problem=problem,
        form=form,
        x0=np.array([1.0, 0.5]),
        horizon=1.0,
        functionals={"x1sq": lambda x: x[..., 0] ** 2},
        kernel_id=3,
    )


def quadratic_fixture() -> ProblemSpec:
    """``I = x^T C x / 2 + d^T x`` with one state-dependent noise matrix.

    No closed-form jacobians are supplied, so every derivative goes through
    finite differences; no compiled kernel exists for it either.
    """
    cmat = np.array([[2.0, 0.5], [0.5, 1.0]])
    dvec = np.array([0.1, -0.2])

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * matvec(np.broadcast_to(cmat, x.shape + (2,)), x), axis=-1) + x @ dvec

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return matvec(np.broadcast_to(cmat, x.shape + (2,)), x) + dvec

    def exact_avg(x, y):
        return gradient(0.5 * (np.asarray(x) + np.asarray(y)))

    inv = Invariant(value, gradient, None, exact_avg)
    s_field = _const([[0.0, 1.0], [-1.0, 0.0]])
    t_fields = [
        _const([[0.0, 0.5], [-0.5, 0.0]]),
        _skew2(lambda x: 0.3 * (1.0 + 0.5 * x[..., 0] ** 2)),
    ]
    form = SkewGradientForm(2, 2, s_field, t_fields, inv)
    problem = form.as_problem()
    return ProblemSpec(
        name="quadratic",
        problem=problem,
        form=form,
        x0=np.array([0.5, -0.3]),
        horizon=1.0,
        functionals={"x1": lambda x: x[..., 0]},
    )


_REGISTRY = {
    "pendulum": (pendulum, {"c1": 1.0, "c2": 0.5}),
    "lotka_volterra": (cyclic_lotka_volterra, {}),
    "quartic": (quartic_fixture, {}),
    "quadratic": (quadratic_fixture, {}),
}


def problem_names():
    return list(_REGISTRY)


def problem_parameters(name: str) -> dict:
    return dict(_lookup(name)[1])


def _lookup(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {list(_REGISTRY)}") from None


def build_problem(name: str, **params) -> ProblemSpec:
    factory, defaults = _lookup(name)
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"problem {name!r} takes no parameters {sorted(unknown)}")
    merged = {**defaults, **{k: v for k, v in params.items() if v is not None}}
    return factory(**merged)
