"""Backend selection for batched path simulation.

The compiled kernel is used when it imports, the problem carries a
``kernel_id`` and the scheme configuration is one the kernel implements.
Everything else, and every run with ``STOCHDG_PURE=1`` in the environment,
goes through the numpy engine in :mod:`stochdg._fallback`.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback
from .quadrature import ExactAverage, QuadratureAverage, SeparableCoordinate

try:  # pragma: no cover - depends on the build
    from ._kernels import run_paths as _compiled_run_paths
except ImportError:  # pragma: no cover
    _compiled_run_paths = None

_SCHEME_IDS = {
    "conservative": 0,
    "milstein": 1,
    "euler_maruyama": 2,
    "stochastic_midpoint": 3,
    "composition": 4,
}


def compiled_available() -> bool:
    return _compiled_run_paths is not None


def backend_name() -> str:
    """``"compiled"`` or ``"numpy"``, whichever :func:`simulate` prefers."""
    if compiled_available() and not os.environ.get("STOCHDG_PURE"):
        return "compiled"
    return "numpy"


def _dg_args(strategy):
    if isinstance(strategy, ExactAverage):
        return 0, np.zeros(0), np.zeros(0), 1e-8
    if isinstance(strategy, QuadratureAverage):
        return 1, np.ascontiguousarray(strategy.rule.nodes, float), \
            np.ascontiguousarray(strategy.rule.weights, float), 1e-8
    if isinstance(strategy, SeparableCoordinate):
        return 2, np.zeros(0), np.zeros(0), float(strategy.rel_threshold)
    return None


def kernel_supports(spec, scheme) -> bool:
    if spec.kernel_id is None or scheme.kind not in _SCHEME_IDS:
        return False
    if scheme.kind == "composition" and scheme.plan != "pairwise":
        return False
    dg = _dg_args(scheme.dg_strategy)
    if dg is None or dg[1].size > 16:
        return False
    return scheme.dg_strategy.applicable(spec.problem.invariant)


def simulate(spec, scheme, h, increments, x0=None, backend=None):
    """Integrate ``P`` paths driven by ``increments`` of shape ``(P, m, n_steps)``.

    Parameters
    ----------
    spec : ProblemSpec
    scheme : SchemeConfig
    h : float
        Step size.
    increments : ndarray
        Brownian increments, already truncated if truncation is wanted.
    x0 : array_like, optional
        Start state; defaults to ``spec.x0``.
    backend : {"compiled", "numpy"}, optional
        Force a backend.  ``"compiled"`` raises if the kernel cannot serve
        this configuration.

    Returns
    -------
    final : ndarray, shape (P, d)
    max_drift : ndarray, shape (P,)
        ``max_n |I(X_n) - I(X_0)|`` per path.
    step_sq : ndarray, shape (P,)
        Sum over steps of the squared invariant increment per path.
    status : ndarray of int8, shape (P,)
        0 for a completed path, 1 for solver failure, 2 for a domain or
        singularity failure.  Failed paths stop at their last good state.
    """
    x0 = np.asarray(spec.x0 if x0 is None else x0, dtype=float)
    increments = np.ascontiguousarray(increments, dtype=float)
    if increments.ndim != 3 or increments.shape[1] != spec.noise_count:
        raise ValueError(
            f"increments must have shape (P, {spec.noise_count}, n), got {increments.shape}"
        )
    use = backend or backend_name()
    if use == "compiled":
        if not compiled_available():
            raise RuntimeError("compiled kernel is not available")
        if not kernel_supports(spec, scheme):
            if backend == "compiled":
                raise RuntimeError("compiled kernel does not support this configuration")
            use = "numpy"
    if use == "numpy":
        return _fallback.run_paths(spec, scheme, h, x0, increments)
    dg, nodes, weights, thresh = _dg_args(scheme.dg_strategy)
    params = np.array([spec.params.get("c1", 0.0), spec.params.get("c2", 0.0), 0.0])
    solver = scheme.solver
    return _compiled_run_paths(
        spec.kernel_id, params, _SCHEME_IDS[scheme.kind], dg, nodes, weights,
        np.ascontiguousarray(x0), float(h), increments,
        solver.abs_tol, solver.max_iterations, solver.newton_fallback, thresh,
    )
