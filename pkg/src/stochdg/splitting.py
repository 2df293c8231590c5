"""Skew-symmetric splitting and palindromic composition of conservative sub-steps."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .core import SkewGradientForm
from .errors import ConfigError, NonConvergenceError, SingularFormError
from .integrators import SchemeConfig, conservative_step


@dataclass(frozen=True)
class SubSystem:
    label: tuple
    form: SkewGradientForm

    @property
    def s_matrix(self):
        return self.form.s_matrix

    @property
    def t_matrices(self):
        return self.form.t_matrices


@dataclass(frozen=True)
class SplittingPlan:
    subsystems: Sequence[SubSystem]
    parent: SkewGradientForm

    def schedule(self):
        """Sub-step sequence as ``(label, lambda)`` pairs: half steps out, full centre, half steps back."""
        labels = [s.label for s in self.subsystems]
        head = [(lab, 0.5) for lab in labels[:-1]]
        return head + [(labels[-1], 1.0)] + head[::-1]


def _masked(mat, i, j):
    def sub(x):
        full = mat(x)
        out = np.zeros_like(full)
        out[..., i, j] = full[..., i, j]
        out[..., j, i] = full[..., j, i]
        return out
    return sub


def pairwise_split(form: SkewGradientForm) -> SplittingPlan:
    """One subsystem per index pair ``(i, j)``, ``i < j``, in lexicographic order."""
    if form.dim < 2:
        raise ConfigError("pairwise splitting needs d >= 2")
    subs = []
    for i, j in combinations(range(form.dim), 2):
        sub_form = SkewGradientForm(
            dim=form.dim,
            noise_count=form.noise_count,
            s_matrix=_masked(form.s_matrix, i, j),
            t_matrices=[_masked(t, i, j) for t in form.t_matrices],
            invariant=form.invariant,
        )
        subs.append(SubSystem((i + 1, j + 1), sub_form))
    return SplittingPlan(tuple(subs), form)


def make_plan(form: SkewGradientForm, name: str) -> SplittingPlan:
    if name == "pairwise":
        return pairwise_split(form)
    raise ConfigError(f"unknown splitting plan {name!r}")


def composition_step(plan: SplittingPlan, x, h: float, dW, cfg: Optional[SchemeConfig] = None):
    """Palindromic composition of conservative sub-steps sharing one increment vector."""
    cfg = cfg or SchemeConfig()
    by_label = {s.label: s for s in plan.subsystems}
    dW = np.asarray(dW, dtype=float)
    y = np.asarray(x, dtype=float)
    for label, lam in plan.schedule():
        try:
            y = conservative_step(by_label[label].form, y, lam * h, lam * dW, cfg)
        except (NonConvergenceError, SingularFormError) as exc:
            exc.args = (f"sub-step {label}: {exc.args[0]}",) + exc.args[1:]
            exc.label = label
            raise
    return y


@dataclass(frozen=True)
class PlanReport:
    ok: bool
    skew_deviation: float
    reconstruction_deviation: float

    def __bool__(self):
        return self.ok

    @property
    def worst(self) -> float:
        return max(self.skew_deviation, self.reconstruction_deviation)


def validate_plan(plan: SplittingPlan, points, tol: float) -> PlanReport:
    """Check skew-symmetry of every sub-matrix and that sub-matrices sum to the parent's."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("points must be non-empty")
    parent = plan.parent
    getters = [lambda f: f.s_matrix] + [
        (lambda f, r=r: f.t_matrices[r]) for r in range(parent.noise_count)
    ]
    skew = recon = 0.0
    for get in getters:
        total = np.zeros(pts.shape + (pts.shape[-1],))
        for sub in plan.subsystems:
            m = get(sub.form)(pts)
            skew = max(skew, float(np.max(np.abs(m + np.swapaxes(m, -1, -2)))))
            total = total + m
        recon = max(recon, float(np.max(np.abs(total - get(parent)(pts)))))
    return PlanReport(skew <= tol and recon <= tol, skew, recon)


__all__ = [
    "SubSystem",
    "SplittingPlan",
    "pairwise_split",
    "make_plan",
    "composition_step",
    "validate_plan",
    "PlanReport",
]
