import math

import numpy as np
import pytest

from stochdg.core import Invariant, SkewGradientForm
from stochdg.errors import ConfigError, NonConvergenceError
from stochdg.integrators import SchemeConfig, SolverConfig, conservative_step
from stochdg.splitting import (
    SplittingPlan,
    SubSystem,
    composition_step,
    make_plan,
    pairwise_split,
    validate_plan,
)


def _const(m):
    m = np.asarray(m, dtype=float)
    return lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape).copy()


def _quadratic3():
    cmat = np.diag([1.0, 2.0, 0.5])
    inv = Invariant(lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, cmat, x),
                    lambda x: np.einsum("ij,...j->...i", cmat, x), None,
                    lambda x, y: np.einsum("ij,...j->...i", cmat, 0.5 * (np.asarray(x) + np.asarray(y))))
    s = np.array([[0.0, 0.4, -0.7], [-0.4, 0.0, 1.1], [0.7, -1.1, 0.0]])
    return SkewGradientForm(3, 1, _const(s), [_const(np.zeros((3, 3)))], inv), s, cmat


def test_two_dimensional_split_is_the_full_form(pend):
    plan = pairwise_split(pend.form)
    assert [s.label for s in plan.subsystems] == [(1, 2)]
    x = np.array([0.3, 0.8])
    dw = np.array([0.04, -0.02])
    np.testing.assert_array_equal(composition_step(plan, x, 2.0**-6, dw),
                                  conservative_step(pend.form, x, 2.0**-6, dw))


def test_lv_split_labels_and_schedule(lv):
    plan = pairwise_split(lv.form)
    assert [s.label for s in plan.subsystems] == [(1, 2), (1, 3), (2, 3)]
    sched = plan.schedule()
    assert sched == [((1, 2), 0.5), ((1, 3), 0.5), ((2, 3), 1.0), ((1, 3), 0.5), ((1, 2), 0.5)]
    assert sched == sched[::-1]


def test_reconstruction_and_skew(lv, rng):
    plan = pairwise_split(lv.form)
    pts = rng.uniform(0.1, 2.0, size=(10, 3))
    total = sum(s.s_matrix(pts) for s in plan.subsystems)
    np.testing.assert_allclose(total, lv.form.s_matrix(pts), atol=1e-14)
    rep = validate_plan(plan, pts, 1e-12)
    assert rep and rep.worst <= 1e-14
    assert validate_plan(plan, lv.x0, 1e-12)


def test_validate_plan_detects_defect(lv):
    plan = pairwise_split(lv.form)
    bad_sub = plan.subsystems[0]

    def perturbed(x):
        m = bad_sub.form.s_matrix(x)
        m[..., 0, 1] += 1e-3
        return m

    broken = SkewGradientForm(3, 3, perturbed, bad_sub.form.t_matrices, lv.form.invariant)
    plan2 = SplittingPlan((SubSystem((1, 2), broken),) + tuple(plan.subsystems[1:]), lv.form)
    rep = validate_plan(plan2, [[0.5, 0.7, 0.9]], 1e-12)
    assert not rep
    assert rep.worst == pytest.approx(1e-3, rel=1e-6)
    with pytest.raises(ValueError):
        validate_plan(plan, np.empty((0, 3)), 1e-12)


def test_split_rejects_scalar_systems():
    inv = Invariant(lambda x: x[..., 0], lambda x: np.ones_like(x))
    form = SkewGradientForm(1, 1, _const([[0.0]]), [_const([[0.0]])], inv)
    with pytest.raises(ConfigError):
        pairwise_split(form)
    with pytest.raises(ConfigError):
        make_plan(form, "strang")


def test_lv_composition_preserves_invariant(lv, rng):
    plan = pairwise_split(lv.form)
    inv = lv.problem.invariant
    h = 2.0**-6
    for _ in range(50):
        x = rng.uniform(0.5, 1.5, 3)
        dw = rng.normal(scale=math.sqrt(h), size=3)
        y = composition_step(plan, x, h, dw)
        scale = max(1.0, abs(inv.value(x)))
        assert abs(inv.value(y) - inv.value(x)) <= 5 * 3 * 1e-12 * scale


def test_noise_free_composition_is_product_of_cayley_maps():
    form, s, cmat = _quadratic3()
    plan = pairwise_split(form)
    x = np.array([0.3, -0.5, 0.8])
    h = 0.1
    y = x.copy()
    for (i, j), lam in plan.schedule():
        sub = np.zeros((3, 3))
        sub[i - 1, j - 1], sub[j - 1, i - 1] = s[i - 1, j - 1], s[j - 1, i - 1]
        a = lam * h * sub @ cmat
        y = np.linalg.solve(np.eye(3) - a / 2, (np.eye(3) + a / 2) @ y)
    np.testing.assert_allclose(composition_step(plan, x, h, np.zeros(1)), y, atol=1e-12)


def test_substep_failure_carries_label(lv):
    plan = pairwise_split(lv.form)
    cfg = SchemeConfig("composition", solver=SolverConfig(max_iterations=1, newton_fallback=False))
    with pytest.raises(NonConvergenceError) as info:
        composition_step(plan, np.array([1.0, 1.2, 0.8]), 0.25, np.array([0.4, -0.3, 0.2]), cfg)
    assert info.value.label == (1, 2)
    assert "sub-step (1, 2)" in str(info.value)
