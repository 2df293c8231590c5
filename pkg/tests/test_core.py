import numpy as np
import pytest

from stochdg.core import (
    Invariant,
    SdeProblem,
    SkewGradientForm,
    build_skew_gradient_form,
    check_commutativity,
    check_form,
    check_problem,
    fd_jacobian,
    ito_corrected_drift,
    lambda_op,
)
from stochdg.errors import SingularFormError


def _pendulum_problem(c1=1.0, c2=0.5):
    inv = Invariant(lambda x: 0.5 * x[..., 0] ** 2 - np.cos(x[..., 1]),
                    lambda x: np.stack([x[..., 0], np.sin(x[..., 1])], axis=-1))

    def g(c):
        return lambda x: c * np.cos(x[..., 1])[..., None] * np.stack(
            [-np.sin(x[..., 1]), x[..., 0]], axis=-1)

    return SdeProblem(2, 2, lambda x: np.stack([-np.sin(x[..., 1]), x[..., 0]], axis=-1),
                      [g(c1), g(c2)], inv)


def test_problem_validates_lengths():
    inv = Invariant(lambda x: x[..., 0], lambda x: np.ones_like(x))
    with pytest.raises(ValueError):
        SdeProblem(2, 2, lambda x: x, [lambda x: x], inv)


def test_constructed_form_reproduces_pendulum_drift():
    prob = _pendulum_problem()
    form = build_skew_gradient_form(prob)
    x = np.array([0.2, 1.0])
    got = form.s_matrix(x) @ prob.invariant.gradient(x)
    np.testing.assert_allclose(got, [-np.sin(1.0), 0.2], atol=1e-12)
    assert abs(got[0] + 0.84147) < 1e-5


def test_constructed_form_is_skew_and_reconstructs(rng):
    prob = _pendulum_problem()
    form = build_skew_gradient_form(prob)
    pts = rng.uniform(-2, 2, size=(10, 2))
    check_form(form, pts, prob)
    for x in pts:
        grad = prob.invariant.gradient(x)
        assert abs(grad @ prob.drift(x)) < 1e-14
        assert abs(grad @ form.t_matrices[0](x) @ grad) < 1e-14


def test_lv_form_from_construction_matches_constant_s(lv):
    form = build_skew_gradient_form(lv.problem)
    x = np.array([0.01, 0.01, 0.01])
    grad = lv.problem.invariant.gradient(x)
    s_const = np.array([[0, 1, -1], [-1, 0, 1], [1, -1, 0]], dtype=float)
    np.testing.assert_allclose(form.s_matrix(x) @ grad, s_const @ grad, atol=1e-12)
    np.testing.assert_allclose(form.s_matrix(x) @ grad, lv.problem.drift(x), atol=1e-12)


def test_gradient_flow_reconstruction_fails():
    # f = grad I gives S = 0, so S grad I cannot reproduce f
    inv = Invariant(lambda x: 0.5 * np.sum(x**2, axis=-1), lambda x: np.asarray(x, float))
    prob = SdeProblem(2, 1, lambda x: np.asarray(x, float), [lambda x: np.zeros_like(x)], inv)
    form = build_skew_gradient_form(prob)
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(form.s_matrix(x), np.zeros((2, 2)))
    with pytest.raises(AssertionError):
        check_form(form, x[None], prob)


def test_singular_denominator_raises_with_point():
    prob = _pendulum_problem()
    form = build_skew_gradient_form(prob)
    x = np.array([0.0, 0.0])  # grad I vanishes
    with pytest.raises(SingularFormError) as info:
        form.s_matrix(x)
    np.testing.assert_array_equal(info.value.point, x)


def test_singular_rows_reported_for_batches():
    prob = _pendulum_problem()
    form = build_skew_gradient_form(prob)
    pts = np.array([[1.0, 0.3], [0.0, 0.0], [0.2, 1.0]])
    with pytest.raises(SingularFormError) as info:
        form.t_matrices[0](pts)
    assert list(info.value.rows) == [1]


def test_lambda_op_trivial_cases():
    inv = Invariant(lambda x: x[..., 0], lambda x: np.ones_like(x))
    const = SdeProblem(2, 1, lambda x: np.zeros_like(x), [lambda x: np.ones_like(x) * 3.0], inv)
    assert np.allclose(lambda_op(const, 0, const.diffusions[0], np.array([0.4, 0.7])), 0.0)
    ident = SdeProblem(2, 1, lambda x: np.zeros_like(x), [lambda x: np.asarray(x, float)], inv)
    x = np.array([0.4, -0.7])
    np.testing.assert_allclose(lambda_op(ident, 0, lambda y: np.asarray(y, float), x), x, atol=1e-9)
    with pytest.raises(IndexError):
        lambda_op(ident, 1, ident.diffusions[0], x)


def test_lambda_op_pendulum_against_hand_jacobian(pend):
    x = np.array([0.2, 1.0])
    p, q = x
    g1 = np.array([-np.cos(q) * np.sin(q), p * np.cos(q)])
    jac = np.array([[0.0, -np.cos(2 * q)], [np.cos(q), -p * np.sin(q)]])
    got = lambda_op(pend.problem, 0, pend.problem.diffusions[0], x)
    np.testing.assert_allclose(got, jac @ g1, atol=1e-6)
    # supplied jacobians and finite differences agree
    fd = lambda_op(pend.problem, 0, lambda y: pend.problem.diffusions[0](y), x)
    np.testing.assert_allclose(got, fd, rtol=1e-5)


def test_commutativity_reports():
    inv = Invariant(lambda x: x[..., 0], lambda x: np.ones_like(x))
    single = SdeProblem(2, 1, lambda x: x, [lambda x: x**2], inv)
    assert check_commutativity(single, [[1.0, 2.0]], 1e-12)
    g1 = lambda x: np.stack([x[..., 1], np.zeros_like(x[..., 0])], axis=-1)
    g2 = lambda x: np.stack([np.zeros_like(x[..., 0]), x[..., 0]], axis=-1)
    prob = SdeProblem(2, 2, lambda x: x, [g1, g2], inv)
    rep = check_commutativity(prob, [[1.0, 2.0]], 1e-8)
    assert not rep
    # Lambda_1 g_2 = (0, x2) and Lambda_2 g_1 = (x1, 0) at (1, 2)
    assert rep.max_deviation == pytest.approx(np.hypot(1.0, 2.0), rel=1e-6)
    assert rep.worst_pair == (0, 1)


def test_pendulum_commutes(pend, rng):
    pts = rng.uniform(-2, 2, size=(10, 2))
    assert check_commutativity(pend.problem, pts, 1e-8)


def test_ito_correction():
    inv = Invariant(lambda x: x[..., 1], lambda x: np.stack([0 * x[..., 0], 1 + 0 * x[..., 0]], -1))
    f = lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1)
    zero = SdeProblem(2, 1, f, [lambda x: np.zeros_like(x)], inv)
    x = np.array([0.3, -1.2])
    np.testing.assert_array_equal(ito_corrected_drift(zero, x), f(x))
    diag = SdeProblem(2, 1, f, [lambda x: np.stack([x[..., 0], 0 * x[..., 0]], -1)], inv)
    np.testing.assert_allclose(ito_corrected_drift(diag, x), f(x) + 0.5 * np.array([0.3, 0.0]),
                               atol=1e-9)


def test_ito_correction_pendulum(pend):
    x = np.array([0.2, 1.0])
    prob = pend.problem
    corr = sum(0.5 * fd_jacobian(g, x) @ g(x) for g in prob.diffusions)
    np.testing.assert_allclose(ito_corrected_drift(prob, x), prob.drift(x) + corr, atol=1e-6)


def test_fd_jacobian_shape_and_accuracy(rng):
    x = rng.normal(size=(4, 3))
    func = lambda y: np.stack([y[..., 0] * y[..., 1], np.sin(y[..., 2]), y[..., 0] ** 2], -1)
    jac = fd_jacobian(func, x)
    assert jac.shape == (4, 3, 3)
    want = np.zeros((4, 3, 3))
    want[:, 0, 0], want[:, 0, 1] = x[:, 1], x[:, 0]
    want[:, 1, 2] = np.cos(x[:, 2])
    want[:, 2, 0] = 2 * x[:, 0]
    np.testing.assert_allclose(jac, want, atol=1e-8)


def test_check_problem_catches_wrong_gradient():
    inv = Invariant(lambda x: np.sum(x**2, -1), lambda x: np.asarray(x, float))  # missing factor 2
    prob = SdeProblem(2, 1, lambda x: x, [lambda x: x], inv)
    with pytest.raises(AssertionError):
        check_problem(prob, [[1.0, 2.0]])


def test_explicit_form_round_trips_to_problem(quadratic):
    form = quadratic.form
    prob = form.as_problem()
    x = np.array([0.3, -0.1])
    np.testing.assert_allclose(prob.drift(x), form.s_matrix(x) @ form.invariant.gradient(x))
    assert isinstance(form, SkewGradientForm)
