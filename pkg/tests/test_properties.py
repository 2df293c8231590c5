"""Property-based checks of the algebraic identities the schemes rely on."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochdg.core import Invariant, SkewGradientForm
from stochdg.harness import fit_slope
from stochdg.integrators import SchemeConfig, conservative_step, stochastic_midpoint_step
from stochdg.noise import TruncationPolicy, coarsen, truncate_increment
from stochdg.problems import build_problem
from stochdg.quadrature import QuadratureRule, averaged_gradient, builtin_rule, parse_strategy, verify_order
from stochdg.splitting import pairwise_split, validate_plan

PEND = build_problem("pendulum")
QUARTIC = build_problem("quartic")
QUAD = build_problem("quadratic")

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec2 = arrays(np.float64, 2, elements=finite)


@settings(max_examples=200, deadline=None)
@given(x=vec2, y=vec2)
def test_exact_average_is_a_discrete_gradient(x, y):
    inv = PEND.problem.invariant
    lhs = averaged_gradient(inv, x, y, parse_strategy("exact")) @ (y - x)
    assert abs(lhs - (inv.value(y) - inv.value(x))) <= 1e-12 * max(1.0, np.abs(y - x).max())


@settings(max_examples=200, deadline=None)
@given(x=vec2, y=vec2)
def test_separable_quotient_is_a_discrete_gradient(x, y):
    inv = QUARTIC.problem.invariant
    lhs = averaged_gradient(inv, x, y, parse_strategy("separable")) @ (y - x)
    rhs = inv.value(y) - inv.value(x)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(inv.value(x)), abs(inv.value(y)))


@settings(max_examples=100, deadline=None)
@given(x=vec2, y=vec2, rule=st.sampled_from(["midpoint", "trapezoid", "simpson", "gauss2", "gauss3"]))
def test_quadrature_on_quadratic_is_midpoint_gradient(x, y, rule):
    inv = QUAD.problem.invariant
    got = averaged_gradient(inv, x, y, parse_strategy(f"quadrature:{rule}"))
    np.testing.assert_allclose(got, inv.gradient(0.5 * (x + y)), atol=1e-13)


@given(w=arrays(np.float64, 20, elements=st.floats(-5, 5)), k=st.integers(0, 4),
       h=st.floats(1e-6, 0.9))
def test_truncation_properties(w, k, h):
    pol = TruncationPolicy(True, k)
    t = truncate_increment(w, h, pol)
    cap = math.sqrt(h) * pol.bound(h)
    assert np.all(np.abs(t) <= cap)
    inside = np.abs(w) <= cap
    np.testing.assert_array_equal(t[inside], w[inside])
    np.testing.assert_array_equal(truncate_increment(-w, h, pol), -t)


@given(arr=arrays(np.float64, (2, 24), elements=st.floats(-1, 1)),
       factor=st.sampled_from([1, 2, 3, 4, 6, 8, 12, 24]))
def test_coarsen_keeps_totals(arr, factor):
    c = coarsen(arr, factor)
    assert c.shape == (2, 24 // factor)
    np.testing.assert_allclose(c.sum(axis=1), arr.sum(axis=1), atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(x=arrays(np.float64, 2, elements=st.floats(-1, 1)), k=st.integers(4, 8),
       z=arrays(np.float64, 2, elements=st.floats(-2, 2)))
def test_quadratic_conservative_equals_midpoint(x, k, z):
    h = 2.0**-k
    dw = z * math.sqrt(h)
    a = conservative_step(QUAD.form, x, h, dw)
    b = stochastic_midpoint_step(QUAD.problem, x, h, dw)
    np.testing.assert_allclose(a, b, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(2, 5), seed=st.integers(0, 2**32 - 1))
def test_pairwise_split_partitions_any_skew_form(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d))
    s = a - a.T
    const = lambda m: (lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape).copy())
    inv = Invariant(lambda x: 0.5 * np.sum(x**2, -1), lambda x: np.asarray(x, float))
    form = SkewGradientForm(d, 1, const(s), [const(0.5 * s)], inv)
    plan = pairwise_split(form)
    assert len(plan.subsystems) == d * (d - 1) // 2
    assert validate_plan(plan, rng.normal(size=(3, d)), 1e-14)
    sched = plan.schedule()
    assert sched == sched[::-1]


@given(perm_seed=st.integers(0, 1000), name=st.sampled_from(["simpson", "gauss2", "gauss3", "trapezoid"]))
def test_order_independent_of_node_order(perm_seed, name):
    rule = builtin_rule(name)
    perm = np.random.default_rng(perm_seed).permutation(len(rule.nodes))
    shuffled = QuadratureRule([rule.nodes[i] for i in perm], [rule.weights[i] for i in perm], 1)
    assert verify_order(shuffled) == verify_order(rule)


@given(c=st.floats(1e-3, 1e3), p=st.floats(0.2, 3.0))
def test_fit_slope_recovers_power_laws(c, p):
    hs = np.array([2.0**-k for k in range(3, 9)])
    assert abs(fit_slope(hs, c * hs**p) - p) <= 1e-9


def test_midpoint_rule_step_defect_scaling():
    rng = np.random.default_rng(5)
    inv = QUARTIC.problem.invariant
    cfg = SchemeConfig("conservative", parse_strategy("quadrature:midpoint"))
    hs = [2.0**-k for k in range(8, 15, 2)]
    rms = []
    for h in hs:
        x = rng.uniform(-1.0, 1.0, size=(1000, 2))
        dw = rng.normal(scale=math.sqrt(h), size=(1000, 1))
        y = conservative_step(QUARTIC.form, x, h, dw, cfg)
        rms.append(math.sqrt(np.mean((inv.value(y) - inv.value(x)) ** 2)))
    assert abs(fit_slope(hs, rms) - 1.5) <= 0.25
