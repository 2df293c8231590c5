import math
import os
import subprocess
import sys

import numpy as np
import pytest

from stochdg import engine
from stochdg.harness import StudyConfig
from stochdg.noise import generate_increments

CASES = [
    ("pendulum", "conservative", "exact"),
    ("pendulum", "conservative", "quadrature:midpoint"),
    ("pendulum", "conservative", "separable"),
    ("pendulum", "milstein", "exact"),
    ("pendulum", "euler_maruyama", "exact"),
    ("pendulum", "stochastic_midpoint", "exact"),
    ("lotka_volterra", "conservative", "exact"),
    ("lotka_volterra", "conservative", "quadrature:gauss2"),
    ("lotka_volterra", "composition", "exact"),
    ("lotka_volterra", "stochastic_midpoint", "exact"),
    ("lotka_volterra", "milstein", "exact"),
    ("quartic", "conservative", "quadrature:simpson"),
    ("quartic", "composition", "exact"),
]

needs_kernel = pytest.mark.skipif(not engine.compiled_available(), reason="compiled kernel not built")


@needs_kernel
@pytest.mark.parametrize("problem,scheme,dg", CASES)
def test_compiled_matches_numpy(problem, scheme, dg):
    cfg = StudyConfig(problem=problem, scheme=scheme, dg=dg)
    spec = cfg.spec()
    h = 2.0**-6
    inc = generate_increments(3, spec.noise_count, h, 64, range(40))
    a = engine.simulate(spec, cfg.scheme_config(), h, inc, backend="numpy")
    b = engine.simulate(spec, cfg.scheme_config(), h, inc, backend="compiled")
    np.testing.assert_array_equal(a[3], b[3])
    ok = a[3] == 0
    np.testing.assert_allclose(a[0][ok], b[0][ok], rtol=0, atol=1e-10)
    np.testing.assert_allclose(a[1][ok], b[1][ok], rtol=0, atol=1e-10)
    np.testing.assert_allclose(a[2][ok], b[2][ok], rtol=0, atol=1e-10)


@needs_kernel
def test_compiled_path_independent_of_batch():
    cfg = StudyConfig(problem="lotka_volterra", scheme="composition")
    spec = cfg.spec()
    inc = generate_increments(0, 3, 2.0**-5, 32, range(10))
    full = engine.simulate(spec, cfg.scheme_config(), 2.0**-5, inc, backend="compiled")
    part = engine.simulate(spec, cfg.scheme_config(), 2.0**-5, inc[4:7], backend="compiled")
    np.testing.assert_array_equal(full[0][4:7], part[0])


def test_backend_routing():
    quad = StudyConfig(problem="quadratic")
    assert not engine.kernel_supports(quad.spec(), quad.scheme_config())
    pend = StudyConfig(problem="pendulum")
    if engine.compiled_available():
        assert engine.kernel_supports(pend.spec(), pend.scheme_config())
    inc = generate_increments(0, 2, 0.1, 10, range(3))
    out = engine.simulate(quad.spec(), quad.scheme_config(), 0.1, inc)
    assert out[0].shape == (3, 2)
    with pytest.raises(ValueError):
        engine.simulate(pend.spec(), pend.scheme_config(), 0.1, inc[:, :1])
    if engine.compiled_available():
        with pytest.raises(RuntimeError):
            engine.simulate(quad.spec(), quad.scheme_config(), 0.1, inc, backend="compiled")


def test_pure_environment_variable_selects_numpy():
    code = "from stochdg.engine import backend_name; print(backend_name())"
    env = dict(os.environ, STOCHDG_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"


def test_failed_paths_are_flagged_and_frozen():
    cfg = StudyConfig(problem="lotka_volterra")
    spec = cfg.spec()
    inc = np.zeros((2, 3, 4))
    inc[1, :, 1] = [-40.0, 0.0, 0.0]  # drives x1 through zero
    for backend in ["numpy"] + (["compiled"] if engine.compiled_available() else []):
        final, drift, sq, status = engine.simulate(spec, cfg.scheme_config("euler_maruyama"),
                                                   0.25, inc, backend=backend)
        assert status[0] == 0 and status[1] == 2
        # zero noise: the Ito correction alone grows each coordinate by 1 + 0.25 * 3
        np.testing.assert_allclose(final[0], spec.x0 * 1.75**4, rtol=1e-14)
        # the failing path stops at its state before the bad step
        np.testing.assert_allclose(final[1], spec.x0 * 1.75, rtol=1e-14)
        assert math.isfinite(drift[1])
