import math

import numpy as np
import pytest

from chaoslab.chaos import (
    ChaosTruncSpec,
    TwoPointFunctional,
    eval_functional,
    trig_chaos_coeff,
    trig_chaos_coeff_log,
    truncated_trig,
    truncated_trig_deriv,
    wick_power,
)

from oracles import gauss_expect as gh_expect


_SHIFTED = (np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u), np.sin)


def coeff_quadrature(trig, n, theta, sigma2):
    """C_n = E F^(n)(Z) / n! by quadrature; F = trig(theta * .).

    The n-th derivative of trig is the quarter-period shift, taken exactly
    (no pi arithmetic) so the quadrature keeps its extended-precision floor.
    """
    sigma = math.sqrt(sigma2)
    shift = (n + (0 if trig == "cos" else 3)) % 4
    e = gh_expect(lambda z: _SHIFTED[shift](theta * sigma * z))
    return theta**n / math.factorial(n) * e


def test_wick_power_examples():
    assert wick_power(2.0, 2, 1.0) == pytest.approx(3.0)
    assert wick_power(2.0, 2, 4.0) == pytest.approx(0.0)
    assert wick_power(1.0, 3, 1.0) == pytest.approx(-2.0)


def test_wick_power_vectorized():
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(wick_power(x, 2, 1.0), x**2 - 1.0)


def test_trig_chaos_coeff_examples():
    assert trig_chaos_coeff("cos", 0, 1.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert trig_chaos_coeff("cos", 1, 3.7, 2.0) == 0.0
    assert trig_chaos_coeff("sin", 1, 0.0, 1.0) == 0.0


@pytest.mark.parametrize("trig", ["cos", "sin"])
@pytest.mark.parametrize("theta", [0.1, 1.0, 5.0, 20.0])
@pytest.mark.parametrize("sigma2", [0.5, 1.0, 2.0])
def test_coeff_matches_quadrature(trig, theta, sigma2):
    for n in range(13):
        ana = trig_chaos_coeff(trig, n, theta, sigma2)
        quad = coeff_quadrature(trig, n, theta, sigma2)
        assert ana == pytest.approx(quad, abs=1e-8)


def test_coeff_log_form():
    sgn, logmag = trig_chaos_coeff_log("cos", 2, 1000.0, 1.0)
    assert sgn == -1.0
    expected = 2 * math.log(1000.0) - 0.5e6 - math.log(2.0)
    assert logmag == pytest.approx(expected)
    # plain form underflows to exactly zero there
    assert trig_chaos_coeff("cos", 2, 1000.0, 1.0) == 0.0


def test_parity_enforced():
    with pytest.raises(ValueError):
        ChaosTruncSpec("cos", 1)
    with pytest.raises(ValueError):
        ChaosTruncSpec("sin", 2)
    ChaosTruncSpec("cos", 2)
    ChaosTruncSpec("sin", 1)


def test_truncated_trig_theta_zero():
    spec = ChaosTruncSpec("cos", 2)
    for x in (-1.3, 0.0, 2.4):
        # cos(0 x) = 1 and the constant chaos term is removed exactly
        assert truncated_trig(x, 0.0, spec, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_truncated_sin_order_zero_is_identity():
    spec = ChaosTruncSpec("sin", 1)
    x, theta = 0.7, 2.3
    assert truncated_trig(x, theta, spec, 1.0) == pytest.approx(math.sin(theta * x))


def test_truncation_orthogonality_exact():
    # E[T_(m-1)(trig(theta Z)) Z^{<>k}] = c_k k! sigma^{2k} - same, exactly zero for k < m
    for trig, m in (("cos", 2), ("sin", 3), ("cos", 4)):
        theta, sigma2 = 1.3, 1.0
        for k in range(m):
            def integrand(z):
                return truncated_trig_deriv(z, theta, 0 if trig == "cos" else 3,
                                            m, 0, sigma2) * wick_power(z, k, sigma2)
            val = gh_expect(integrand)
            assert val == pytest.approx(0.0, abs=1e-10)
        # generically nonzero at k = m
        def at_m(z):
            return truncated_trig_deriv(z, theta, 0 if trig == "cos" else 3,
                                        m, 0, sigma2) * wick_power(z, m, sigma2)
        assert abs(gh_expect(at_m)) > 1e-6


def test_truncation_orthogonality_monte_carlo():
    gen = np.random.Generator(np.random.Philox(key=123))
    z = gen.standard_normal(100_000)
    theta, sigma2, m = 0.9, 1.0, 2
    vals = truncated_trig_deriv(z, theta, 0, m, 0, sigma2)
    for k in range(m):
        prod = vals * wick_power(z, k, sigma2)
        mean = prod.mean()
        se = prod.std(ddof=1) / math.sqrt(len(z))
        assert abs(mean) < 3.0 * se + 1e-12


@pytest.mark.parametrize("r", [1, 2, 3])
def test_derivative_matches_finite_difference(r):
    spec_x = ChaosTruncSpec("sin", 1)
    spec_y = ChaosTruncSpec("cos", 2)
    x, y, s2x, s2y = 0.43, -1.1, 1.0, 1.2
    theta_x, theta_y = 0.7, 1.3
    step = 1e-4

    def f(tx):
        fn = TwoPointFunctional(spec_x, spec_y, (tx, theta_y), (0, 0))
        return eval_functional(fn, x, y, s2x, s2y)

    if r == 1:
        fd = (f(theta_x + step) - f(theta_x - step)) / (2 * step)
    elif r == 2:
        fd = (f(theta_x + step) - 2 * f(theta_x) + f(theta_x - step)) / step**2
    else:
        fd = (f(theta_x + 2 * step) - 2 * f(theta_x + step) + 2 * f(theta_x - step)
              - f(theta_x - 2 * step)) / (2 * step**3)
    fn = TwoPointFunctional(spec_x, spec_y, (theta_x, theta_y), (r, 0))
    ana = eval_functional(fn, x, y, s2x, s2y)
    assert ana == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_eval_functional_product_structure():
    spec_x = ChaosTruncSpec("sin", 1)
    spec_y = ChaosTruncSpec("cos", 2)
    fn = TwoPointFunctional(spec_x, spec_y, (0.9, 1.7), (0, 0))
    x, y = 0.31, -0.77
    lhs = eval_functional(fn, x, y, 1.0, 1.0)
    rhs = truncated_trig(x, 0.9, spec_x, 1.0) * truncated_trig(y, 1.7, spec_y, 1.0)
    assert lhs == pytest.approx(rhs)


def test_eval_functional_zero_theta():
    fn = TwoPointFunctional(ChaosTruncSpec("sin", 1), ChaosTruncSpec("cos", 2),
                            (0.0, 0.0), (0, 0))
    assert eval_functional(fn, 0.5, 0.5, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_mixed_derivative_finite_difference():
    # derivative in each frequency acts on its own factor only
    spec_x = ChaosTruncSpec("sin", 1)
    spec_y = ChaosTruncSpec("cos", 2)
    x, y = 0.2, 0.9
    tx, ty = 0.7, 1.1
    step = 1e-4

    def f(a, b):
        fn = TwoPointFunctional(spec_x, spec_y, (a, b), (0, 0))
        return eval_functional(fn, x, y, 1.0, 1.0)

    fd = (f(tx + step, ty + step) - f(tx + step, ty - step)
          - f(tx - step, ty + step) + f(tx - step, ty - step)) / (4 * step**2)
    fn = TwoPointFunctional(spec_x, spec_y, (tx, ty), (1, 1))
    assert eval_functional(fn, x, y, 1.0, 1.0) == pytest.approx(fd, rel=1e-5, abs=1e-8)
