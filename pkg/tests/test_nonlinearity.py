import math

import numpy as np
import pytest

from chaoslab import rng
from chaoslab.nonlinearity import (
    NonlinearitySpec,
    WindowNormQuery,
    coupling_constant,
    growth_exponent,
    holder_quotient,
    make_nonlinearity,
    mollify,
    window_norm,
    window_norm_difference,
)

from oracles import gauss_expect


def test_power_even_second_derivative():
    beta = 0.5
    f = make_nonlinearity("power_even", beta=beta)
    u = np.array([-2.0, -0.5, 0.5, 2.0])
    want = (2 + beta) * (1 + beta) * np.abs(u) ** beta
    np.testing.assert_allclose(f.deriv(2, u), want)


def test_power_odd_symmetry():
    g = make_nonlinearity("power_odd", beta=0.3)
    u = np.linspace(0.1, 3.0, 20)
    np.testing.assert_allclose(g(-u), -g(u))
    # even derivatives of an odd function are odd, odd ones even
    np.testing.assert_allclose(g.deriv(1, -u), g.deriv(1, u))
    np.testing.assert_allclose(g.deriv(2, -u), -g.deriv(2, u))


def test_polynomial_derivatives():
    p = make_nonlinearity("polynomial", coeffs=[1.0, 0.0, 3.0])  # 1 + 3u^2
    u = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(p.deriv(1, u), 6.0 * u)
    np.testing.assert_allclose(p.deriv(2, u), np.full_like(u, 6.0))


def test_beta_validation():
    with pytest.raises(ValueError):
        make_nonlinearity("power_even", beta=1.5)
    with pytest.raises(ValueError):
        make_nonlinearity("power_even", beta=0.0)


def test_growth_exponent():
    f = make_nonlinearity("power_even", beta=0.5)
    m = growth_exponent(f)
    assert m == pytest.approx(2.5, abs=0.15)


def test_holder_class_quotient_finite():
    f = make_nonlinearity("power_even", beta=0.5)
    q = holder_quotient(f, beta=0.5)
    assert np.isfinite(q)
    # a strictly larger exponent would blow up as the step shrinks
    q_hi = holder_quotient(f, beta=0.9, steps=(0.1, 0.01, 0.001))
    assert q_hi > 5 * q


def test_mollify_polynomial_pointwise():
    # smooth F: F_delta -> F with O(delta^2) error (bump has mean zero)
    p = make_nonlinearity("polynomial", coeffs=[0.0, 1.0, 1.0])  # u + u^2
    errs = []
    for delta in (0.2, 0.1, 0.05):
        m = mollify(p, delta)
        errs.append(abs(m(1.3) - p(1.3)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)


def test_mollify_zero_is_identity():
    f = make_nonlinearity("power_even", beta=0.5)
    m = mollify(f, 0.0)
    u = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(m.deriv(2, u), f.deriv(2, u))


def test_mollify_remainder_bound():
    # |F''(u) - F_delta''(u)| <= C delta^beta (1+|u|)^M with a single fitted C
    beta = 0.5
    f = make_nonlinearity("power_even", beta=beta)
    u = np.linspace(-4, 4, 401)
    m_growth = growth_exponent(f)
    cs = []
    for delta in (0.4, 0.2, 0.1, 0.05):
        md = mollify(f, delta)
        lhs = np.abs(f.deriv(2, u) - md.deriv(2, u))
        cs.append(float(np.max(lhs / (delta**beta * (1 + np.abs(u)) ** m_growth))))
    assert max(cs) / min(cs) < 3.0


def test_mollification_commutes_with_derivative():
    # (F_delta)'' equals (F'')_delta by construction; check against a
    # finite-difference second derivative of the mollified function
    f = make_nonlinearity("power_even", beta=0.5)
    md = mollify(f, 0.3)
    u0, step = 0.7, 1e-4
    fd = (md(u0 + step) - 2 * md(u0) + md(u0 - step)) / step**2
    assert md.deriv(2, u0) == pytest.approx(fd, rel=1e-4)


def test_window_norm_gaussian_decays_fast():
    # a rapidly decaying smooth function: window norms fall faster than any
    # power; check super-polynomial decay over a decade of centers
    gauss = NonlinearitySpec(kind="polynomial", coeffs=(1.0,))

    class GaussSpec(NonlinearitySpec):
        def deriv(self, ell, u):
            u = np.asarray(u, dtype=float)
            assert ell == 0
            return np.exp(-0.5 * u * u)

    gs = GaussSpec(kind="polynomial", coeffs=(1.0,))
    v2 = window_norm(gs, WindowNormQuery(ells=(0,), center=(2,), m_probe=3))
    v8 = window_norm(gs, WindowNormQuery(ells=(0,), center=(8,), m_probe=3))
    assert v8 < v2 * (8.0 / 2.0) ** (-6)


def test_window_norm_monotone_in_probes():
    f = make_nonlinearity("power_even", beta=0.5)
    q3 = WindowNormQuery(ells=(2,), center=(4,), m_probe=4, n_probes=3)
    q6 = WindowNormQuery(ells=(2,), center=(4,), m_probe=4, n_probes=6)
    assert window_norm(f, q6) >= window_norm(f, q3) - 1e-15


@pytest.mark.parametrize("ell", [0, 1, 2])
def test_window_norm_decay_exponent(ell):
    # the class-level bound is (1+|K|)^{-2-beta+ell}; the lower bound must
    # decay at least that fast (the exact power decays faster: |K|^{ell-3-beta})
    beta = 0.5
    f = make_nonlinearity("power_even", beta=beta)
    centers = [4, 8, 16, 32]
    vals = [window_norm(f, WindowNormQuery(ells=(ell,), center=(c,), m_probe=4))
            for c in centers]
    slope = np.polyfit(np.log(centers), np.log(vals), 1)[0]
    assert slope <= -(2 + beta - ell) + 0.2


def test_window_norm_tensor_factorizes():
    f = make_nonlinearity("power_even", beta=0.5)
    q1 = WindowNormQuery(ells=(1,), center=(4,), m_probe=4)
    q2 = WindowNormQuery(ells=(2,), center=(8,), m_probe=4)
    q12 = WindowNormQuery(ells=(1, 2), center=(4, 8), m_probe=4)
    assert window_norm(f, q12) == pytest.approx(
        window_norm(f, q1) * window_norm(f, q2), rel=1e-12)


def test_window_difference_norm_delta_slope():
    beta = 0.5
    f = make_nonlinearity("power_even", beta=beta)
    q = WindowNormQuery(ells=(2,), center=(4,), m_probe=4)
    deltas = [0.4, 0.2, 0.1]
    vals = [window_norm_difference(f, d, q) for d in deltas]
    slope = np.polyfit(np.log(deltas), np.log(vals), 1)[0]
    # difference norms shrink at least like delta^{beta/2 - 0.1}
    assert slope >= beta / 2.0 - 0.1


def test_coupling_constant_quadratic():
    p = make_nonlinearity("polynomial", coeffs=[0.0, 0.0, 1.0])  # u^2, F'' = 2
    for sigma2 in (0.5, 1.0, 2.0):
        assert coupling_constant(p, sigma2, 2) == pytest.approx(1.0)


def test_coupling_constant_cubic():
    p = make_nonlinearity("polynomial", coeffs=[0.0, 0.0, 0.0, 1.0])  # u^3
    assert coupling_constant(p, 1.0, 3) == pytest.approx(1.0)


def test_coupling_constant_power_vs_monte_carlo():
    beta = 0.5
    f = make_nonlinearity("power_even", beta=beta)
    sigma2 = 1.0
    a = coupling_constant(f, sigma2, 2)
    z = rng.substream(3, 4).standard_normal(400_000)
    mc = float(np.mean(f.deriv(2, z))) / 2.0
    se = float(np.std(f.deriv(2, z))) / 2.0 / math.sqrt(len(z))
    assert abs(a - mc) < 4 * se
    # closed form: E|Z|^{1/2} = 2^{1/4} Gamma(3/4) / sqrt(pi)
    exact = 0.5 * 2.5 * 1.5 * (2 ** 0.25 * math.gamma(0.75) / math.sqrt(math.pi))
    assert a == pytest.approx(exact, rel=1e-8)
