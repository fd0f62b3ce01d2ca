import math

import numpy as np
import pytest

from chaoslab import rng
from chaoslab.experiments import (
    MomentEstimate,
    QuadratureRefinementNeeded,
    StudyDesign,
    freq_sweep,
    moment_norm,
    scaling_scan,
    second_moment_G,
    second_moment_H,
    volume_lemma_check,
)
from chaoslab.field import CovarianceSpec
from chaoslab.geometry import ScalingGeometry, TestFunction
from chaoslab.kernel import RenormKernel

G1 = ScalingGeometry((1.0,))

DESIGN = StudyDesign(alpha=0.6, m1=1, m2=1, trig1="sin", trig2="sin",
                     gamma=0.4, h=0.05, extent=2.0)


def test_moment_norm_constant():
    for n in (1, 2, 3):
        est = moment_norm(np.full(300, -2.5), n)
        assert est.value == pytest.approx(2.5)
        assert est.ci[0] == pytest.approx(2.5) and est.ci[1] == pytest.approx(2.5)


def test_moment_norm_zero():
    est = moment_norm(np.zeros(300), 2)
    assert est.value == 0.0
    assert est.ci == (0.0, 0.0)


def test_moment_norm_gaussian():
    z = rng.substream(5, 1).standard_normal(60_000)
    est2 = moment_norm(z, 1, seed=5)
    assert est2.ci[0] <= 1.0 <= est2.ci[1]
    est4 = moment_norm(z, 2, seed=5)
    assert est4.ci[0] <= 3.0 ** 0.25 <= est4.ci[1]
    assert est4.value == pytest.approx(3.0 ** 0.25, rel=0.02)


def test_moment_norm_matches_exact_second_moment():
    # chaos polynomial V = Z^2 - 1: exact E V^2 = 2 via contraction moments
    from chaoslab.isserlis import wick_moment
    z = rng.substream(7, 2).standard_normal(50_000)
    v = z**2 - 1.0
    est = moment_norm(v, 1, seed=7)
    exact = math.sqrt(wick_moment((2, 2), np.eye(2) + np.array([[0, 1], [1, 0]]) * 1.0))
    assert est.ci[0] <= exact <= est.ci[1]


def test_moment_norm_deterministic():
    z = rng.substream(9, 3).standard_normal(500)
    a = moment_norm(z, 2, seed=42, tag=3)
    b = moment_norm(z, 2, seed=42, tag=3)
    assert a == b


def test_freq_sweep_zero_theta_row():
    res = freq_sweep(DESIGN, eps=0.2, lam=0.4,
                     theta_grid=[(0.0, 0.0), (1.0, 1.0)], n=1, n_samples=300,
                     seed=1)
    assert res.rows[0].estimate.value == 0.0
    assert res.rows[1].estimate.value > 0.0
    assert math.isfinite(res.max_min_ratio)


def test_scaling_scan_smoke():
    rep = scaling_scan(DESIGN, theta=(1.0, 1.0), eps_grid=[0.4, 0.2],
                       lambda_grid=[0.8, 0.4], n=1, n_samples=400, seed=2)
    assert len(rep.rows) == 4
    assert math.isfinite(rep.bound_constant)
    assert rep.target_eps_exponent == pytest.approx(0.6)
    assert rep.target_lam_exponent == pytest.approx(-0.2)
    assert math.isfinite(rep.eps_slope)


def test_scaling_scan_resolution_guard():
    with pytest.raises(ValueError):
        scaling_scan(DESIGN, theta=(1.0, 1.0), eps_grid=[0.05],
                     lambda_grid=[0.4], n=1, n_samples=300)


def test_second_moment_g_zero_kernel():
    kern = RenormKernel(gamma=0.4, g=G1, r_e=0,
                        k0_fn=lambda p: np.zeros(p.shape[:-1]))
    cov = CovarianceSpec(alpha=0.6, epsilon=0.1)
    assert second_moment_G((0.1,), kern, 1, cov, h=0.02) == 0.0


def test_second_moment_g_positive_and_certified():
    kern = RenormKernel(gamma=0.4, g=G1, r_e=0)
    cov = CovarianceSpec(alpha=0.6, epsilon=0.1)
    val = second_moment_G((0.1,), kern, 1, cov, h=0.02)
    assert val > 0.0


def test_second_moment_h_zero_test():
    kern = RenormKernel(gamma=0.4, g=G1, r_e=1)
    cov = CovarianceSpec(alpha=0.6, epsilon=0.1)
    tf = TestFunction(geometry=G1, scale=0.3, profile=lambda r: np.zeros_like(r))
    assert second_moment_H((0.8,), kern, tf, 1, cov, h=0.01) == 0.0


def test_second_moment_h_positive():
    kern = RenormKernel(gamma=0.4, g=G1, r_e=1)
    cov = CovarianceSpec(alpha=0.6, epsilon=0.1)
    tf = TestFunction(geometry=G1, scale=0.3)
    assert second_moment_H((0.8,), kern, tf, 1, cov, h=0.01) > 0.0


def test_volume_lemma_far_unrestricted_when_clustered():
    # eps >= 4*lam and L*eps above the box diameter: every configuration is
    # clustered, so the far integral equals the unrestricted product integral
    kern = RenormKernel(gamma=0.4, g=G1, r_e=0)
    n, lam, eps, q = 1, 0.05, 0.45, 1.0 - 0.4
    rep = volume_lemma_check(n, kern, [eps], [lam], alpha=0.6, m2=1,
                             n_mc=400_000, L=10.0, seed=3)
    row = rep.rows[0]
    one_dim = 2 * (2.0 ** (1 - q) - (2 * lam) ** (1 - q)) / (1 - q)
    assert row.integral_far == pytest.approx(one_dim ** (2 * n), rel=0.05)
    assert row.integral_near is None  # r_e = 0 skips the near lemma


def test_volume_lemma_near_part_present_for_re1():
    kern = RenormKernel(gamma=0.4, g=G1, r_e=1)
    rep = volume_lemma_check(1, kern, [0.1], [0.2], alpha=0.6, m2=1,
                             n_mc=100_000, seed=4)
    row = rep.rows[0]
    assert row.integral_near is not None and row.integral_near >= 0.0
    assert rep.max_ratio_near is not None
