"""Moment-norm estimation and the sweep experiments behind the main bound.

The headline quantities are 2n-th root moment norms of operator values over
many field draws.  Estimates carry percentile-bootstrap confidence intervals
(2n-th powers of near-Gaussian functionals are heavy-tailed at moderate
sample counts, so asymptotic-normal intervals are avoided).  Sweeps report
single-constant domination against the target power laws and fitted slopes;
the underlying bound is one-sided, so slope checks are lower bounds, never
equalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .chaos import ChaosTruncSpec, TwoPointFunctional
from .field import CovarianceSpec, Spectrum, build_spectrum, sample_field_values
from .geometry import Lattice, ScalingGeometry, TestFunction, build_lattice, \
    eval_test_function_many, metric_many
from .kernel import RenormKernel, compute_re, eval_K_many
from .operator import OperatorConfig, apply_batch

BOOTSTRAP_RESAMPLES = 500


class QuadratureRefinementNeeded(RuntimeError):
    """Two-grid disagreement exceeded the tolerance; refine the step."""


@dataclass
class MomentEstimate:
    n: int
    value: float
    ci: tuple[float, float]
    n_samples: int

    def to_json(self) -> dict:
        return {"n": self.n, "value": self.value, "ci": list(self.ci),
                "n_samples": self.n_samples}


def moment_norm(values, n: int, seed: int = 0, tag: int = 0) -> MomentEstimate:
    """Plug-in estimate of (E |V|^{2n})^{1/(2n)} with a bootstrap interval.

    Resample seeds derive from (seed, tag), so repeated runs and parallel
    schedules reproduce the same interval.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if n < 1:
        raise ValueError("half-order n must be >= 1")
    m = len(values)
    if m == 0:
        raise ValueError("empty sample")
    powers = np.abs(values) ** (2 * n)
    point = float(np.mean(powers) ** (1.0 / (2 * n)))
    if np.all(values == 0.0):
        return MomentEstimate(n=n, value=0.0, ci=(0.0, 0.0), n_samples=m)
    gen = rng.substream(seed, rng.BOOTSTRAP, tag)
    boot = np.empty(BOOTSTRAP_RESAMPLES)
    for b in range(BOOTSTRAP_RESAMPLES):
        pick = gen.integers(0, m, size=m)
        boot[b] = np.mean(powers[pick]) ** (1.0 / (2 * n))
    lo, hi = np.percentile(boot, [2.5, 97.5])
    lo = min(lo, point)
    hi = max(hi, point)
    return MomentEstimate(n=n, value=point, ci=(float(lo), float(hi)), n_samples=m)


@dataclass(frozen=True)
class StudyDesign:
    """Static ingredients of one operator study (everything but eps/lam/theta)."""

    alpha: float
    m1: int
    m2: int
    trig1: str
    trig2: str
    gamma: float
    s: tuple[float, ...] = (1.0,)
    h: float = 0.025
    extent: float = 4.0
    re_override: int | None = None
    cutoff: float = 1.0
    deriv: tuple[int, int] = (0, 0)
    diagonal_policy: int = 1
    y_radius: float = 2.0
    lambda_budget: float = 2.0

    @property
    def geometry(self) -> ScalingGeometry:
        return ScalingGeometry(self.s)

    @property
    def r_e(self) -> int:
        if self.re_override is not None:
            return self.re_override
        return compute_re(self.gamma, self.alpha, self.m2)

    def lattice(self) -> Lattice:
        return build_lattice(self.geometry, self.h, self.extent)

    def kernel(self) -> RenormKernel:
        return RenormKernel(gamma=self.gamma, g=self.geometry, r_e=self.r_e,
                            cutoff=self.cutoff)

    def functional(self, theta: tuple[float, float]) -> TwoPointFunctional:
        return TwoPointFunctional(
            ChaosTruncSpec(self.trig1, self.m1),
            ChaosTruncSpec(self.trig2, self.m2),
            (float(theta[0]), float(theta[1])), self.deriv)

    def spectrum(self, eps: float, lattice: Lattice) -> Spectrum:
        return build_spectrum(
            CovarianceSpec(alpha=self.alpha, epsilon=eps,
                           lambda_const=self.lambda_budget), lattice)

    def operator_config(self, lam: float, theta, kernel=None,
                        lattice=None) -> OperatorConfig:
        lat = lattice if lattice is not None else self.lattice()
        kern = kernel if kernel is not None else self.kernel()
        test = TestFunction(geometry=self.geometry, scale=lam)
        return OperatorConfig(kernel=kern, test=test,
                              functional=self.functional(theta), lattice=lat,
                              diagonal_policy=self.diagonal_policy,
                              y_radius=self.y_radius)


@dataclass
class FreqRow:
    theta: tuple[float, float]
    estimate: MomentEstimate


@dataclass
class FreqSweepResult:
    eps: float
    lam: float
    rows: list[FreqRow]
    max_min_ratio: float


SAMPLE_CHUNK = 256


def _chunk_values(args):
    """Operator values for one fixed sample-index chunk, all (lam, theta) cells.

    Top-level so process pools can pickle it.  The chunk boundaries are fixed
    by SAMPLE_CHUNK, never by the worker count, and every sample's noise comes
    from its own counter substream, so any pool size reproduces identical
    numbers.
    """
    design, eps, cells, lo, hi, seed = args
    lat = design.lattice()
    spec = design.spectrum(eps, lat)
    kern = design.kernel()
    values = sample_field_values(spec, seed, np.arange(lo, hi))
    out = {}
    for lam, theta in cells:
        cfg = design.operator_config(lam, theta, kernel=kern, lattice=lat)
        out[(lam, theta)] = apply_batch(cfg, values, spec.sigma2, design.alpha, eps)
    return lo, out


def _run_cells(design: StudyDesign, eps: float, cells, n_samples: int,
               seed: int, workers: int) -> dict:
    tasks = [(design, eps, tuple(cells), lo, min(lo + SAMPLE_CHUNK, n_samples), seed)
             for lo in range(0, n_samples, SAMPLE_CHUNK)]
    results = {}
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_values, tasks))
    else:
        chunks = [_chunk_values(t) for t in tasks]
    chunks.sort(key=lambda c: c[0])
    for cell in cells:
        results[cell] = np.concatenate([c[1][cell] for c in chunks])
    return results


def freq_sweep(design: StudyDesign, eps: float, lam: float, theta_grid,
               n: int, n_samples: int, seed: int = 0,
               workers: int = 1) -> FreqSweepResult:
    """Moment-norm estimates across a frequency grid on shared field draws.

    Sharing the draws across frequencies removes sampling noise from the
    headline max/min ratio, which is the experiment's statistic.
    """
    cells = [(float(lam), (float(t[0]), float(t[1]))) for t in theta_grid]
    values = _run_cells(design, eps, cells, n_samples, seed, workers)
    rows = []
    for tag, cell in enumerate(cells):
        rows.append(FreqRow(theta=cell[1],
                            estimate=moment_norm(values[cell], n, seed=seed,
                                                 tag=tag)))
    vals = [r.estimate.value for r in rows if r.estimate.value > 0]
    ratio = max(vals) / min(vals) if vals else math.inf
    return FreqSweepResult(eps=eps, lam=lam, rows=rows, max_min_ratio=float(ratio))


@dataclass
class ScalingRow:
    eps: float
    lam: float
    estimate: MomentEstimate
    excluded: bool


@dataclass
class ScalingReport:
    rows: list[ScalingRow]
    eps_slope: float
    eps_slope_se: float
    lam_slope: float
    lam_slope_se: float
    bound_constant: float
    target_eps_exponent: float
    target_lam_exponent: float
    eta: float


def scaling_scan(design: StudyDesign, theta, eps_grid, lambda_grid, n: int,
                 n_samples: int, seed: int = 0, eta: float = 0.1,
                 workers: int = 1) -> ScalingReport:
    """Log-log scan of the moment norm over a geometric (eps, lam) grid.

    Grid points whose bootstrap interval reaches zero are flagged and left
    out of the slope fit.  The bound constant is the largest ratio of the
    estimate to eps^(a-eta) * lam^(b-eta) with a, b the target exponents.
    """
    a_t = design.alpha * (design.m1 + design.m2) / 2.0
    b_t = design.gamma - a_t
    theta = (float(theta[0]), float(theta[1]))
    rows: list[ScalingRow] = []
    tag = 0
    for eps in eps_grid:
        if eps < 2 * design.h:
            raise ValueError(f"eps {eps} below resolution 2h = {2 * design.h}")
        cells = [(float(lam), theta) for lam in lambda_grid]
        values = _run_cells(design, float(eps), cells, n_samples, seed, workers)
        for cell in cells:
            est = moment_norm(values[cell], n, seed=seed, tag=tag)
            tag += 1
            rows.append(ScalingRow(eps=float(eps), lam=cell[0], estimate=est,
                                   excluded=est.ci[0] <= 0.0))
    fit_rows = [r for r in rows if not r.excluded and r.estimate.value > 0]
    if len(fit_rows) >= 3:
        x = np.array([[math.log(r.eps), math.log(r.lam), 1.0] for r in fit_rows])
        y = np.array([math.log(r.estimate.value) for r in fit_rows])
        coef, res, *_ = np.linalg.lstsq(x, y, rcond=None)
        dof = max(len(fit_rows) - 3, 1)
        sigma2 = float(res[0]) / dof if len(res) else 0.0
        covm = sigma2 * np.linalg.inv(x.T @ x)
        eps_slope, lam_slope = float(coef[0]), float(coef[1])
        eps_se, lam_se = float(np.sqrt(covm[0, 0])), float(np.sqrt(covm[1, 1]))
    else:
        eps_slope = lam_slope = eps_se = lam_se = math.nan
    c = 0.0
    for r in rows:
        bound = r.eps ** (a_t - eta) * r.lam ** (b_t - eta)
        c = max(c, r.estimate.value / bound)
    return ScalingReport(rows=rows, eps_slope=eps_slope, eps_slope_se=eps_se,
                         lam_slope=lam_slope, lam_slope_se=lam_se,
                         bound_constant=float(c), target_eps_exponent=a_t,
                         target_lam_exponent=b_t, eta=eta)


# ---------------------------------------------------------------------------
# deterministic second-moment functionals


def _grid_1d(step: float, radius: float) -> np.ndarray:
    m = int(math.floor(radius / step + 1e-12))
    return (np.arange(-m, m + 1) * step).reshape(-1, 1)


def _g_value(x, kern: RenormKernel, m2: int, cov: CovarianceSpec, h: float,
             y_radius: float, policy: int) -> float:
    g = kern.g
    if g.d != 1:
        raise NotImplementedError("deterministic quadrature is implemented for d = 1")
    ys = _grid_1d(h, y_radius)
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    kv = eval_K_many(x_arr, ys, kern)[0]
    dist = metric_many(ys - x_arr[0][None, :], g)
    kv[dist < policy * h] = 0.0
    kv[~np.isfinite(kv)] = 0.0
    v = np.abs(kv) * h ** g.total
    lags = np.abs(ys[:, None, 0] - ys[None, :, 0])
    rho = (cov.epsilon / (lags + cov.epsilon)) ** cov.alpha
    val2 = math.factorial(m2) * float(v @ (rho ** m2) @ v)
    return math.sqrt(max(val2, 0.0))


def second_moment_G(x, kern: RenormKernel, m2: int, cov: CovarianceSpec,
                    h: float = 0.01, y_radius: float = 2.0, policy: int = 1,
                    check_tol: float = 0.10) -> float:
    """L2 norm of the |K|-smeared Wick power of the y-variable at basepoint x.

    Deterministic double quadrature of m2! * |K||K| rho^{m2} on the target
    covariance, square-rooted; a two-grid disagreement above ``check_tol``
    raises rather than returning an uncertified value.
    """
    coarse = _g_value(x, kern, m2, cov, h, y_radius, policy)
    fine = _g_value(x, kern, m2, cov, h / 2.0, y_radius, policy)
    if fine > 0 and abs(coarse - fine) / fine > check_tol:
        raise QuadratureRefinementNeeded(
            f"two-grid disagreement {abs(coarse - fine) / fine:.2%} at h = {h}")
    return fine


def _h_value(y, kern: RenormKernel, test: TestFunction, m1: int,
             cov: CovarianceSpec, h: float, policy: int) -> float:
    g = kern.g
    if g.d != 1:
        raise NotImplementedError("deterministic quadrature is implemented for d = 1")
    xs = _grid_1d(h, test.scale)
    xs = xs + np.asarray(test.center)[None, :]
    phi = eval_test_function_many(test, xs)
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    kv = eval_K_many(xs, y_arr, kern)[:, 0]
    dist = metric_many(xs - y_arr[0][None, :], g)
    kv[dist < policy * h] = 0.0
    kv[~np.isfinite(kv)] = 0.0
    v = np.abs(kv) * np.abs(phi) * h ** g.total
    lags = np.abs(xs[:, None, 0] - xs[None, :, 0])
    rho = (cov.epsilon / (lags + cov.epsilon)) ** cov.alpha
    val2 = math.factorial(m1) * float(v @ (rho ** m1) @ v)
    return math.sqrt(max(val2, 0.0))


def second_moment_H(y, kern: RenormKernel, test: TestFunction, m1: int,
                    cov: CovarianceSpec, h: float = 0.005, policy: int = 1,
                    check_tol: float = 0.10) -> float:
    """L2 norm of the |K phi|-smeared Wick power of the x-variable at point y."""
    coarse = _h_value(y, kern, test, m1, cov, h, policy)
    fine = _h_value(y, kern, test, m1, cov, h / 2.0, policy)
    if fine > 0 and abs(coarse - fine) / fine > check_tol:
        raise QuadratureRefinementNeeded(
            f"two-grid disagreement {abs(coarse - fine) / fine:.2%} at h = {h}")
    return fine


# ---------------------------------------------------------------------------
# restricted-volume integrals


@dataclass
class VolumeLemmaRow:
    eps: float
    lam: float
    integral_far: float
    bound_far: float
    integral_near: float | None
    bound_near: float | None


@dataclass
class VolumeLemmaReport:
    rows: list[VolumeLemmaRow]
    max_ratio_far: float
    max_ratio_near: float | None
    r_e: int


def volume_lemma_check(n: int, kern: RenormKernel, eps_grid, lambda_grid,
                       alpha: float, m2: int, n_mc: int = 200_000,
                       eta: float = 0.1, L: float = 1.0, y_radius: float = 2.0,
                       seed: int = 0) -> VolumeLemmaReport:
    """Monte Carlo check of the two restricted-volume integrals.

    The far integral (|y_i| >= 2 lam, exponent |s|-gamma+r_e) is sampled
    uniformly; the near one (|y_i| <= 2 lam, exponent |s|-gamma+r_e-1, only
    for r_e >= 1) importance-samples each coordinate from its own integrand,
    which makes the weight constant and the estimator an indicator mean.
    Bounds: lam^{2n(gamma-r_e-eta)} (eps/lam)^{n alpha m2} for the far part
    and (eps ^ lam)^{2n(gamma-r_e+1-eta)} for the near part.
    """
    g = kern.g
    if g.d != 1:
        raise NotImplementedError("volume lemma sampling is implemented for d = 1")
    if 2 * n > 4:
        raise ValueError("volume lemma budget is 2n <= 4")
    q_far = g.total - kern.gamma + kern.r_e
    q_near = g.total - kern.gamma + kern.r_e - 1
    rows: list[VolumeLemmaRow] = []
    tag = 0
    for eps in eps_grid:
        for lam in lambda_grid:
            scale = L * eps
            gen = rng.substream(seed, rng.POINTS, 5, tag)
            tag += 1
            k = 2 * n
            # far part: uniform proposal on the full y-box
            batch = n_mc
            ys = gen.uniform(-y_radius, y_radius, size=(batch, k))
            dist = np.abs(ys[:, :, None] - ys[:, None, :])
            idx = np.arange(k)
            dist[:, idx, idx] = np.inf
            no_singleton = ~np.any(np.min(dist, axis=2) > scale, axis=1)
            w = np.where(np.all(np.abs(ys) >= 2 * lam, axis=1),
                         np.prod(np.abs(ys) ** (-q_far), axis=1), 0.0)
            i_far = float(np.mean(w * no_singleton) * (2 * y_radius) ** k)
            b_far = lam ** (2 * n * (kern.gamma - kern.r_e - eta)) * \
                (eps / lam) ** (n * alpha * m2)
            i_near = b_near = None
            if kern.r_e >= 1:
                # near part: per-coordinate density proportional to |y|^{-q_near}
                u = gen.random(size=(batch, k))
                r = (2 * lam) * u ** (1.0 / (1.0 - q_near))
                sign = np.where(gen.random(size=(batch, k)) < 0.5, -1.0, 1.0)
                yn = sign * r
                z1 = 2.0 * (2 * lam) ** (1.0 - q_near) / (1.0 - q_near)
                dn = np.abs(yn[:, :, None] - yn[:, None, :])
                dn[:, idx, idx] = np.inf
                hit = ~np.any(np.min(dn, axis=2) > scale, axis=1)
                i_near = float(np.mean(hit) * z1 ** k)
                b_near = min(eps, lam) ** (2 * n * (kern.gamma - kern.r_e + 1 - eta))
            rows.append(VolumeLemmaRow(eps=float(eps), lam=float(lam),
                                       integral_far=i_far, bound_far=float(b_far),
                                       integral_near=i_near, bound_near=b_near))
    ratios_far = [r.integral_far / r.bound_far for r in rows]
    ratios_near = [r.integral_near / r.bound_near for r in rows
                   if r.integral_near is not None]
    return VolumeLemmaReport(rows=rows, max_ratio_far=float(max(ratios_far)),
                             max_ratio_near=(float(max(ratios_near))
                                             if ratios_near else None),
                             r_e=kern.r_e)
