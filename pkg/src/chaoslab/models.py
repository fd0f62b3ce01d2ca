"""Finite-scale renormalised model objects for the two target equations.

Fields are built on anisotropic space-time lattices by periodic FFT
convolution of lattice white noise with a truncated heat-kernel stencil:
the spatial-derivative kernel for the interface-growth family (parabolic
scaling (2,1)) and the plain kernel for the phase-coexistence family
(scaling (2,1,1,1)).  The noise mollifier is a product bump, even in every
spatial coordinate, and the stencil variance is exact, so renormalisation
constants can be computed analytically rather than estimated.

First-order objects follow the ladder

    object_j(z) = (j! / (k! a eps^{j/2})) * F^(k-j)(sqrt(eps) field(z)) - c_j

with k the order of the family's nonlinearity (2 or 3); c_0 = 1, odd j need
no constant, and the second-order slot subtracts the Gaussian mean.  For a
polynomial nonlinearity every object collapses to its exact Wick-polynomial
form, which is the strongest oracle in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .experiments import MomentEstimate, moment_norm
from .geometry import Lattice, ScalingGeometry, TestFunction, bump_profile, \
    eval_test_function_many, lattice_from_counts, metric_many
from .kernel import smooth_cutoff
from .nonlinearity import NonlinearitySpec, gaussian_mean, mollify

KPZ_GEOMETRY = ScalingGeometry((2.0, 1.0))
PHI4_GEOMETRY = ScalingGeometry((2.0, 1.0, 1.0, 1.0))

_FAMILY_ORDER = {"kpz": 2, "phi43": 3}


@dataclass(frozen=True)
class ModelFieldSpec:
    """Lattice, mollification scale and truncation for one family's field."""

    family: str
    epsilon: float
    h: float
    counts: tuple[int, ...]
    kernel_cut: float = 0.5

    def __post_init__(self):
        if self.family not in _FAMILY_ORDER:
            raise ValueError("family must be 'kpz' or 'phi43'")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def geometry(self) -> ScalingGeometry:
        return KPZ_GEOMETRY if self.family == "kpz" else PHI4_GEOMETRY

    def lattice(self) -> Lattice:
        return lattice_from_counts(self.geometry, self.h, self.counts)


def heat_kernel(points: np.ndarray, g: ScalingGeometry, derivative: bool) -> np.ndarray:
    """Heat kernel (optionally d/dx of it) at space-time points (t, x...)."""
    points = np.asarray(points, dtype=float)
    t = points[..., 0]
    space = points[..., 1:]
    dsp = space.shape[-1]
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    r2 = np.sum(space[pos] ** 2, axis=-1)
    base = (4.0 * math.pi * tp) ** (-dsp / 2.0) * np.exp(-r2 / (4.0 * tp))
    if derivative:
        base = base * (-space[pos, 0] / (2.0 * tp))
    out[pos] = base
    return out


def _mollifier_grid(lat: Lattice, eps: float) -> np.ndarray:
    """Product-bump mollifier at scale eps on the lattice, discrete mass 1.

    Even in every coordinate by construction (the growth family requires
    spatial symmetry of the mollifier).
    """
    g = lat.geometry
    axes = []
    for si, ax in zip(g.s, lat.axes):
        axes.append(bump_profile(ax / eps**si))
    grid = axes[0]
    for a in axes[1:]:
        grid = np.multiply.outer(grid, a)
    mass = float(np.sum(grid)) * lat.cell_volume
    if mass <= 0:
        raise ValueError("mollifier unresolved at this lattice step")
    return grid / mass


@dataclass(frozen=True)
class ModelField:
    """Stencil and exact variance for one family's synthesized field."""

    spec: ModelFieldSpec
    lattice: Lattice
    stencil_fft: np.ndarray = field(repr=False)
    var_raw: float

    @property
    def sigma2(self) -> float:
        """Exact variance of sqrt(eps) * field (alpha = 1 in both families)."""
        return self.spec.epsilon * self.var_raw


def build_model_field(spec: ModelFieldSpec) -> ModelField:
    lat = spec.lattice()
    g = lat.geometry
    pts = lat.points().reshape(lat.shape + (g.d,))
    kern = heat_kernel(pts, g, derivative=spec.family == "kpz")
    radii = metric_many(pts, g)
    kern = kern * smooth_cutoff(radii, 0.5 * spec.kernel_cut, spec.kernel_cut)
    moll = _mollifier_grid(lat, spec.epsilon)
    # periodic convolution of kernel and mollifier, both centered at index 0
    shifts = [n // 2 for n in lat.shape]
    kern0 = np.roll(kern, [-s for s in shifts], axis=tuple(range(g.d)))
    moll0 = np.roll(moll, [-s for s in shifts], axis=tuple(range(g.d)))
    stencil_fft = np.fft.fftn(kern0) * np.fft.fftn(moll0) * lat.cell_volume
    var_raw = float(np.sum(np.abs(stencil_fft) ** 2)) / stencil_fft.size \
        * lat.cell_volume
    return ModelField(spec=spec, lattice=lat, stencil_fft=stencil_fft,
                      var_raw=var_raw)


def sample_model_field(mf: ModelField, seed: int, index: int) -> np.ndarray:
    """One periodic field draw, shape = lattice.shape; counter-seeded.

    White noise carries density 1/sqrt(cell volume) per cell and the stencil
    sum carries one cell volume, leaving a net sqrt(cell volume).
    """
    lat = mf.lattice
    w = rng.substream(seed, rng.MODEL, index).standard_normal(lat.shape)
    conv = np.real(np.fft.ifftn(np.fft.fftn(w) * mf.stencil_fft))
    return math.sqrt(lat.cell_volume) * conv


# ---------------------------------------------------------------------------
# renormalised first-order objects


@dataclass(frozen=True)
class ModelObjectSpec:
    family: str
    symbol: str  # "0'", "1'", "2'", "3'"
    nonlinearity: NonlinearitySpec
    a: float
    epsilon: float
    renorm: str = "analytic"
    renorm_constant: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILY_ORDER:
            raise ValueError("family must be 'kpz' or 'phi43'")
        j = self.order
        k = _FAMILY_ORDER[self.family]
        if not (0 <= j <= k):
            raise ValueError(f"symbol {self.symbol!r} not available for {self.family}")
        if self.renorm not in ("analytic", "empirical"):
            raise ValueError("renorm must be 'analytic' or 'empirical'")

    @property
    def order(self) -> int:
        if not self.symbol.endswith("'"):
            raise ValueError("symbols are of the form \"j'\"")
        return int(self.symbol[:-1])


def _object_prefactor(spec: ModelObjectSpec) -> float:
    j = spec.order
    k = _FAMILY_ORDER[spec.family]
    return math.factorial(j) / (math.factorial(k) * spec.a
                                * spec.epsilon ** (j / 2.0))


def renorm_constant(spec: ModelObjectSpec, sigma2: float,
                    n_samples: int = 0, mf: ModelField | None = None,
                    seed: int = 0) -> float:
    """Constant c_j making the object mean-zero.

    Analytic mode takes the Gaussian mean at the exact field variance;
    empirical mode averages over dedicated field draws.
    """
    j = spec.order
    k = _FAMILY_ORDER[spec.family]
    if j == 0:
        return 1.0
    if j % 2 == 1:
        return 0.0
    pref = _object_prefactor(spec)
    fl = spec.nonlinearity

    if spec.renorm == "analytic":
        return pref * gaussian_mean(
            lambda u: fl.deriv(k - j, np.asarray(u, dtype=float)), sigma2)
    if mf is None or n_samples < 1:
        raise ValueError("empirical renorm needs a model field and sample count")
    acc = 0.0
    for i in range(n_samples):
        vals = sample_model_field(mf, seed, i)
        x = math.sqrt(spec.epsilon) * vals
        acc += float(np.mean(fl.deriv(k - j, x)))
    return pref * acc / n_samples


def attach_renorm(spec: ModelObjectSpec, mf: ModelField, n_samples: int = 200,
                  seed: int = 0) -> ModelObjectSpec:
    c = renorm_constant(spec, mf.sigma2, n_samples=n_samples, mf=mf, seed=seed)
    return replace(spec, renorm_constant=c)


def eval_object_field(spec: ModelObjectSpec, mf: ModelField,
                      values: np.ndarray) -> np.ndarray:
    """Renormalised object on the whole lattice for one field draw."""
    j = spec.order
    k = _FAMILY_ORDER[spec.family]
    x = math.sqrt(spec.epsilon) * values
    out = _object_prefactor(spec) * spec.nonlinearity.deriv(k - j, x)
    if j == 3:
        # top object subtracts 3 * second-slot constant * field
        c2 = renorm_constant(replace(spec, symbol="2'"), mf.sigma2)
        return out - 3.0 * c2 * values
    c = spec.renorm_constant
    if c is None:
        c = renorm_constant(spec, mf.sigma2)
    return out - c


def eval_object(spec: ModelObjectSpec, mf: ModelField, values: np.ndarray,
                z) -> float:
    """Pointwise value at the lattice site nearest to z."""
    lat = mf.lattice
    idx = []
    z = np.atleast_1d(np.asarray(z, dtype=float))
    for ax, zi in zip(lat.axes, z):
        idx.append(int(np.argmin(np.abs(ax - zi))))
    return float(eval_object_field(spec, mf, values)[tuple(idx)])


# ---------------------------------------------------------------------------
# negative Holder norms


@dataclass
class HolderNormEstimate:
    alpha: float
    value: float
    levels: list[float]
    per_level: list[float]


def holder_norm(values: np.ndarray, lat: Lattice, alpha: float,
                lambda_levels: int = 4, lam0: float = 0.5) -> HolderNormEstimate:
    """Single-probe lower bound of the negative Holder norm.

    Max over dyadic scales and all lattice centers of
    lam^{-alpha} |<f, bump_lam_z>|, with the pairing done by periodic FFT
    correlation (the synthesized fields are periodic).  Refining the grid of
    scales or centers never lowers the estimate.
    """
    if alpha >= 0:
        raise ValueError("this norm is for negative regularity exponents")
    g = lat.geometry
    per_level = []
    levels = []
    best = 0.0
    for k in range(lambda_levels):
        lam = lam0 * 2.0 ** (-k)
        if lam < 2 * lat.base_step:
            break
        tf = TestFunction(geometry=g, scale=lam)
        pts = lat.points().reshape(lat.shape + (g.d,))
        probe = eval_test_function_many(tf, pts)
        shifts = [n // 2 for n in lat.shape]
        probe0 = np.roll(probe, [-s for s in shifts], axis=tuple(range(g.d)))
        pair = np.real(np.fft.ifftn(np.fft.fftn(values)
                                    * np.conj(np.fft.fftn(probe0)))) \
            * lat.cell_volume
        level_val = float(np.max(np.abs(pair)) * lam ** (-alpha))
        levels.append(lam)
        per_level.append(level_val)
        best = max(best, level_val)
    return HolderNormEstimate(alpha=alpha, value=best, levels=levels,
                              per_level=per_level)


# ---------------------------------------------------------------------------
# two-frequency remainder pairings and the mollification gap


def _truncated_inner(spec: ModelObjectSpec, mf: ModelField,
                     values: np.ndarray) -> np.ndarray:
    """The kernel-side factor of the two-frequency object.

    Growth family: the nonlinearity with its mean removed (first truncation).
    Phase family: the full top object (3') including its linear subtraction.
    """
    x = math.sqrt(spec.epsilon) * values
    fl = spec.nonlinearity
    if spec.family == "kpz":
        mean = gaussian_mean(lambda u: fl.deriv(0, np.asarray(u, dtype=float)),
                             mf.sigma2)
        return fl.deriv(0, x) - mean
    top = replace(spec, symbol="3'")
    return eval_object_field(top, mf, values)


def _outer_factor(spec: ModelObjectSpec, mf: ModelField,
                  values: np.ndarray) -> np.ndarray:
    x = math.sqrt(spec.epsilon) * values
    fl = spec.nonlinearity
    if spec.family == "kpz":
        return fl.deriv(1, x)
    two = replace(spec, symbol="2'")
    return eval_object_field(two, mf, values)


def _pairing_kernel_fft(mf: ModelField) -> tuple[np.ndarray, np.ndarray]:
    """FFT of the truncated singular kernel on the lattice plus the Taylor row.

    The kernel is the family's heat-kernel profile with the singular cell at
    the origin dropped; r_e = 1, so the Taylor part subtracts the x = 0 row,
    which for the lattice sum is one inner product per sample.
    """
    lat = mf.lattice
    g = lat.geometry
    pts = lat.points().reshape(lat.shape + (g.d,))
    kern = heat_kernel(pts, g, derivative=mf.spec.family == "kpz")
    radii = metric_many(pts, g)
    kern = kern * smooth_cutoff(radii, 0.5 * mf.spec.kernel_cut, mf.spec.kernel_cut)
    shifts = [n // 2 for n in lat.shape]
    kern0 = np.roll(kern, [-s for s in shifts], axis=tuple(range(g.d)))
    kern0[(0,) * g.d] = 0.0  # diagonal exclusion
    return np.fft.fftn(kern0), kern0


def _two_freq_object(spec: ModelObjectSpec, mf: ModelField, values: np.ndarray,
                     kern_fft: np.ndarray, taylor_row: np.ndarray,
                     prefactor: float) -> np.ndarray:
    inner = _truncated_inner(spec, mf, values)
    conv = np.real(np.fft.ifftn(np.fft.fftn(inner) * kern_fft)) * mf.lattice.cell_volume
    # Taylor (r_e = 1) part: subtract the constant row integral K0(-y) inner(y)
    g = mf.lattice.geometry
    axes = tuple(range(g.d))
    flipped = np.flip(taylor_row, axis=axes)
    flipped = np.roll(flipped, 1, axis=axes)  # align -y on the periodic grid
    const = float(np.sum(flipped * inner)) * mf.lattice.cell_volume
    outer = _outer_factor(spec, mf, values)
    return prefactor * outer * (conv - const)


def remainder_pairing(family: str, nonlin: NonlinearitySpec, a: float,
                      mfspec: ModelFieldSpec, delta: float, lam: float,
                      n: int, n_samples: int, seed: int = 0) -> MomentEstimate:
    """Moment norm of the pairing of (object - mollified object) with a bump.

    Both objects are evaluated directly from the nonlinearity; the mollified
    version replaces it by its bump convolution at scale delta everywhere,
    including the renormalisation constants.  delta = 0 gives exactly zero.
    """
    if mfspec.epsilon < 2 * mfspec.h:
        raise ValueError("resolution guard: eps >= 2h required")
    mf = build_model_field(mfspec)
    lat = mf.lattice
    g = lat.geometry
    spec = ModelObjectSpec(family=family, symbol="2'", nonlinearity=nonlin,
                           a=a, epsilon=mfspec.epsilon)
    spec_d = replace(spec, nonlinearity=mollify(nonlin, delta))
    kern_fft, taylor_row = _pairing_kernel_fft(mf)
    if family == "kpz":
        pref = 1.0 / (2.0 * a**2 * mfspec.epsilon ** 1.5)
    else:
        pref = 1.0
    tf = TestFunction(geometry=g, scale=lam)
    pts = lat.points().reshape(lat.shape + (g.d,))
    phi = eval_test_function_many(tf, pts)
    out = np.empty(n_samples)
    for i in range(n_samples):
        vals = sample_model_field(mf, seed, i)
        tau = _two_freq_object(spec, mf, vals, kern_fft, taylor_row, pref)
        tau_d = _two_freq_object(spec_d, mf, vals, kern_fft, taylor_row, pref)
        out[i] = float(np.sum(phi * (tau - tau_d)) * lat.cell_volume)
    return moment_norm(out, n, seed=seed, tag=11)


def mollification_gap(nonlin: NonlinearitySpec, a: float, mfspec: ModelFieldSpec,
                      delta: float, lam: float, n: int, n_samples: int,
                      seed: int = 0) -> MomentEstimate:
    """Moment norm of the single-frequency mollification gap pairing.

    Growth family only: the first-derivative object with F' versus its
    delta-mollified version, paired against the bump at scale lam.
    """
    if mfspec.family != "kpz":
        raise ValueError("the mollification-gap experiment is for the growth family")
    if mfspec.epsilon < 2 * mfspec.h:
        raise ValueError("resolution guard: eps >= 2h required")
    mf = build_model_field(mfspec)
    lat = mf.lattice
    g = lat.geometry
    moll = mollify(nonlin, delta)
    pref = 1.0 / (2.0 * a * math.sqrt(mfspec.epsilon))
    tf = TestFunction(geometry=g, scale=lam)
    pts = lat.points().reshape(lat.shape + (g.d,))
    phi = eval_test_function_many(tf, pts)
    out = np.empty(n_samples)
    for i in range(n_samples):
        vals = sample_model_field(mf, seed, i)
        x = math.sqrt(mfspec.epsilon) * vals
        diff = nonlin.deriv(1, x) - moll.deriv(1, x)
        out[i] = float(np.sum(phi * pref * diff) * lat.cell_volume)
    return moment_norm(out, n, seed=seed, tag=12)
