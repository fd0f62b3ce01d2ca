"""Independent numerical oracles shared by the test suite.

Nothing here reuses the package's analytic formulas: expectations come from
quadrature, joint moments from explicit pairing enumeration, and derivatives
from finite differences.
"""

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermitenorm


def _orthonormal_hermite(x, order):
    """Orthonormal probabilists' Hermite values p_order, p_{order-1}, sum_{k<order} p_k^2."""
    norm = np.longdouble(1.0) / np.sqrt(np.sqrt(np.longdouble(2.0) * np.pi))
    pkm1 = np.ones_like(x) * norm
    pk = x * norm
    s = pkm1**2
    for k in range(1, order):
        s = s + pk**2
        pkp1 = (x * pk - np.sqrt(np.longdouble(k)) * pkm1) / np.sqrt(np.longdouble(k + 1))
        pkm1, pk = pk, pkp1
    return pk, pkm1, s


@lru_cache(maxsize=8)
def gh_rule(order: int):
    """Gauss-Hermite rule for weight exp(-x^2/2), refined in extended precision.

    Double-precision nodes limit the rule to ~1e-14 absolute accuracy on
    oscillatory integrands; three Newton corrections in longdouble push the
    floor to ~1e-18, which the chaos-coefficient identity needs after its
    theta**n/n! amplification.
    """
    x = roots_hermitenorm(order)[0].astype(np.longdouble)
    for _ in range(3):
        pn, pn1, _ = _orthonormal_hermite(x, order)
        x = x - pn / (np.sqrt(np.longdouble(order)) * pn1)
    _, _, s = _orthonormal_hermite(x, order)
    w = 1.0 / s
    return x, w / np.sum(w)


def gauss_expect(f, order: int = 400) -> float:
    """E f(Z) for standard normal Z by the extended-precision rule."""
    x, w = gh_rule(order)
    return float(np.sum(w * f(x)))


def isserlis_monomial_moment(powers, cov) -> float:
    """E prod_i Z_i^{q_i} by full pairing enumeration (self-pairs allowed)."""
    legs = []
    for i, q in enumerate(powers):
        legs.extend([i] * q)
    if len(legs) % 2 == 1:
        return 0.0

    def pairings(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for i in range(len(rest)):
            for tail in pairings(rest[:i] + rest[i + 1:]):
                yield [(first, rest[i])] + tail

    cov = np.asarray(cov, dtype=float)
    total = []
    for p in pairings(legs):
        prod = 1.0
        for a, b in p:
            prod *= cov[a, b]
        total.append(prod)
    return math.fsum(total)


def hermite_monomial_coeffs(k: int, sigma2: float):
    """Coefficients c_j with Z^{<>k} = sum_j c_j Z^j for Var Z = sigma2."""
    sigma = math.sqrt(sigma2)
    herm = np.polynomial.hermite_e.herme2poly([0.0] * k + [1.0])
    return [float(h) * sigma ** (k - j) for j, h in enumerate(herm)]


def brute_wick_moment(degrees, cov) -> float:
    """E prod Z_i^{<>n_i} by expanding every Wick power into plain monomials.

    Fully independent of the contraction-matrix route: uses Hermite
    coefficient expansion plus plain Isserlis with self-pairings.
    """
    cov = np.asarray(cov, dtype=float)
    per_var = [
        [(j, c) for j, c in enumerate(hermite_monomial_coeffs(n, cov[i, i])) if c != 0.0]
        for i, n in enumerate(degrees)
    ]
    total = []
    for combo in itertools.product(*per_var):
        coeff = 1.0
        powers = []
        for j, c in combo:
            coeff *= c
            powers.append(j)
        total.append(coeff * isserlis_monomial_moment(powers, cov))
    return math.fsum(total)


@lru_cache(maxsize=4096)
def matching_contributions(degrees: tuple) -> tuple:
    """All no-self-loop perfect matchings for a degree vector, as index pairs.

    Cached per degree vector so that sweeping many covariances stays cheap.
    Returns a tuple of matchings; each matching is a tuple of (i, j) pairs of
    variable indices.
    """
    legs = []
    for i, q in enumerate(degrees):
        legs.extend([i] * q)
    out = []

    def rec(items, acc):
        if not items:
            out.append(tuple(acc))
            return
        first, rest = items[0], items[1:]
        for i in range(len(rest)):
            if rest[i] == first:
                continue  # Wick powers forbid self-contractions
            acc.append((first, rest[i]))
            rec(rest[:i] + rest[i + 1:], acc)
            acc.pop()

    if len(legs) % 2 == 0:
        rec(legs, [])
    return tuple(out)


def matching_wick_moment(degrees, cov) -> float:
    """E prod Z_i^{<>n_i} by direct no-self-loop perfect-matching enumeration."""
    ms = matching_contributions(tuple(int(d) for d in degrees))
    if not ms:
        return 0.0
    cov = np.asarray(cov, dtype=float)
    total = [math.prod(cov[a, b] for a, b in m) for m in ms]
    return math.fsum(total)


def random_correlation(gen, k: int) -> np.ndarray:
    """Random PSD correlation-like matrix with unit-order diagonal."""
    a = gen.standard_normal((k, k + 2))
    c = a @ a.T / (k + 2)
    d = np.sqrt(np.diag(c))
    return c / np.outer(d, d)
