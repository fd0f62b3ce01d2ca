"""Equivalence-class clustering at a length scale, isolated-point detection,
chain-partition membership, and small-volume Monte Carlo estimates.

Points are clustered by the transitive closure of "within distance scale" in
the anisotropic metric; a configuration of 2n points is 'separated' when at
least one point is farther than the scale from every other.  The complement
of that event carries small volume, which the Monte Carlo estimators here
quantify against the product bound (eps ^ n|s|) * (lambda ^ n|s|) up to a
single constant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .geometry import ScalingGeometry, metric_many


@dataclass(frozen=True)
class ClusterPartition:
    scale: float
    classes: tuple[tuple[int, ...], ...]
    singletons: tuple[tuple[int, ...], ...]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _pair_distances(points: np.ndarray, g: ScalingGeometry) -> np.ndarray:
    diffs = points[:, None, :] - points[None, :, :]
    return metric_many(diffs, g)


def build_clusters(points, L_eps: float, g: ScalingGeometry) -> ClusterPartition:
    """Union-find closure of the relation |z_i - z_j| <= L_eps."""
    if L_eps <= 0:
        raise ValueError("clustering scale must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != g.d:
        raise ValueError("point dimension mismatch")
    n = pts.shape[0]
    dist = _pair_distances(pts, g)
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] <= L_eps:
                uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    classes = tuple(sorted(tuple(sorted(v)) for v in groups.values()))
    singles = tuple(c for c in classes if len(c) == 1)
    return ClusterPartition(scale=float(L_eps), classes=classes, singletons=singles)


def in_S2n(points, L_eps: float, g: ScalingGeometry | None = None) -> bool:
    """True iff some point is farther than L_eps from every other point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if g is None:
        g = ScalingGeometry((1.0,) * pts.shape[-1])
    dist = _pair_distances(pts, g)
    np.fill_diagonal(dist, np.inf)
    return bool(np.any(np.min(dist, axis=1) > L_eps))


def in_chain_class(points, L_eps: float, g: ScalingGeometry) -> bool:
    """Membership in the chain class: some relabelling has consecutive gaps <= L_eps."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m == 1:
        return True
    dist = _pair_distances(pts, g)
    adj = dist <= L_eps
    # Hamiltonian path in the proximity graph, brute force (block sizes <= 8)
    for perm in itertools.permutations(range(m)):
        if perm[0] != min(perm[0], perm[-1]):
            continue  # path reversal symmetry
        if all(adj[perm[i], perm[i + 1]] for i in range(m - 1)):
            return True
    return False


@dataclass
class VolumeEstimate:
    volume: float
    ci: tuple[float, float]
    bound: float
    n_mc: int
    hits: int


def _uniform_box_points(gen: np.random.Generator, n_pts: int, n_mc: int,
                        g: ScalingGeometry, radius: float) -> np.ndarray:
    """n_mc configurations of n_pts points uniform in the metric ball of the
    given radius (a box with per-axis half-width radius**s_i)."""
    half = np.array([radius**si for si in g.s])
    return gen.uniform(-1.0, 1.0, size=(n_mc, n_pts, g.d)) * half


def _box_volume(g: ScalingGeometry, radius: float) -> float:
    return float(np.prod([2.0 * radius**si for si in g.s]))


def _separated_mask(configs: np.ndarray, scale: float, g: ScalingGeometry) -> np.ndarray:
    """Per-configuration flag: does an isolated point exist at the scale."""
    diffs = configs[:, :, None, :] - configs[:, None, :, :]
    dist = metric_many(diffs, g)
    k = configs.shape[1]
    idx = np.arange(k)
    dist[:, idx, idx] = np.inf
    return np.any(np.min(dist, axis=2) > scale, axis=1)


_MC_BATCH = 50_000


def volume_Sc(n: int, eps: float, lam: float, g: ScalingGeometry, n_mc: int,
              L: float = 1.0, seed: int = 0) -> VolumeEstimate:
    """Monte Carlo volume of the no-isolated-point event inside the 2*lam ball.

    2n points are drawn uniformly in the metric ball of radius 2*lam; the hit
    rate against the clustering scale L*eps is scaled by the box volume.  The
    returned bound is (eps ^ n|s|) * (lam ^ n|s|) with eps capped at lam, for
    ratio reporting.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    gen = rng.substream(seed, rng.POINTS, 1)
    n_pts = 2 * n
    scale = L * eps
    hits = 0
    done = 0
    while done < n_mc:
        batch = min(_MC_BATCH, n_mc - done)
        configs = _uniform_box_points(gen, n_pts, batch, g, 2.0 * lam)
        hits += int(np.sum(~_separated_mask(configs, scale, g)))
        done += batch
    total_vol = _box_volume(g, 2.0 * lam) ** n_pts
    p = hits / n_mc
    se = math.sqrt(max(p * (1 - p), 1e-12) / n_mc)
    bound = (min(eps, lam) ** (n * g.total)) * (lam ** (n * g.total))
    return VolumeEstimate(volume=p * total_vol,
                          ci=((p - 3 * se) * total_vol, (p + 3 * se) * total_vol),
                          bound=bound, n_mc=n_mc, hits=hits)


@dataclass
class PartitionCheckReport:
    n_trials: int
    violations: int
    witness: np.ndarray | None


def _partitions_min_two(items: tuple[int, ...]):
    """All set partitions of ``items`` whose blocks all have >= 2 elements."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    # choose the block containing `first`: at least one more element
    for r in range(1, len(rest) + 1):
        for combo in itertools.combinations(rest, r):
            block = (first,) + combo
            remaining = tuple(x for x in rest if x not in combo)
            for sub in _partitions_min_two(remaining):
                yield [block] + sub


def _chain_orderings(size: int) -> list[tuple[int, ...]]:
    """Distinct chain orderings of ``size`` slots up to reversal."""
    if size <= 2:
        return [tuple(range(size))]
    return [p for p in itertools.permutations(range(size)) if p[0] < p[-1]]


def _chain_mask(adj: np.ndarray, block: tuple[int, ...]) -> np.ndarray:
    """Per-config flag that the block admits a chain ordering (vectorized)."""
    if len(block) <= 1:
        return np.ones(adj.shape[0], dtype=bool)
    out = np.zeros(adj.shape[0], dtype=bool)
    for order in _chain_orderings(len(block)):
        mask = np.ones(adj.shape[0], dtype=bool)
        for a, b in zip(order[:-1], order[1:]):
            mask &= adj[:, block[a], block[b]]
        out |= mask
    return out


def partition_sum_check(n: int, eps: float, lam: float, n_mc: int,
                        g: ScalingGeometry | None = None, L: float = 1.0,
                        seed: int = 0) -> PartitionCheckReport:
    """Set-containment check of the no-isolated-point decomposition.

    A configuration has no isolated point at scale L*eps iff some partition
    into blocks of size >= 2 exists whose every block admits a chain ordering
    with consecutive gaps <= L*eps.  Both directions are checked by brute
    force on random configurations; the first witness of a violation is
    reported.  On one axis the clustering runs (sorted consecutive groups)
    provide the chain witness, so the identity is exact at a single scale;
    in higher dimensions hub-and-spoke configurations can defeat the forward
    direction at one scale, and a reported witness is then meaningful data,
    not a bug.
    """
    if 2 * n > 8:
        raise ValueError("partition enumeration budget is 2n <= 8")
    if g is None:
        g = ScalingGeometry((1.0,))
    gen = rng.substream(seed, rng.POINTS, 2)
    n_pts = 2 * n
    scale = L * eps
    parts = list(_partitions_min_two(tuple(range(n_pts))))
    violations = 0
    witness = None
    done = 0
    while done < n_mc:
        batch = min(_MC_BATCH, n_mc - done)
        configs = _uniform_box_points(gen, n_pts, batch, g, 2.0 * lam)
        diffs = configs[:, :, None, :] - configs[:, None, :, :]
        dist = metric_many(diffs, g)
        idx = np.arange(n_pts)
        adj = dist <= scale
        dist_off = dist.copy()
        dist_off[:, idx, idx] = np.inf
        separated = np.any(np.min(dist_off, axis=2) > scale, axis=1)
        covered = np.zeros(batch, dtype=bool)
        for part in parts:
            mask = np.ones(batch, dtype=bool)
            for block in part:
                mask &= _chain_mask(adj, block)
            covered |= mask
        bad = covered == separated
        violations += int(np.sum(bad))
        if witness is None and np.any(bad):
            witness = configs[int(np.argmax(bad))].copy()
        done += batch
    return PartitionCheckReport(n_trials=n_mc, violations=violations, witness=witness)
