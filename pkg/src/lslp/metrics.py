"""Reconstruction distances (CD, EMD) and set-level generative metrics
(JSD, COV, MMD).

Set-level metrics accept any sequence of ``(n, 3)`` arrays. Distance
tables are evaluated pair by pair and reduced in a fixed order, so results
do not depend on ``workers``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .pointcloud import as_cloud

__all__ = [
    "EMD_EXACT_MAX_POINTS",
    "MetricReport",
    "chamfer",
    "emd_exact",
    "emd_approx",
    "jsd",
    "voxel_histogram",
    "pairwise_distances",
    "coverage",
    "mmd",
]

EMD_EXACT_MAX_POINTS = 512
JSD_DEFAULT_GRID = 28


def _pair(X, Y):
    X = as_cloud(X, dtype=np.float64)
    Y = as_cloud(Y, dtype=np.float64)
    return X, Y


def _equal_size(X, Y):
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"EMD needs equal-size clouds, got {X.shape[0]} and {Y.shape[0]}")


def chamfer(X, Y, reduction: str = "sum") -> float:
    """Chamfer distance with squared Euclidean nearest-neighbour terms.

    ``reduction="sum"`` sums both directions; ``"mean"`` averages each
    direction over its cloud before adding, which makes values comparable
    across resolutions.
    """
    X, Y = _pair(X, Y)
    d2 = cdist(X, Y, "sqeuclidean")
    a, b = d2.min(axis=1), d2.min(axis=0)
    if reduction == "sum":
        return float(a.sum() + b.sum())
    if reduction == "mean":
        return float(a.mean() + b.mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def emd_exact(X, Y, *, return_assignment: bool = False, reduction: str = "sum"):
    """Optimal-bijection transport cost ``min_phi sum ||x - phi(x)||``.

    Solved as a linear assignment problem. ``reduction="mean"`` divides by n.
    With ``return_assignment`` the permutation ``perm`` (``X[i] -> Y[perm[i]]``)
    is returned as well.
    """
    X, Y = _pair(X, Y)
    _equal_size(X, Y)
    n = X.shape[0]
    if n > EMD_EXACT_MAX_POINTS:
        raise ValueError(
            f"emd_exact is limited to {EMD_EXACT_MAX_POINTS} points (got {n}); use emd_approx"
        )
    cost = cdist(X, Y)
    rows, perm = linear_sum_assignment(cost)
    value = float(cost[rows, perm].sum())
    if reduction == "mean":
        value /= n
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return (value, perm) if return_assignment else value


# --------------------------------------------------------------------------
# auction approximation

@numba.njit(cache=True)
def _auction_phase(benefit, prices, eps):
    n = benefit.shape[0]
    owner = np.full(n, -1, np.int64)  # object -> person
    assigned = np.full(n, -1, np.int64)  # person -> object
    queue = np.arange(n)
    head = 0
    tail = n  # circular buffer of unassigned persons
    pending = n
    while pending > 0:
        i = queue[head % n]
        head += 1
        pending -= 1
        best_j = -1
        v1 = -np.inf
        v2 = -np.inf
        for j in range(n):
            v = benefit[i, j] - prices[j]
            if v > v1:
                v2 = v1
                v1 = v
                best_j = j
            elif v > v2:
                v2 = v
        if n == 1:
            v2 = v1
        prices[best_j] += v1 - v2 + eps
        prev = owner[best_j]
        owner[best_j] = i
        assigned[i] = best_j
        if prev >= 0:
            assigned[prev] = -1
            queue[tail % n] = prev
            tail += 1
            pending += 1
    return assigned


@numba.njit(cache=True)
def _dual_lower_bound(cost, prices):
    # min-cost dual value: sum_i min_j (c_ij + p_j) - sum_j p_j
    n = cost.shape[0]
    total = 0.0
    for i in range(n):
        m = np.inf
        for j in range(n):
            v = cost[i, j] + prices[j]
            if v < m:
                m = v
        total += m
    return total - prices.sum()


def _auction_assign(cost: np.ndarray, tol: float, scale_factor: float = 5.0,
                    abs_floor: float = 1e-12):
    n = cost.shape[0]
    benefit = -cost
    prices = np.zeros(n)
    cmax = float(cost.max()) if n else 0.0
    eps = max(cmax / 4.0, abs_floor)
    while True:
        perm = _auction_phase(benefit, prices, eps)
        value = float(cost[np.arange(n), perm].sum())
        lower = _dual_lower_bound(cost, prices)
        if value - lower <= tol * max(lower, 0.0) or value - lower <= abs_floor * max(n, 1):
            return value, perm
        if eps <= abs_floor:
            return value, perm
        eps = max(eps / scale_factor, abs_floor)


def emd_approx(X, Y, tol: float = 0.01, *, return_assignment: bool = False,
               reduction: str = "sum"):
    """Approximate EMD via an epsilon-scaling auction.

    The result is the cost of a genuine bijection, so it never undershoots the
    exact EMD. Scaling stops once the primal cost is within ``tol`` (relative)
    of the auction's dual lower bound, which certifies
    ``emd_exact <= emd_approx <= (1 + tol) * emd_exact`` (plus an absolute slack
    of ``n * 1e-12`` for near-zero transport costs).
    """
    X, Y = _pair(X, Y)
    _equal_size(X, Y)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    cost = cdist(X, Y)
    value, perm = _auction_assign(cost, tol)
    if reduction == "mean":
        value /= X.shape[0]
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return (value, perm) if return_assignment else value


# --------------------------------------------------------------------------
# set-level metrics

def _nonempty(clouds, name):
    clouds = list(clouds)
    if not clouds:
        raise ValueError(f"set {name} is empty")
    return clouds


def voxel_histogram(clouds: Sequence, grid_res: int = JSD_DEFAULT_GRID) -> np.ndarray:
    """Point counts per voxel of a ``grid_res**3`` grid over ``[-1, 1]^3``.

    Points outside the cube are counted in the nearest boundary voxel.
    """
    if grid_res < 1:
        raise ValueError("grid_res must be positive")
    counts = np.zeros(grid_res**3, dtype=np.int64)
    for pc in clouds:
        pc = as_cloud(pc, dtype=np.float64)
        cells = np.floor((pc + 1.0) * 0.5 * grid_res).astype(np.int64)
        np.clip(cells, 0, grid_res - 1, out=cells)
        flat = (cells[:, 0] * grid_res + cells[:, 1]) * grid_res + cells[:, 2]
        counts += np.bincount(flat, minlength=grid_res**3)
    return counts


def jsd(A: Sequence, B: Sequence, grid_res: int = JSD_DEFAULT_GRID) -> float:
    """Jensen-Shannon divergence (natural log) between the voxel-count
    distributions of two sets of clouds. Lies in ``[0, ln 2]``."""
    A = _nonempty(A, "A")
    B = _nonempty(B, "B")
    p = voxel_histogram(A, grid_res).astype(np.float64)
    q = voxel_histogram(B, grid_res).astype(np.float64)
    p /= p.sum()
    q /= q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        mask = a > 0
        return float(np.sum(a[mask] * np.log(a[mask] / m[mask])))

    value = 0.5 * kl(p) + 0.5 * kl(q)
    return min(max(value, 0.0), math.log(2.0))


def _distance_fn(dist: str):
    if dist == "cd":
        return chamfer
    if dist == "emd":
        return lambda x, y: emd_exact(x, y) if len(x) <= EMD_EXACT_MAX_POINTS else emd_approx(x, y)
    raise ValueError(f"unknown distance {dist!r}; expected 'cd' or 'emd'")


def pairwise_distances(A: Sequence, B: Sequence, dist: str = "cd", workers: int = 1) -> np.ndarray:
    """Table ``D[i, j] = dist(A[i], B[j])``."""
    A = _nonempty(A, "A")
    B = _nonempty(B, "B")
    fn = _distance_fn(dist)
    pairs = [(a, b) for a in A for b in B]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda ab: fn(*ab), pairs))
    else:
        values = [fn(a, b) for a, b in pairs]
    return np.array(values, dtype=np.float64).reshape(len(A), len(B))


def coverage(A: Sequence, B: Sequence, dist: str = "cd", *, table: np.ndarray | None = None,
             workers: int = 1) -> float:
    """Fraction of ``B`` that is the nearest neighbour of at least one member of ``A``."""
    D = pairwise_distances(A, B, dist, workers) if table is None else np.asarray(table)
    marked = np.unique(np.argmin(D, axis=1))
    return marked.size / D.shape[1]


def mmd(A: Sequence, B: Sequence, dist: str = "cd", *, table: np.ndarray | None = None,
        workers: int = 1) -> float:
    """Average over ``B`` of the distance to the closest member of ``A``."""
    D = pairwise_distances(A, B, dist, workers) if table is None else np.asarray(table)
    return float(D.min(axis=0).mean())


# --------------------------------------------------------------------------
# reports

@dataclass
class MetricReport:
    """One metric value plus the parameters that produced it.

    Serialized as ``metric=<name> value=<decimal> key=value ...`` on a single
    line; values and keys may not contain whitespace or ``=``.
    """

    name: str
    value: float
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"metric value must be nonnegative, got {self.value}")

    def format(self) -> str:
        parts = [f"metric={self.name}", f"value={float(self.value)!r}"]
        for key, val in self.config.items():
            text = str(val)
            if any(c.isspace() for c in text) or "=" in text or "=" in key:
                raise ValueError(f"cannot serialize {key}={text!r}")
            parts.append(f"{key}={text}")
        return " ".join(parts)

    @classmethod
    def parse(cls, line: str) -> "MetricReport":
        fields = {}
        for token in line.split():
            key, sep, val = token.partition("=")
            if not sep:
                raise ValueError(f"malformed token {token!r}")
            fields[key] = val
        try:
            name = fields.pop("metric")
            value = float(fields.pop("value"))
        except KeyError as exc:
            raise ValueError(f"record lacks {exc.args[0]!r}: {line!r}") from None
        config = {k: _parse_scalar(v) for k, v in fields.items()}
        return cls(name, value, config)


def _parse_scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text
