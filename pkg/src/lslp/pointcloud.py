"""Point-cloud primitives: normalization, neighbour queries, subsampling,
the kNN-averaging upsampling operator and cloud file I/O.

A point cloud is a plain ``(n, 3)`` float array. Functions never modify
their inputs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "DegenerateCloudError",
    "ResolutionLadder",
    "as_cloud",
    "normalize_unit_sphere",
    "unit_sphere_transform",
    "apply_transform",
    "knn",
    "knn_upsample",
    "farthest_point_subsample",
    "read_xyz",
    "write_xyz",
    "read_pcld",
    "write_pcld",
    "read_cloud",
    "write_cloud",
]

PCLD_MAGIC = b"PCLD"
UPSAMPLE_NEIGHBOURS = 7


class DegenerateCloudError(ValueError):
    """Raised when a cloud has no spatial extent (all points coincide)."""


def as_cloud(pc, *, dtype=None) -> np.ndarray:
    """Validate ``pc`` as an ``(n, 3)`` array of finite coordinates."""
    arr = np.asarray(pc, dtype=dtype)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"point cloud must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("point cloud must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class ResolutionLadder:
    """Point counts ``n_k = 2**k * n0`` for levels ``k = 0..K``."""

    n0: int
    K: int
    latent_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        dims = self.latent_dims
        if dims is None:
            dims = (128,) * (self.K + 1)
        dims = tuple(int(d) for d in dims)
        if len(dims) != self.K + 1 or any(d < 1 for d in dims):
            raise ValueError(f"need K+1={self.K + 1} positive latent dims, got {dims}")
        object.__setattr__(self, "latent_dims", dims)

    @property
    def levels(self) -> range:
        return range(self.K + 1)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(self.size(k) for k in self.levels)

    def size(self, k: int) -> int:
        if not 0 <= k <= self.K:
            raise IndexError(f"level {k} outside ladder 0..{self.K}")
        return (2**k) * self.n0

    def to_dict(self) -> dict:
        return {"n0": self.n0, "K": self.K, "latent_dims": list(self.latent_dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "ResolutionLadder":
        dims = d.get("latent_dims")
        return cls(int(d["n0"]), int(d["K"]), tuple(dims) if dims is not None else None)


# --------------------------------------------------------------------------
# normalization

def unit_sphere_transform(pc) -> tuple[np.ndarray, float]:
    """Return ``(center, scale)`` mapping ``pc`` into the unit ball.

    The normalized cloud is ``(pc - center) / scale``.
    """
    pc = as_cloud(pc, dtype=np.float64)
    center = pc.mean(axis=0)
    scale = float(np.sqrt(((pc - center) ** 2).sum(axis=1)).max())
    if not scale > 0.0:
        raise DegenerateCloudError("cannot normalize a cloud whose points all coincide")
    return center, scale


def apply_transform(pc, center, scale: float) -> np.ndarray:
    return (as_cloud(pc, dtype=np.float64) - center) / scale


def normalize_unit_sphere(pc) -> np.ndarray:
    """Center ``pc`` at the origin and scale so the farthest point has norm 1."""
    center, scale = unit_sphere_transform(pc)
    return apply_transform(pc, center, scale)


# --------------------------------------------------------------------------
# neighbours

def _sorted_neighbours(pc: np.ndarray, queries: np.ndarray, m: int) -> np.ndarray:
    d2 = cdist(queries, pc, "sqeuclidean")
    # stable sort: equal distances keep ascending point index
    return np.argsort(d2, axis=1, kind="stable")[:, :m]


def knn(pc, query, m: int) -> np.ndarray:
    """Indices of the ``m`` points of ``pc`` nearest to ``query``.

    Sorted by nondecreasing Euclidean distance; ties go to the lower index.
    """
    pc = as_cloud(pc, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64).reshape(1, 3)
    n = pc.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    return _sorted_neighbours(pc, q, m)[0]


def knn_upsample(pc, m: int = UPSAMPLE_NEIGHBOURS) -> np.ndarray:
    """Double a cloud by adding, for each point, the mean of its ``m`` nearest
    neighbours (the point itself included).

    The output is the original ``n`` points followed by the ``n`` new ones.
    ``m`` is clamped to ``n`` for clouds with fewer than ``m`` points.
    """
    pc = as_cloud(pc)
    if m < 1:
        raise ValueError("m must be positive")
    n = pc.shape[0]
    m = min(m, n)
    work = pc.astype(np.float64)
    idx = _sorted_neighbours(work, work, m)
    new = work[idx].mean(axis=1)
    out_dtype = pc.dtype if np.issubdtype(pc.dtype, np.floating) else np.float64
    return np.concatenate([pc.astype(out_dtype), new.astype(out_dtype)], axis=0)


def farthest_point_subsample(pc, n_target: int, seed: int = 0, *, start: int | None = None,
                             return_indices: bool = False):
    """Greedy farthest point sampling.

    The first index is drawn from ``np.random.default_rng(seed)`` unless
    ``start`` is given. Every later pick maximizes the distance to the points
    already chosen (lowest index on ties). Points are returned in pick order.
    """
    pc = as_cloud(pc)
    n = pc.shape[0]
    if not 1 <= n_target <= n:
        raise ValueError(f"n_target must be in [1, {n}], got {n_target}")
    if start is None:
        start = int(np.random.default_rng(seed).integers(n))
    elif not 0 <= start < n:
        raise IndexError(f"start index {start} out of range")

    work = pc.astype(np.float64)
    chosen = np.empty(n_target, dtype=np.int64)
    chosen[0] = start
    mind = ((work - work[start]) ** 2).sum(axis=1)
    for i in range(1, n_target):
        nxt = int(np.argmax(mind))
        chosen[i] = nxt
        np.minimum(mind, ((work - work[nxt]) ** 2).sum(axis=1), out=mind)
    out = pc[chosen]
    return (out, chosen) if return_indices else out


# --------------------------------------------------------------------------
# file I/O

def write_xyz(path, pc) -> None:
    """One ``x y z`` line per point, shortest round-trip decimal repr."""
    pc = as_cloud(pc)
    lines = [" ".join(repr(float(v)) for v in row) for row in pc]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_xyz(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
        rows.append([float(p) for p in parts])
    return as_cloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


def write_pcld(path, pc) -> None:
    """Binary cloud: ``b"PCLD"``, uint32 count, then little-endian float32 xyz."""
    pc = as_cloud(pc)
    payload = np.ascontiguousarray(pc, dtype="<f4").tobytes()
    Path(path).write_bytes(PCLD_MAGIC + struct.pack("<I", pc.shape[0]) + payload)


def read_pcld(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != PCLD_MAGIC:
        raise ValueError(f"{path}: not a PCLD file")
    (count,) = struct.unpack("<I", raw[4:8])
    if len(raw) != 8 + 12 * count:
        raise ValueError(f"{path}: truncated PCLD payload ({len(raw) - 8} bytes for {count} points)")
    return np.frombuffer(raw, dtype="<f4", offset=8).reshape(count, 3).astype(np.float32)


def write_cloud(path, pc) -> None:
    path = Path(path)
    if path.suffix == ".xyz":
        write_xyz(path, pc)
    else:
        write_pcld(path, pc)


def read_cloud(path) -> np.ndarray:
    path = Path(path)
    return read_xyz(path) if path.suffix == ".xyz" else read_pcld(path)
