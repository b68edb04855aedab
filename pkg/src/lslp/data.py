"""Multi-resolution dataset construction.

Shapes come either from triangle meshes (OBJ) or from parametric synthetic
surfaces. Each shape is densely sampled, reduced by farthest point sampling
to ``n_K`` points, and the coarser levels are prefixes of that FPS order, so
``X_0 ⊂ X_1 ⊂ ... ⊂ X_K`` holds exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pointcloud import (
    ResolutionLadder,
    apply_transform,
    as_cloud,
    farthest_point_subsample,
    read_pcld,
    unit_sphere_transform,
    write_pcld,
)

SHAPE_KINDS = ("sphere", "torus", "box", "cylinder")
DATASET_MANIFEST = "dataset.json"
SHAPE_MANIFEST = "shape.json"


class MeshError(ValueError):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def cleaned(self) -> "TriangleMesh":
        """Copy without zero-area faces."""
        return TriangleMesh(self.vertices, self.faces[self.face_areas() > 0])


def read_obj(path) -> TriangleMesh:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated and
    ``v/vt/vn`` index forms and negative indices are accepted."""
    vertices, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
                if len(vertices[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1))
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: {exc}") from None
    if not faces:
        raise MeshError(f"{path}: no faces")
    return TriangleMesh(np.array(vertices), np.array(faces))


def sample_mesh_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-uniform surface samples: faces drawn proportionally to area,
    positions from uniform barycentric coordinates."""
    mesh = mesh.cleaned()
    if len(mesh.faces) == 0:
        raise MeshError("mesh has no faces with positive area")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    face = rng.choice(len(areas), size=n, p=areas / areas.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    a, b, c = (mesh.vertices[mesh.faces[face, i]] for i in range(3))
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


# --------------------------------------------------------------------------
# parametric shapes

def _positive(params, *names):
    for name in names:
        if not float(params[name]) > 0:
            raise ValueError(f"{name} must be positive, got {params[name]}")


def _sphere(params, n, rng):
    radius = float(params.get("radius", 1.0))
    _positive({"radius": radius}, "radius")
    axes = np.asarray(params.get("axes", (1.0, 1.0, 1.0)), dtype=np.float64)
    if axes.shape != (3,) or np.any(axes <= 0):
        raise ValueError("axes must be three positive scales")
    a, b, c = axes
    out = np.empty((0, 3))
    # rejection on the unit sphere by the ellipsoid's local area stretch
    gmax = max(b * c, a * c, a * b)
    while len(out) < n:
        u = rng.standard_normal((2 * (n - len(out)) + 16, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        g = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2 + (a * b * u[:, 2]) ** 2)
        keep = rng.random(len(u)) * gmax < g
        out = np.concatenate([out, u[keep] * axes])
    return radius * out[:n]


def _torus(params, n, rng):
    _positive(params, "R", "r")
    R, r = float(params["R"]), float(params["r"])
    if r >= R:
        raise ValueError("torus needs r < R")
    out = np.empty((0, 2))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        v = rng.uniform(0, 2 * np.pi, m)
        keep = rng.random(m) * (R + r) < R + r * np.cos(v)
        u = rng.uniform(0, 2 * np.pi, m)
        out = np.concatenate([out, np.stack([u[keep], v[keep]], axis=1)])
    u, v = out[:n, 0], out[:n, 1]
    ring = R + r * np.cos(v)
    return np.stack([ring * np.cos(u), ring * np.sin(u), r * np.sin(v)], axis=1)


def _box(params, n, rng):
    ext = np.asarray(params.get("extents", (1.0, 1.0, 1.0)), dtype=np.float64)
    if ext.shape != (3,) or np.any(ext <= 0):
        raise ValueError("extents must be three positive half-sizes")
    # faces: +-x, +-y, +-z
    areas = np.array([ext[1] * ext[2]] * 2 + [ext[0] * ext[2]] * 2 + [ext[0] * ext[1]] * 2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1, 1, size=(n, 3))
    axis = face // 2
    pts[np.arange(n), axis] = np.where(face % 2 == 0, 1.0, -1.0)
    return pts * ext


def _cylinder(params, n, rng):
    _positive(params, "radius", "height")
    r, h = float(params["radius"]), float(params["height"])
    side, cap = 2 * np.pi * r * h, np.pi * r * r
    part = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    theta = rng.uniform(0, 2 * np.pi, n)
    rad = np.where(part == 0, r, r * np.sqrt(rng.random(n)))
    z = np.where(part == 0, rng.uniform(-h / 2, h / 2, n), np.where(part == 1, h / 2, -h / 2))
    return np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)


_SHAPES = {"sphere": _sphere, "torus": _torus, "box": _box, "cylinder": _cylinder}


def synthetic_shape(kind: str, params: dict | None = None, n: int = 2048, seed: int = 0) -> np.ndarray:
    """Area-uniform samples of a parametric surface.

    ``sphere``: ``radius`` and optional ``axes`` (ellipsoid scales);
    ``torus``: ``R``, ``r``; ``box``: ``extents`` (half-sizes);
    ``cylinder``: ``radius``, ``height`` (closed, with caps).
    """
    if kind not in _SHAPES:
        raise ValueError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    if n < 1:
        raise ValueError("n must be positive")
    return _SHAPES[kind](dict(params or {}), n, np.random.default_rng(seed))


def jittered_params(kind: str, rng: np.random.Generator) -> dict:
    """Random proportions for one member of a synthetic class."""
    if kind == "sphere":
        return {"radius": 1.0, "axes": [float(x) for x in rng.uniform(0.6, 1.0, 3)]}
    if kind == "torus":
        return {"R": 1.0, "r": float(rng.uniform(0.2, 0.5))}
    if kind == "box":
        return {"extents": [float(x) for x in rng.uniform(0.3, 1.0, 3)]}
    if kind == "cylinder":
        return {"radius": float(rng.uniform(0.3, 1.0)), "height": float(rng.uniform(0.8, 2.0))}
    raise ValueError(f"unknown shape kind {kind!r}")


# --------------------------------------------------------------------------
# ladders

@dataclass
class LadderedShape:
    shape_id: str
    clouds: list
    label: str = ""
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.clouds) - 1


def build_ladder(source, ladder: ResolutionLadder, seed: int = 0, *, nested: bool = True,
                 oversample: int = 4, shape_id: str = "shape", label: str = "",
                 params: dict | None = None) -> LadderedShape:
    """Sample a shape at every ladder resolution.

    ``source`` is a :class:`TriangleMesh` or a point array with at least
    ``n_K`` points. Meshes are sampled at ``oversample * n_K`` points first.
    With ``nested`` the levels are prefixes of one FPS ordering; otherwise
    each level is an independent FPS run with its own seed. One unit-sphere
    transform, computed at the finest level, is applied to every level.
    Clouds are stored as float32.
    """
    nK = ladder.size(ladder.K)
    if isinstance(source, TriangleMesh):
        dense = sample_mesh_surface(source, oversample * nK, seed)
    else:
        dense = as_cloud(source, dtype=np.float64)
        if len(dense) < nK:
            raise ValueError(f"source has {len(dense)} points, the ladder needs {nK}")

    finest, order = farthest_point_subsample(dense, nK, seed, return_indices=True)
    if nested:
        levels = [finest[: ladder.size(k)] for k in ladder.levels]
    else:
        levels = [farthest_point_subsample(dense, ladder.size(k), seed + 1 + k) for k in ladder.levels[:-1]]
        levels.append(finest)
    center, scale = unit_sphere_transform(levels[-1])
    clouds = [apply_transform(x, center, scale).astype(np.float32) for x in levels]
    return LadderedShape(shape_id, clouds, label, seed, dict(params or {}))


def synthetic_dataset(n_shapes: int, ladder: ResolutionLadder, seed: int = 0,
                      kinds=SHAPE_KINDS, oversample: int = 4) -> list[LadderedShape]:
    """Class-balanced jittered shapes (round-robin over ``kinds``)."""
    if n_shapes < 1:
        raise ValueError("n_shapes must be positive")
    seeds = np.random.SeedSequence(seed).generate_state(n_shapes)
    nK = ladder.size(ladder.K)
    shapes = []
    for i in range(n_shapes):
        kind = kinds[i % len(kinds)]
        s = int(seeds[i])
        rng = np.random.default_rng(s)
        params = jittered_params(kind, rng)
        dense = synthetic_shape(kind, params, oversample * nK, seed=s)
        shapes.append(build_ladder(dense, ladder, s, shape_id=f"{kind}_{i:04d}", label=kind,
                                   params=params))
    return shapes


# --------------------------------------------------------------------------
# on-disk datasets

@dataclass
class Dataset:
    ladder: ResolutionLadder
    shapes: list
    split: dict  # shape_id -> "train" | "test"
    root: Path | None = None

    def select(self, split: str | None = None) -> list:
        return [s for s in self.shapes if split is None or self.split[s.shape_id] == split]

    def level(self, k: int, split: str | None = None) -> np.ndarray:
        """Stacked ``(N, n_k, 3)`` clouds of one level."""
        return np.stack([s.clouds[k] for s in self.select(split)])


def assign_split(shapes, test_fraction: float = 0.25, seed: int = 0) -> dict:
    """Deterministic per-class train/test split.

    The test split holds ``test_fraction * N`` shapes rounded half up, shared
    out over classes by largest remainder (ties go to the earlier label).
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    split = {}
    by_label: dict = {}
    for s in shapes:
        by_label.setdefault(s.label, []).append(s.shape_id)
    labels = sorted(by_label)
    exact = np.array([test_fraction * len(by_label[lab]) for lab in labels])
    quota = np.floor(exact).astype(int)
    total = int(np.floor(test_fraction * sum(len(v) for v in by_label.values()) + 0.5))
    for i in sorted(range(len(labels)), key=lambda i: (-(exact[i] - quota[i]), i))[: total - quota.sum()]:
        quota[i] += 1
    rng = np.random.default_rng(seed)
    for label, n_test in zip(labels, quota):
        ids = sorted(by_label[label])
        test = set(rng.permutation(ids)[:n_test].tolist())
        split.update({i: "test" if i in test else "train" for i in ids})
    return split


def save_dataset(root, shapes, ladder: ResolutionLadder, split: dict, extra: dict | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in shapes:
        d = root / s.shape_id
        d.mkdir(exist_ok=True)
        files = []
        for k, cloud in enumerate(s.clouds):
            name = f"level{k}.pcld"
            write_pcld(d / name, cloud)
            files.append(name)
        meta = {"id": s.shape_id, "class": s.label, "seed": s.seed, "params": s.params,
                "ladder": ladder.to_dict(), "files": files}
        (d / SHAPE_MANIFEST).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        entries.append({"id": s.shape_id, "class": s.label, "split": split[s.shape_id]})
    manifest = {"format": "lslp-dataset/1", "ladder": ladder.to_dict(), "shapes": entries,
                **(extra or {})}
    (root / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / DATASET_MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"{root} has no {DATASET_MANIFEST}")
    manifest = json.loads(manifest_path.read_text())
    ladder = ResolutionLadder.from_dict(manifest["ladder"])
    shapes, split = [], {}
    for entry in manifest["shapes"]:
        d = root / entry["id"]
        meta = json.loads((d / SHAPE_MANIFEST).read_text())
        clouds = [read_pcld(d / f) for f in meta["files"]]
        for k, c in enumerate(clouds):
            if len(c) != ladder.size(k):
                raise ValueError(f"{d}: level {k} has {len(c)} points, expected {ladder.size(k)}")
        shapes.append(LadderedShape(meta["id"], clouds, meta["class"], meta["seed"], meta["params"]))
        split[meta["id"]] = entry["split"]
    return Dataset(ladder, shapes, split, root)

