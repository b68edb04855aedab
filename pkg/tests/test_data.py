import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lslp.data import (LadderedShape, MeshError, TriangleMesh, assign_split, build_ladder, load_dataset, read_obj,
                       sample_mesh_surface, save_dataset, synthetic_dataset, synthetic_shape)
from lslp.metrics import chamfer
from lslp.pointcloud import ResolutionLadder


def torus_residual(pts, R, r):
    return (np.hypot(pts[:, 0], pts[:, 1]) - R) ** 2 + pts[:, 2] ** 2 - r * r


def box_face(pts, ext):
    # index 0..5 of the face (+x, -x, +y, -y, +z, -z) each point lies on
    rel = pts / ext
    axis = np.argmax(np.abs(rel), axis=1)
    sign = rel[np.arange(len(pts)), axis] < 0
    return 2 * axis + sign


def within_3_sigma(counts, probs):
    n = counts.sum()
    sigma = np.sqrt(n * probs * (1 - probs))
    return np.all(np.abs(counts - n * probs) <= 3 * sigma)


# -- mesh sampling ----------------------------------------------------------

def test_right_triangle_centroid():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    pts = sample_mesh_surface(mesh, 10_000, seed=0)
    assert np.linalg.norm(pts.mean(axis=0) - [1 / 3, 1 / 3, 0]) < 0.02
    assert np.all(pts[:, 0] >= 0) and np.all(pts[:, 1] >= 0) and np.all(pts.sum(axis=1) <= 1 + 1e-12)


def test_face_counts_follow_area():
    # areas 1 and 3, disjoint in x
    mesh = TriangleMesh([[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [16, 0, 0], [10, 1, 0]],
                        [[0, 1, 2], [3, 4, 5]])
    assert np.allclose(mesh.face_areas(), [1, 3])
    pts = sample_mesh_surface(mesh, 10_000, seed=1)
    counts = np.array([(pts[:, 0] < 5).sum(), (pts[:, 0] >= 5).sum()])
    assert within_3_sigma(counts, np.array([0.25, 0.75]))


def test_single_sample_lies_on_mesh():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    p = sample_mesh_surface(mesh, 1, seed=5)
    assert p.shape == (1, 3) and p[0, 2] == 0 and p[0, :2].sum() <= 1


def test_mesh_sampling_deterministic():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2], [0, 1, 3]])
    assert np.array_equal(sample_mesh_surface(mesh, 50, 3), sample_mesh_surface(mesh, 50, 3))


def test_empty_mesh_errors():
    with pytest.raises(MeshError):
        sample_mesh_surface(TriangleMesh(np.zeros((3, 3)), [[0, 1, 2]]), 10)
    with pytest.raises(MeshError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])


def test_read_obj(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n")
    mesh = read_obj(path)
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert mesh.face_areas().sum() == pytest.approx(1.0)


@pytest.mark.parametrize("text", ["v 0 0 0\nv 1 0 0\n", "v 0 0\nf 1 2 3\n", "v 0 0 0\nf 1 x 2\n",
                                  "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n"])
def test_read_obj_malformed(tmp_path, text):
    path = tmp_path / "bad.obj"
    path.write_text(text)
    with pytest.raises(MeshError):
        read_obj(path)


# -- parametric shapes ------------------------------------------------------

def test_unit_sphere_norm():
    pts = synthetic_shape("sphere", {"radius": 1.0}, 10_000, seed=0)
    assert abs(np.linalg.norm(pts, axis=1).mean() - 1) < 1e-2


def test_box_faces_uniform():
    pts = synthetic_shape("box", {"extents": [1, 1, 1]}, 10_000, seed=0)
    assert np.allclose(np.abs(pts).max(axis=1), 1)
    counts = np.bincount(box_face(pts, np.ones(3)), minlength=6)
    assert within_3_sigma(counts, np.full(6, 1 / 6))


def test_box_faces_follow_area():
    ext = np.array([1.0, 0.5, 0.25])
    pts = synthetic_shape("box", {"extents": ext}, 20_000, seed=2)
    areas = np.repeat([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]], 2)
    assert within_3_sigma(np.bincount(box_face(pts, ext), minlength=6), areas / areas.sum())


def test_torus_implicit_equation():
    pts = synthetic_shape("torus", {"R": 1.0, "r": 0.3}, 5000, seed=0)
    assert np.abs(torus_residual(pts, 1.0, 0.3)).max() < 1e-6


def test_torus_area_uniform():
    # the outer half (cos v > 0) carries more area than the inner half
    pts = synthetic_shape("torus", {"R": 1.0, "r": 0.5}, 20_000, seed=0)
    outer = (np.hypot(pts[:, 0], pts[:, 1]) > 1.0).mean()
    expected = 0.5 + 0.5 / np.pi  # 1/2 + r / (pi R)
    assert within_3_sigma(np.array([outer * 20_000, (1 - outer) * 20_000]),
                          np.array([expected, 1 - expected]))


def test_cylinder_surface():
    pts = synthetic_shape("cylinder", {"radius": 0.5, "height": 2.0}, 5000, seed=0)
    rad = np.hypot(pts[:, 0], pts[:, 1])
    on_side = np.isclose(rad, 0.5)
    on_cap = np.isclose(np.abs(pts[:, 2]), 1.0)
    assert np.all(on_side | on_cap)
    side, cap = 2 * np.pi * 0.5 * 2.0, np.pi * 0.25
    frac = side / (side + 2 * cap)
    assert within_3_sigma(np.array([on_side.sum(), (~on_side).sum()]), np.array([frac, 1 - frac]))


@pytest.mark.parametrize("kind,params", [("sphere", {"radius": -1}), ("torus", {"R": 1, "r": 0}),
                                         ("box", {"extents": [1, 0, 1]}), ("cylinder", {"radius": 1, "height": -2}),
                                         ("cone", {})])
def test_invalid_shape_params(kind, params):
    with pytest.raises(ValueError):
        synthetic_shape(kind, params, 10)


def test_shapes_deterministic():
    params = {"sphere": {"radius": 1.0}, "torus": {"R": 1.0, "r": 0.3}, "box": {"extents": [1, 2, 3]},
              "cylinder": {"radius": 1.0, "height": 1.0}}
    for kind, p in params.items():
        assert np.array_equal(synthetic_shape(kind, p, 64, seed=9), synthetic_shape(kind, p, 64, seed=9))


# -- ladders and datasets ---------------------------------------------------

def test_build_ladder_full_scale_sizes():
    dense = synthetic_shape("sphere", {"radius": 1.0}, 4096, seed=0)
    shape = build_ladder(dense, ResolutionLadder(512, 2))
    assert [len(c) for c in shape.clouds] == [512, 1024, 2048]


def test_ladder_levels_nested_and_shared_transform():
    dense = synthetic_shape("torus", {"R": 1.0, "r": 0.3}, 2048, seed=1)
    shape = build_ladder(dense, ResolutionLadder(64, 2), seed=3)
    x0, x1, x2 = shape.clouds
    assert np.array_equal(x0, x1[:64]) and np.array_equal(x1, x2[:128])
    assert np.isclose(np.linalg.norm(x2 - x2.mean(0), axis=1).max(), 1.0, atol=1e-6)


def test_within_shape_cd_small_vs_across():
    shapes = synthetic_dataset(8, ResolutionLadder(32, 2), seed=0)
    within = [chamfer(s.clouds[0], s.clouds[2], "mean") for s in shapes]
    across = [chamfer(a.clouds[0], b.clouds[2], "mean") for a in shapes for b in shapes if a is not b]
    assert max(within) < np.median(across)


def test_non_nested_ladder_sizes():
    dense = synthetic_shape("box", None, 1024, seed=0)
    shape = build_ladder(dense, ResolutionLadder(32, 2), nested=False)
    assert [len(c) for c in shape.clouds] == [32, 64, 128]


def test_build_ladder_too_few_points():
    with pytest.raises(ValueError, match="needs 256"):
        build_ladder(np.random.default_rng(0).normal(size=(100, 3)), ResolutionLadder(64, 2))


def test_build_ladder_from_mesh():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    shape = build_ladder(mesh, ResolutionLadder(16, 1), seed=0)
    assert [c.shape for c in shape.clouds] == [(16, 3), (32, 3)]
    assert shape.clouds[0].dtype == np.float32


def test_synthetic_dataset_balanced_and_deterministic():
    lad = ResolutionLadder(16, 1)
    a = synthetic_dataset(12, lad, seed=4)
    b = synthetic_dataset(12, lad, seed=4)
    assert [s.label for s in a].count("torus") == 3
    assert all(np.array_equal(x.clouds[1], y.clouds[1]) for x, y in zip(a, b))


def test_split_per_class():
    shapes = synthetic_dataset(40, ResolutionLadder(8, 1), seed=0)
    split = assign_split(shapes, 0.25, seed=0)
    for kind in ("sphere", "torus", "box", "cylinder"):
        ids = [s.shape_id for s in shapes if s.label == kind]
        assert sum(split[i] == "test" for i in ids) in (2, 3)
    assert sum(v == "test" for v in split.values()) == 10
    assert split == assign_split(shapes, 0.25, seed=0)


@given(st.integers(1, 60), st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9, 1.0]))
@settings(max_examples=25)
def test_split_total_and_class_balance(n, frac):
    shapes = [LadderedShape(f"s{i}", [], label=f"c{i % 4}") for i in range(n)]
    split = assign_split(shapes, frac, seed=1)
    assert sum(v == "test" for v in split.values()) == int(np.floor(frac * n + 0.5))
    for c in range(4):
        ids = [s.shape_id for s in shapes if s.label == f"c{c}"]
        assert abs(sum(split[i] == "test" for i in ids) - frac * len(ids)) < 1


def test_desk_split_holds_out_fifty():
    shapes = [LadderedShape(f"s{i}", [], label=f"c{i % 4}") for i in range(200)]
    assert sum(v == "test" for v in assign_split(shapes, 0.25).values()) == 50


def test_dataset_roundtrip(tmp_path):
    lad = ResolutionLadder(16, 2)
    shapes = synthetic_dataset(6, lad, seed=1)
    split = assign_split(shapes, 0.5, 0)
    save_dataset(tmp_path, shapes, lad, split)
    ds = load_dataset(tmp_path)
    assert ds.ladder == lad and ds.split == split
    for a, b in zip(shapes, ds.shapes):
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.clouds, b.clouds))
    assert ds.level(2, "test").shape == (sum(v == "test" for v in split.values()), 64, 3)


def test_load_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)
