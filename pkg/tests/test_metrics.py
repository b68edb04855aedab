import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from lslp.metrics import (EMD_EXACT_MAX_POINTS, MetricReport, chamfer, coverage, emd_approx, emd_exact, jsd,
                          mmd, pairwise_distances, voxel_histogram)

small_cloud = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, 3), elements=st.floats(-1, 1, allow_nan=False)))


# -- chamfer ----------------------------------------------------------------

def test_chamfer_matches_loops(rng):
    for _ in range(20):
        X, Y = rng.normal(size=(int(rng.integers(1, 20)), 3)), rng.normal(size=(int(rng.integers(1, 20)), 3))
        assert chamfer(X, Y) == pytest.approx(oracles.chamfer(X, Y), abs=1e-9)


def test_chamfer_hand_example():
    X = np.array([[0.0, 0, 0], [1, 0, 0]])
    Y = np.array([[0.0, 0, 0]])
    assert chamfer(X, Y) == 1.0
    assert chamfer(X, Y, reduction="mean") == 0.5


@given(small_cloud, small_cloud)
def test_chamfer_symmetric_nonnegative(X, Y):
    assert chamfer(X, Y) == pytest.approx(chamfer(Y, X))
    assert chamfer(X, Y) >= 0
    assert chamfer(X, X) == 0


# -- EMD --------------------------------------------------------------------

def test_emd_exact_matches_permutations(rng):
    for _ in range(30):
        n = int(rng.integers(1, 7))
        X, Y = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        assert emd_exact(X, Y) == pytest.approx(oracles.emd_permutations(X, Y), abs=1e-9)


def test_emd_assignment_is_a_bijection(rng):
    X, Y = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    value, perm = emd_exact(X, Y, return_assignment=True)
    assert sorted(perm) == list(range(30))
    assert value == pytest.approx(np.linalg.norm(X - Y[perm], axis=1).sum())


def test_emd_permuted_copy_is_zero(rng):
    X = rng.normal(size=(50, 3))
    Y = X[rng.permutation(50)]
    assert emd_exact(X, Y) == pytest.approx(0, abs=1e-12)
    assert emd_approx(X, Y) == pytest.approx(0, abs=1e-9)


def test_emd_translation():
    X = np.random.default_rng(1).normal(size=(20, 3))
    shift = np.array([0.3, -0.4, 0.0])
    assert emd_exact(X, X + shift) == pytest.approx(20 * 0.5)
    assert emd_exact(X, X + shift, reduction="mean") == pytest.approx(0.5)


def test_emd_size_errors(rng):
    with pytest.raises(ValueError, match="equal-size"):
        emd_exact(rng.normal(size=(4, 3)), rng.normal(size=(5, 3)))
    big = rng.normal(size=(EMD_EXACT_MAX_POINTS + 1, 3))
    with pytest.raises(ValueError, match="emd_approx"):
        emd_exact(big, big)


@pytest.mark.parametrize("n", [32, 64, 128, 256])
def test_emd_approx_bracketed(rng, n):
    for _ in range(5):
        X, Y = rng.normal(size=(n, 3)), rng.uniform(-1, 1, size=(n, 3))
        exact = emd_exact(X, Y)
        approx, perm = emd_approx(X, Y, tol=0.01, return_assignment=True)
        assert sorted(perm) == list(range(n))
        assert exact - 1e-9 <= approx <= 1.01 * exact + 1e-9


def test_emd_approx_tighter_tolerance(rng):
    X, Y = rng.normal(size=(64, 3)), rng.normal(size=(64, 3))
    assert emd_approx(X, Y, tol=1e-6) == pytest.approx(emd_exact(X, Y), rel=1e-5)


# -- JSD --------------------------------------------------------------------

def test_voxel_histogram_counts_every_point(rng):
    A = [rng.uniform(-1.5, 1.5, size=(30, 3)) for _ in range(4)]
    h = voxel_histogram(A, 8)
    assert h.sum() == 120 and h.shape == (512,)


def test_jsd_matches_loops(rng):
    for res in (2, 5, 28):
        A = [rng.uniform(-1.2, 1.2, size=(20, 3)) for _ in range(4)]
        B = [rng.normal(scale=0.5, size=(25, 3)) for _ in range(3)]
        assert jsd(A, B, res) == pytest.approx(oracles.jsd(A, B, res), abs=1e-12)


def test_jsd_limits(rng):
    A = [rng.uniform(0.1, 0.9, size=(50, 3))]
    B = [rng.uniform(-0.9, -0.1, size=(50, 3))]
    assert jsd(A, A) == 0.0
    assert jsd(A, B) == pytest.approx(math.log(2))


@given(st.lists(small_cloud, min_size=1, max_size=3), st.lists(small_cloud, min_size=1, max_size=3))
def test_jsd_bounded_symmetric(A, B):
    v = jsd(A, B, 6)
    assert 0 <= v <= math.log(2)
    assert v == pytest.approx(jsd(B, A, 6), abs=1e-12)


def test_jsd_empty_set():
    with pytest.raises(ValueError):
        jsd([], [np.zeros((2, 3))])


# -- COV / MMD --------------------------------------------------------------

def test_cov_mmd_match_loops(rng):
    for dist, oracle in (("cd", oracles.chamfer), ("emd", oracles.emd_permutations)):
        for _ in range(5):
            A = [rng.normal(size=(5, 3)) for _ in range(int(rng.integers(1, 8)))]
            B = [rng.normal(size=(5, 3)) for _ in range(int(rng.integers(1, 8)))]
            assert coverage(A, B, dist) == oracles.coverage(A, B, oracle)
            assert mmd(A, B, dist) == pytest.approx(oracles.mmd(A, B, oracle), abs=1e-9)


def test_cov_mmd_identical_sets(rng):
    A = [rng.normal(size=(16, 3)) for _ in range(6)]
    assert coverage(A, A) == 1.0
    assert mmd(A, A) == 0.0


def test_mmd_zero_when_b_inside_a(rng):
    A = [rng.normal(size=(8, 3)) for _ in range(7)]
    assert mmd(A, A[2:5]) == 0.0
    assert mmd(A, A[2:5], "emd") == 0.0


def test_cov_counts_unique_marks():
    # every member of A is closest to B[0]
    A = [np.zeros((3, 3)), np.full((3, 3), 0.01)]
    B = [np.zeros((3, 3)), np.full((3, 3), 5.0)]
    assert coverage(A, B) == 0.5


def test_pairwise_parallel_equals_serial(rng):
    A = [rng.normal(size=(10, 3)) for _ in range(5)]
    B = [rng.normal(size=(10, 3)) for _ in range(4)]
    serial = pairwise_distances(A, B, "emd")
    assert np.array_equal(serial, pairwise_distances(A, B, "emd", workers=4))
    assert serial.shape == (5, 4)


# -- reports ----------------------------------------------------------------

def test_report_roundtrip():
    r = MetricReport("mmd-cd", 0.1 + 0.2, {"dist": "cd", "n_a": 100, "grid_res": 28, "tol": 0.01})
    line = r.format()
    assert line.startswith("metric=mmd-cd value=0.30000000000000004 ")
    assert MetricReport.parse(line) == r


@given(st.floats(0, 1e6, allow_nan=False), st.integers(0, 1000))
def test_report_roundtrip_property(value, k):
    r = MetricReport("jsd", value, {"grid_res": k})
    assert MetricReport.parse(r.format()) == r


def test_report_rejects_bad_input():
    with pytest.raises(ValueError):
        MetricReport("x", -1.0)
    with pytest.raises(ValueError):
        MetricReport.parse("value=1.0")
    with pytest.raises(ValueError):
        MetricReport.parse("metric=x value=1 junk")
    with pytest.raises(ValueError):
        MetricReport("x", 1.0, {"note": "two words"}).format()
