import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from vfcfc.geometry import (PATH_NAMES, builtin_path, dist_to_path, dist_to_path_many,
                            make_selection_matrix, phi)

ALL_PATHS = [builtin_path(n) for n in PATH_NAMES]


# ---------------------------------------------------------------- selection matrices

def test_selection_pvtol_rows():
    A = make_selection_matrix([1, 2], 3)
    np.testing.assert_array_equal(A.entries, [[1, 0, 0], [0, 1, 0]])


def test_selection_identity_and_single_row():
    np.testing.assert_array_equal(make_selection_matrix([1, 2, 3], 3).entries, np.eye(3))
    np.testing.assert_array_equal(make_selection_matrix([2], 3).entries, [[0, 1, 0]])


@pytest.mark.parametrize("idx", [[1, 1], [2, 1], [0, 1], [1, 4], [], [1, 2, 3, 4]])
def test_selection_rejects_bad_indices(idx):
    with pytest.raises(ValueError):
        make_selection_matrix(idx, 3)


@given(st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.integers(1, n), min_size=1, max_size=n, unique=True))))
def test_selection_properties(args):
    n, idx = args
    idx = sorted(idx)
    A = make_selection_matrix(idx, n)
    E = A.entries
    assert set(np.unique(E)) <= {0.0, 1.0}
    np.testing.assert_array_equal(E @ E.T, np.eye(len(idx)))
    q = np.arange(1.0, n + 1) * 1.7
    np.testing.assert_array_equal(A.apply(q), q[np.array(idx) - 1])
    np.testing.assert_array_equal(A.apply(q), E @ q)
    v = np.linspace(-1, 1, len(idx))
    np.testing.assert_array_equal(A.transpose_apply(v), E.T @ v)


# ---------------------------------------------------------------- catalog

def test_cassini_at_zero():
    p = builtin_path("cassini", {"ra": 3.0, "rb": 3.15})
    x, y = p.eval(0.0)
    assert x == pytest.approx(math.sqrt(9 + math.sqrt(3.15**4)), abs=1e-12)
    assert x == pytest.approx(4.3500, abs=1e-4) and y == 0.0
    assert abs((x**2 + y**2 + 9) ** 2 - 36 * x**2 - 3.15**4) < 1e-9


def test_cassini_rejects_rb_le_ra():
    with pytest.raises(ValueError):
        builtin_path("cassini", {"ra": 3.0, "rb": 3.0})


def test_torus_knot_and_sinusoid_points():
    np.testing.assert_allclose(builtin_path("torus_knot").eval(0.0), [1.2, 2.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(builtin_path("sinusoid").eval(math.pi / 2), [math.pi / 2, 1.0])


def test_unknown_path_lists_catalog():
    with pytest.raises(ValueError, match="torus_knot"):
        builtin_path("spiral")


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_implicit_residuals(path):
    w = np.random.default_rng(1).uniform(*path.w_window, 1000)
    assert np.max(np.abs(path.implicit(path.eval(w)))) < 1e-8


def test_lemniscate_and_cylinder_equations_independently():
    w = np.linspace(0, 2 * np.pi, 1000)
    x, y = builtin_path("lemniscate").eval(w).T
    assert np.max(np.abs((x**2 + y**2) ** 2 - (x**2 - y**2))) < 1e-12
    x, y, z = builtin_path("cylinder_intersection").eval(w).T
    assert np.max(np.abs(x**2 + (z - 1.0) ** 2 - 0.25)) < 1e-12
    assert np.max(np.abs((y - 2.5) ** 2 + z**2 - 2.25)) < 1e-12


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_derivatives_match_finite_differences(path):
    rng = np.random.default_rng(2)
    lo, hi = path.w_window
    w = rng.uniform(lo + 0.01, hi - 0.01, 200)
    h = 1e-5
    fd1 = (path.eval(w + h) - path.eval(w - h)) / (2 * h)
    fd2 = (path.d1(w + h) - path.d1(w - h)) / (2 * h)
    scale1 = np.maximum(np.abs(path.d1(w)), 1.0)
    scale2 = np.maximum(np.abs(path.d2(w)), 1.0)
    assert np.max(np.abs(fd1 - path.d1(w)) / scale1) < 1e-5
    assert np.max(np.abs(fd2 - path.d2(w)) / scale2) < 1e-4


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_tangent_bound(path):
    w = np.linspace(*path.w_window, 100_001)
    assert np.max(np.abs(path.d1(w))) <= path.tangent_bound + 1e-9


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_jet_consistent_with_evaluators(path):
    for w in np.linspace(*path.w_window, 7):
        f, d1, d2 = path.jet_list(float(w))
        np.testing.assert_allclose(f, path.eval(w), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(d1, path.d1(w), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(d2, path.d2(w), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_scalar_and_vector_evaluation_agree(path):
    w = np.linspace(*path.w_window, 11)
    np.testing.assert_allclose(np.array([path.eval(float(x)) for x in w]), path.eval(w), atol=1e-14)


# ---------------------------------------------------------------- phi

def test_phi_examples():
    s = builtin_path("sinusoid")
    np.testing.assert_array_equal(phi(s, [0.0, 0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(phi(s, [2.2, 0.2, 0.1]), [2.1, 0.2 - math.sin(0.1)], atol=1e-15)
    assert phi(s, [2.2, 0.2, 0.1])[1] == pytest.approx(0.10017, abs=1e-5)
    np.testing.assert_allclose(phi(builtin_path("torus_knot"), [1.2, 2, 1, 0]), 0, atol=1e-15)


def test_phi_dimension_mismatch():
    with pytest.raises(ValueError):
        phi(builtin_path("sinusoid"), [1.0, 2.0])


# ---------------------------------------------------------------- distance oracle

def _brute(path, point, n=200_001, window=None):
    lo, hi = window or path.w_window
    w = np.linspace(lo, hi, n)
    d = np.linalg.norm(path.eval(w) - point, axis=1)
    i = int(np.argmin(d))
    res = minimize_scalar(lambda x: np.linalg.norm(path.eval(x) - point),
                          bounds=(w[max(i - 1, 0)], w[min(i + 1, n - 1)]), method="bounded",
                          options={"xatol": 1e-12})
    return min(float(d[i]), float(res.fun))


def test_distance_examples():
    s = builtin_path("sinusoid")
    assert dist_to_path(s, [1.0, math.sin(1.0)]) < 1e-6
    assert dist_to_path(s, [0.0, 2.0]) == pytest.approx(1.5103, abs=1e-3)
    c = builtin_path("cassini", {"ra": 3.0, "rb": 3.15})
    assert dist_to_path(c, c.eval(0.0)) < 1e-6


@pytest.mark.parametrize("path", ALL_PATHS, ids=PATH_NAMES)
def test_path_points_have_zero_distance(path):
    w = np.random.default_rng(3).uniform(*path.w_window, 200)
    assert np.max(dist_to_path_many(path, path.eval(w))) < 1e-6


@pytest.mark.parametrize("name", ["sinusoid", "cassini", "lemniscate", "torus_knot"])
def test_distance_matches_brute_force(name):
    path = builtin_path(name)
    rng = np.random.default_rng(4)
    base = path.eval(rng.uniform(*path.w_window, 12))
    pts = base + rng.normal(scale=0.4, size=base.shape)
    got = dist_to_path_many(path, pts)
    want = np.array([_brute(path, p) for p in pts])
    np.testing.assert_allclose(got, want, atol=1e-7)


def test_distance_monotone_in_resolution():
    path = builtin_path("lemniscate")
    pts = np.random.default_rng(5).normal(scale=0.6, size=(40, 2))
    coarse = dist_to_path_many(path, pts, resolution=100)
    fine = dist_to_path_many(path, pts, resolution=4000)
    assert np.all(fine <= coarse + 1e-8)


def test_distance_empty_window():
    with pytest.raises(ValueError):
        dist_to_path(builtin_path("sinusoid"), [0.0, 0.0], window=(1.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_distance_is_lower_bound_on_sampled_points(x, y):
    path = builtin_path("cassini")
    d = dist_to_path(path, [x, y])
    w = np.linspace(0, 2 * np.pi, 5001)
    assert d <= np.min(np.linalg.norm(path.eval(w) - [x, y], axis=1)) + 1e-9
