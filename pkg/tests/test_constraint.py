import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfcfc.constraint import (CcfcConstraint, VfcContext, ccfc_for_path, ccfc_second_order,
                              feasibility_residual, vfc_b, vfc_beta)
from vfcfc.geometry import builtin_path, make_selection_matrix
from vfcfc.vectorfield import GvfGains, chi_s, w_dot

SIN = builtin_path("sinusoid")
CTX = VfcContext(make_selection_matrix([1, 2], 3), SIN, GvfGains.uniform(1, 2), np.eye(2))
Q0, QD0, W0 = np.array([2.2, 0.2, 1.5]), np.array([1.0, 0.0, 0.0]), 0.1


def test_context_rejects_bad_P():
    A = make_selection_matrix([1, 2], 3)
    k = GvfGains.uniform(1, 2)
    with pytest.raises(ValueError):
        VfcContext(A, SIN, k, np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        VfcContext(A, SIN, k, -np.eye(2))
    with pytest.raises(ValueError):
        VfcContext(A, SIN, k, np.eye(3))


def test_beta_at_pvtol_initial_state():
    np.testing.assert_allclose(vfc_beta(CTX, Q0, QD0, W0), [2.1, -0.89483], atol=1e-5)


def test_beta_zero_on_constraint_and_affine():
    xi = CTX.xi(Q0, W0)
    qd = np.r_[chi_s(SIN, CTX.gains, xi), 7.0]
    np.testing.assert_allclose(vfc_beta(CTX, Q0, qd, W0), 0, atol=1e-15)
    v = np.array([0.3, -1.2])
    np.testing.assert_allclose(vfc_beta(CTX, Q0, QD0 + CTX.A.transpose_apply(v), W0),
                               vfc_beta(CTX, Q0, QD0, W0) + v, atol=1e-14)


def test_b_at_pvtol_initial_state():
    wd = 1 + 2.1 + (0.2 - math.sin(0.1)) * math.cos(0.1)
    expected = [-1 + 1 * wd, -math.sin(0.1) * wd + math.cos(0.1) * wd]
    np.testing.assert_allclose(vfc_b(CTX, Q0, QD0, W0), expected, atol=1e-14)
    assert vfc_b(CTX, Q0, QD0, W0)[0] == pytest.approx(2.19967, abs=1e-5)


def test_b_on_path_at_rest():
    p = builtin_path("lemniscate")
    ctx = VfcContext(make_selection_matrix([1, 2], 3), p, GvfGains.uniform(1, 2), np.eye(2))
    w = 0.7
    q = np.r_[p.eval(w), 0.0]
    dchi_dw = p.d2(w) + p.d1(w)          # (-1)^2 f'' + k f' with k = 1; w_dot = 1 on the path
    np.testing.assert_allclose(vfc_b(ctx, q, np.zeros(3), w), dchi_dw, atol=1e-13)


def test_b_matches_derivative_along_arc():
    """b equals d/dt chi_s(A q(t), w(t)) along a smooth arc with w driven by its own law."""
    rng = np.random.default_rng(0)
    for _ in range(10):
        q, qd, w = rng.normal(size=3), rng.normal(size=3), rng.uniform(-3, 3)
        h = 1e-6
        xi = CTX.xi(q, w)
        wd = w_dot(SIN, CTX.gains, xi)
        plus = chi_s(SIN, CTX.gains, CTX.xi(q + h * qd, w + h * wd))
        minus = chi_s(SIN, CTX.gains, CTX.xi(q - h * qd, w - h * wd))
        np.testing.assert_allclose((plus - minus) / (2 * h), vfc_b(CTX, q, qd, w), atol=1e-4)


def test_dimension_errors():
    with pytest.raises(ValueError):
        vfc_beta(CTX, Q0[:2], QD0, W0)
    with pytest.raises(ValueError):
        vfc_b(CTX, Q0, QD0[:2], W0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(-20, 20))
def test_vfc_always_feasible(q, qd, w):
    b = vfc_b(CTX, np.array(q), np.array(qd), w)
    assert feasibility_residual(CTX.A.entries, b) < 1e-10


def test_feasibility_residual_full_row_rank():
    rng = np.random.default_rng(1)
    for _ in range(100):
        A = rng.normal(size=(2, 3))
        assert feasibility_residual(A, rng.normal(size=2) * 10) < 1e-10


def test_ccfc_cassini_probe():
    c = ccfc_for_path("cassini", {"ra": 3.0, "rb": 3.15}, 1.0)
    A, b = ccfc_second_order(c, [0.0, 0.0], [1.0, 0.0])
    np.testing.assert_array_equal(A, [[0.0, 0.0]])
    assert b[0] == pytest.approx(36.0, abs=1e-12)
    assert feasibility_residual(A, b) == pytest.approx(36.0, abs=1e-9)


def test_ccfc_lemniscate_probe():
    c = ccfc_for_path("lemniscate", {}, 1.0)
    assert feasibility_residual(*ccfc_second_order(c, [0.0, 0.0], [1.0, 0.0])) == pytest.approx(2.0, abs=1e-9)


def test_ccfc_feasible_at_rest_origin():
    c = ccfc_for_path("cassini", {}, 1.0)
    assert feasibility_residual(*ccfc_second_order(c, [0.0, 0.0], [0.0, 0.0])) == 0.0


def test_ccfc_sinusoid_example():
    c = ccfc_for_path("sinusoid", {}, 1.0)
    A, b = ccfc_second_order(c, [0.0, 0.0], [1.0, 1.0])
    np.testing.assert_allclose(A, [[-1.0, 1.0]])
    np.testing.assert_allclose(b, [0.0], atol=1e-15)


def test_ccfc_linear_psi_zero_velocity():
    c = CcfcConstraint(lambda p: np.array([p[0] + 2 * p[1]]), lambda p: np.array([[1.0, 2.0]]),
                       lambda p: np.zeros((1, 2, 2)), np.eye(1))
    A, b = ccfc_second_order(c, [0.3, 0.4], [0.0, 0.0])
    np.testing.assert_array_equal(b, [0.0])


@pytest.mark.parametrize("name", ["sinusoid", "cassini", "lemniscate"])
def test_ccfc_derivatives_match_finite_differences(name):
    c = ccfc_for_path(name, {}, 1.0)
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(20):
        p = rng.normal(size=2)
        G = np.atleast_2d(c.grad_psi(p))
        H = np.asarray(c.hess_psi(p)).reshape(1, 2, 2)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (c.psi(p + e) - c.psi(p - e)) / (2 * h)
            assert abs(fd[0] - G[0, j]) <= 1e-5 * max(1.0, abs(G[0, j]))
            fdg = (np.atleast_2d(c.grad_psi(p + e)) - np.atleast_2d(c.grad_psi(p - e)))[0] / (2 * h)
            np.testing.assert_allclose(fdg, H[0, :, j], rtol=1e-5, atol=1e-5)


def test_ccfc_rejects_bad_lambda():
    with pytest.raises(ValueError):
        ccfc_for_path("cassini", {}, -1.0)
