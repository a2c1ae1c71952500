import math

import numpy as np
import pytest

from vfcfc.geometry import builtin_path, make_selection_matrix
from vfcfc.plants import (IKDomainError, ManipulatorGeometry, PvtolParams, fk, fk_many,
                          forward_accel, ik, joint_path_from_task, manipulator,
                          mechanical_energy, pvtol)
from vfcfc.sim import rk4_step

PV = pvtol()
ARM = manipulator()
GEOM = ManipulatorGeometry()
RNG = np.random.default_rng(7)


# ---------------------------------------------------------------- PVTOL

def test_pvtol_free_fall_and_hover():
    np.testing.assert_allclose(forward_accel(PV, "nominal", [0, 0, 0], [0, 0, 0], [0, 0]), [0, -9.8, 0])
    np.testing.assert_allclose(forward_accel(PV, "nominal", [1, 2, 0], [0, 0, 0], [9.8, 0]), 0,
                               atol=1e-15)


def test_pvtol_nominal_gravity_and_input_matrix():
    np.testing.assert_allclose(PV.g_bar(np.array([0.3, 0.1, 0.7])), [0, 9.8, 0])
    A = make_selection_matrix([1, 2], 3)
    for th in RNG.uniform(-np.pi, np.pi, 50):
        q = np.array([0.0, 0.0, th])
        ADB = np.linalg.inv(PV.M_bar(q))[A.index0] @ PV.B_bar(q)
        s, c = math.sin(th), math.cos(th)
        np.testing.assert_allclose(ADB, [[-s, c], [c, s]], atol=1e-15)
        assert np.linalg.det(ADB) == pytest.approx(-1.0, abs=1e-12)
        B = PV.B_bar(q)
        np.testing.assert_allclose(B.T @ B, np.diag([1.0, 2.0]), atol=1e-15)


def test_pvtol_det_scales_with_mass():
    sys2 = pvtol({"m_bar": 2.0})
    q = np.array([0.0, 0.0, 0.4])
    ADB = np.linalg.inv(sys2.M_bar(q))[[0, 1]] @ sys2.B_bar(q)
    assert np.linalg.det(ADB) == pytest.approx(-0.25, abs=1e-14)


def test_pvtol_true_mode_mass():
    for t in RNG.uniform(0, 20, 20):
        M, _, g, _ = PV.evaluate([0, 0, 0.2], [0, 0, 0], PV.sigma("true", t))
        m = 1.0 * (1 + 0.3 * math.sin(5 * t))
        assert M[0, 0] == pytest.approx(m, abs=1e-15)
        assert M[2, 2] == pytest.approx(0.5 * (1 + 0.3 * math.sin(7.5 * t)), abs=1e-15)
        np.testing.assert_allclose(g, [-4 * math.sin(2 * t), m * 9.8 - 4 * math.cos(4 * t),
                                       -4 * math.sin(6 * t)], atol=1e-13)


def test_pvtol_uncertainty_signals_bounded():
    sig = np.array([PV.sigma_of_t(t) for t in np.linspace(0, 100, 20001)])
    lo, hi = PV.sigma_bounds
    assert np.all(sig >= lo - 1e-15) and np.all(sig <= hi + 1e-15)
    assert np.max(np.abs(sig[:, 0])) <= 0.3 and np.max(np.abs(sig[:, 2])) <= 4


def test_pvtol_rejects_bad_params():
    with pytest.raises(ValueError):
        pvtol({"m_bar": -1.0})
    with pytest.raises(ValueError):
        pvtol(PvtolParams(dm_rel=1.2))


# ---------------------------------------------------------------- shared system properties

@pytest.mark.parametrize("sys", [PV, ARM], ids=["pvtol", "manipulator"])
def test_list_and_array_evaluators_agree(sys):
    for _ in range(50):
        q, qd = RNG.uniform(-3, 3, 3), RNG.uniform(-2, 2, 3)
        s = sys.sigma_of_t(RNG.uniform(0, 10))
        M, Cqd, g, B = sys.evaluate(q, qd, s)
        np.testing.assert_allclose(M, sys.mass(q, s), rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(Cqd, sys.coriolis(q, qd, s), rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(g, sys.gravity(q, s), rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(B, sys.input_matrix(q, s), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("sys", [PV, ARM], ids=["pvtol", "manipulator"])
def test_inertia_spd_and_true_equals_nominal_at_zero(sys):
    q = RNG.uniform(-np.pi, np.pi, (1000, 3))
    lo, hi = sys.sigma_bounds
    for s in (lo, hi, np.zeros_like(lo)):
        assert np.min(np.linalg.eigvalsh(sys.mass(q, s))) > 0
    zero = np.zeros_like(lo)
    qd = RNG.normal(size=3)
    for a, b in zip(sys.evaluate(q[0], qd, zero),
                    (sys.M_bar(q[0]), sys.Cqd_bar(q[0], qd), sys.g_bar(q[0]), sys.B_bar(q[0]))):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_forward_accel_definition():
    for sys in (PV, ARM):
        q, qd = RNG.normal(size=3), RNG.normal(size=3)
        tau = RNG.normal(size=sys.m_inputs)
        M, Cqd, g, B = sys.evaluate(q, qd, sys.sigma("true", 1.3))
        np.testing.assert_allclose(forward_accel(sys, "true", q, qd, tau, 1.3),
                                   np.linalg.solve(M, B @ tau - Cqd - g), rtol=1e-10, atol=1e-12)


# ---------------------------------------------------------------- manipulator

def test_manipulator_symmetry_and_m33():
    q = RNG.uniform(-np.pi, np.pi, (1000, 3))
    M = ARM.M_bar(q)
    assert np.max(np.abs(M[:, 1, 2] - M[:, 2, 1])) == 0
    M0 = ARM.M_bar(np.array([0.4, 0.0, 0.0]))
    assert M0[2, 2] == pytest.approx(2.0 * 1.0**2)


def test_manipulator_printed_entries():
    q = np.array([0.3, 0.5, -0.9])
    M = ARM.M_bar(q)
    c2, c3, c23 = math.cos(0.5), math.cos(-0.9), math.cos(-0.4)
    m2, m3, J, l1, l2 = 1.0, 2.0, 0.5, 1.0, 1.0
    assert M[0, 0] == pytest.approx(m3 * l2**2 * c23**2 + 2 * m3 * l1 * l2 * c2 * c23
                                    + m2 * m3 * l1**2 * c2**2 + J, abs=1e-14)
    assert M[1, 1] == pytest.approx(m3 * l2**2 + 2 * m3 * l1 * l2 * c3 + (m2 + m3) * l1**2, abs=1e-14)
    assert M[1, 2] == pytest.approx(m3 * l2 * (l1 + l2 * c3), abs=1e-14)
    g = ARM.g_bar(q)
    assert g[2] == pytest.approx(m3 * 9.8 * l2 * c23, abs=1e-13)
    assert g[1] == pytest.approx(m3 * 9.8 * l2 * c23 + (m2 + m3) * 9.8 * l1 * c2, abs=1e-13)


def test_manipulator_rejects_bad_geometry():
    with pytest.raises(ValueError):
        ManipulatorGeometry(l1=0.0)


def _energy_drift(sys, coriolis_override=None, T=1.0, h=1e-4, seed=0):
    rng = np.random.default_rng(seed)
    q, qd = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)

    def f(z, t):
        q, qd = z[:3], z[3:]
        if coriolis_override is None:
            acc = forward_accel(sys, "nominal", q, qd, np.zeros(3), t)
        else:
            acc = np.linalg.solve(sys.M_bar(q), -coriolis_override(q, qd) - sys.g_bar(q))
        return np.r_[qd, acc]

    z = np.r_[q, qd]
    E0 = mechanical_energy(sys, z[:3], z[3:])
    for i in range(int(round(T / h))):
        z = rk4_step(f, z, i * h, h)
    return abs(mechanical_energy(sys, z[:3], z[3:]) - E0) / T


def _christoffel_cqd(sys, q, qd, h=1e-6):
    """C(q, qd) qd built from the inertia matrix alone."""
    dM = np.empty((3, 3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        dM[:, :, k] = (sys.M_bar(q + e) - sys.M_bar(q - e)) / (2 * h)
    return np.einsum("ijk,j,k->i", dM, qd, qd) - 0.5 * np.einsum("jki,j,k->i", dM, qd, qd)


def test_manipulator_energy_audit():
    """Conservative subsystem (no input, no uncertainty) must keep its energy."""
    assert _energy_drift(ARM) < 1e-3


def test_energy_audit_passes_with_inertia_consistent_coriolis():
    """The integrator and the potential are sound: with C rebuilt from M the energy is conserved."""
    assert _energy_drift(ARM, lambda q, qd: _christoffel_cqd(ARM, q, qd), T=0.2) < 1e-3


# ---------------------------------------------------------------- kinematics

def test_ik_example():
    np.testing.assert_allclose(ik([0.0, 2.0, 0.0], GEOM), [0.0, math.pi / 3, 0.0], atol=1e-12)


def test_ik_unreachable():
    with pytest.raises(IKDomainError):
        ik([0.0, 3.0, 0.0], GEOM)


def _reachable_points(n, geom, rng):
    pts = []
    while len(pts) < n:
        p = np.array([rng.uniform(-1, 1), rng.uniform(0.2, 2), rng.uniform(0.05, 1.5)])
        try:
            ik(p, geom)
        except IKDomainError:
            continue
        pts.append(p)
    return np.array(pts)


def test_ik_fk_round_trip():
    rng = np.random.default_rng(11)
    pts = _reachable_points(500, GEOM, rng)
    theta = ik(pts, GEOM)
    rec, ok = fk_many(theta, GEOM, seed=pts + rng.normal(scale=0.02, size=pts.shape))
    assert ok.all()
    assert np.max(np.abs(ik(rec, GEOM) - theta)) < 1e-8
    np.testing.assert_allclose(rec, pts, atol=1e-6)


def test_fk_single_and_failure():
    p = np.array([0.2, 1.2, 0.6])
    np.testing.assert_allclose(fk(ik(p, GEOM), GEOM, p + 0.01), p, atol=1e-9)
    pts, ok = fk_many(np.array([[0.0, 9.0, 9.0]]), GEOM, seed=[[0.0, 1.0, 0.5]])
    assert not ok[0] and np.all(np.isnan(pts[0]))


def _constant_path(point):
    from vfcfc.geometry import ParametricPath
    point = np.asarray(point, float)

    def ev(w):
        return np.broadcast_to(point, np.shape(w) + (3,)).copy()

    def zero(w):
        return np.zeros(np.shape(w) + (3,))

    return ParametricPath("const", 3, ev, zero, zero, (0.0, 1.0), 0.0)


def test_joint_path_of_constant_point():
    jp = joint_path_from_task(_constant_path([0.2, 1.2, 0.6]), GEOM)
    w = np.linspace(0, 1, 11)
    np.testing.assert_allclose(jp.eval(w), np.broadcast_to(ik([0.2, 1.2, 0.6], GEOM), (11, 3)))
    np.testing.assert_allclose(jp.d1(w), 0, atol=1e-12)


def test_joint_path_derivatives_self_consistent():
    geom = ManipulatorGeometry(l1=2.1, l2=1.4)
    jp = joint_path_from_task(builtin_path("torus_knot"), geom)
    w = np.random.default_rng(3).uniform(0, 2 * np.pi, 100)
    h = 1e-4
    fd = (jp.eval(w + h) - jp.eval(w - h)) / (2 * h)
    assert np.max(np.abs(fd - jp.d1(w))) < 1e-4
    f, d1, d2 = jp.jet_list(1.0)
    np.testing.assert_allclose(d1, jp.d1(1.0), atol=1e-12)
    np.testing.assert_allclose(d2, jp.d2(1.0), rtol=1e-3, atol=1e-3)


def test_cylinder_path_reachable_with_unit_links():
    joint_path_from_task(builtin_path("cylinder_intersection"), GEOM)


def test_unreachable_task_path_rejected():
    with pytest.raises(IKDomainError):
        joint_path_from_task(_constant_path([0.0, 3.0, 0.0]), GEOM)
