"""Uncertain mechanical systems M qdd + C qd + g = B tau.

Each system is described by evaluators that take an explicit uncertainty
vector ``sigma``; ``sigma = 0`` gives the nominal model.  The true plant
evaluates ``sigma_of_t(t)``.  Evaluators broadcast over leading axes
(``q[..., n]``, ``sigma[..., p]``) so assumption checks can run on grids.

The manipulator's C qdot is stored directly as a vector, exactly as listed
for the 3-link arm; its inertia, Coriolis and gravity expressions are
transcribed literally, including the ``m2*m3*l1^2*c2^2`` term of m12.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import math

import numpy as np

from . import _small
from .geometry import ParametricPath


class IKDomainError(ValueError):
    """A task-space point lies outside the domain of the inverse kinematics."""


class SingularInertiaError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MechanicalSystem:
    name: str
    n: int
    m_inputs: int
    mass: Callable
    coriolis: Callable      # (q, qdot, sigma) -> C(q, qdot, sigma) qdot
    gravity: Callable
    input_matrix: Callable
    sigma_of_t: Callable[[float], np.ndarray]
    sigma_bounds: tuple[np.ndarray, np.ndarray]
    sigma_names: tuple[str, ...]
    potential: Callable | None = None
    params: dict = field(default_factory=dict)
    # optional single-state shortcut on float lists: (q, qdot, sigma) -> (M, C qdot, g, B)
    evaluate_fn: Callable | None = None

    @cached_property
    def sigma_zero(self) -> np.ndarray:
        z = np.zeros(len(self.sigma_names))
        z.flags.writeable = False
        return z

    def terms(self, q, qdot, sigma):
        """(M, C qdot, g, B) at one state as nested lists; inputs are float sequences."""
        if self.evaluate_fn is not None:
            return self.evaluate_fn(q, qdot, sigma)
        q, qdot, sigma = (np.asarray(v, float) for v in (q, qdot, sigma))
        return (self.mass(q, sigma).tolist(), self.coriolis(q, qdot, sigma).tolist(),
                self.gravity(q, sigma).tolist(), self.input_matrix(q, sigma).tolist())

    def evaluate(self, q, qdot, sigma):
        """(M, C qdot, g, B) at one state as arrays."""
        return tuple(np.array(v, dtype=float) for v in self.terms(
            np.asarray(q, float).tolist(), np.asarray(qdot, float).tolist(),
            np.asarray(sigma, float).tolist()))

    @cached_property
    def sigma_zero_list(self) -> list[float]:
        return [0.0] * len(self.sigma_names)

    def sigma(self, mode: str, t: float) -> np.ndarray:
        if mode == "nominal":
            return self.sigma_zero
        if mode == "true":
            return self.sigma_of_t(t)
        raise ValueError(f"plant mode must be 'nominal' or 'true', got {mode!r}")

    # nominal evaluators (bar quantities)
    def M_bar(self, q):
        return self.mass(q, self.sigma_zero)

    def Cqd_bar(self, q, qdot):
        return self.coriolis(q, qdot, self.sigma_zero)

    def g_bar(self, q):
        return self.gravity(q, self.sigma_zero)

    def B_bar(self, q):
        return self.input_matrix(q, self.sigma_zero)


def forward_accel(sys: MechanicalSystem, mode: str, q, qdot, tau, t: float = 0.0) -> np.ndarray:
    """qdd = M^{-1} (B tau - C qdot - g) for the selected model."""
    q, qdot = np.asarray(q, float), np.asarray(qdot, float)
    return np.array(accel_lists(sys, sys.sigma(mode, t).tolist(), q.tolist(), qdot.tolist(),
                                np.asarray(tau, float).tolist(), t))


def accel_lists(sys: MechanicalSystem, sigma, q, qdot, tau, t: float = 0.0) -> list[float]:
    M, Cqd, g, B = sys.terms(q, qdot, sigma)
    try:
        Minv = _small.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError(f"inertia matrix singular at q={q}, t={t}") from exc
    Bt = _small.matvec(B, tau)
    return _small.matvec(Minv, [u - c - gi for u, c, gi in zip(Bt, Cqd, g)])


def mechanical_energy(sys: MechanicalSystem, q, qdot, sigma=None) -> float:
    if sys.potential is None:
        raise ValueError(f"{sys.name} has no potential energy function")
    s = sys.sigma_zero if sigma is None else sigma
    return float(0.5 * qdot @ sys.mass(q, s) @ qdot + sys.potential(q, s))


# --------------------------------------------------------------------------
# PVTOL aircraft
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PvtolParams:
    m_bar: float = 1.0
    J_bar: float = 0.5
    g0: float = 9.8
    dm_rel: float = 0.3
    dJ_rel: float = 0.3
    dist_amp: tuple[float, float, float] = (4.0, 4.0, 4.0)


def pvtol(params: PvtolParams | dict | None = None) -> MechanicalSystem:
    """Planar VTOL aircraft, q = (x, y, theta), tau = (thrust, roll torque).

    sigma = (dm, dJ, d_x, d_y, d_theta).
    """
    p = params if isinstance(params, PvtolParams) else PvtolParams(**(params or {}))
    if min(p.m_bar, p.J_bar, p.g0) <= 0:
        raise ValueError("pvtol requires m_bar, J_bar, g0 > 0")
    if not (0 <= p.dm_rel < 1 and 0 <= p.dJ_rel < 1):
        raise ValueError("relative mass/inertia uncertainty must lie in [0, 1)")
    ax, ay, at = p.dist_amp

    def mass(q, sigma):
        q, sigma = np.asarray(q, float), np.asarray(sigma, float)
        m = p.m_bar + sigma[..., 0] + 0.0 * q[..., 0]
        J = p.J_bar + sigma[..., 1] + 0.0 * q[..., 0]
        out = np.zeros(m.shape + (3, 3))
        out[..., 0, 0] = m
        out[..., 1, 1] = m
        out[..., 2, 2] = J
        return out

    def coriolis(q, qdot, sigma):
        return np.zeros(np.broadcast_shapes(np.shape(q), np.shape(qdot)))

    def gravity(q, sigma):
        q, sigma = np.asarray(q, float), np.asarray(sigma, float)
        m = p.m_bar + sigma[..., 0]
        return np.stack(np.broadcast_arrays(-sigma[..., 2], m * p.g0 - sigma[..., 3],
                                            -sigma[..., 4] + 0.0 * q[..., 0]), axis=-1)

    def input_matrix(q, sigma):
        th = np.asarray(q, float)[..., 2]
        s, c = np.sin(th), np.cos(th)
        out = np.zeros(th.shape + (3, 2))
        out[..., 0, 0], out[..., 0, 1] = -s, c
        out[..., 1, 0], out[..., 1, 1] = c, s
        out[..., 2, 1] = 1.0
        return out

    def sigma_of_t(t):
        t = float(t)
        return np.array([p.dm_rel * p.m_bar * math.sin(5 * t), p.dJ_rel * p.J_bar * math.sin(7.5 * t),
                         ax * math.sin(2 * t), ay * math.cos(4 * t), at * math.sin(6 * t)])

    def potential(q, sigma):
        return (p.m_bar + sigma[0]) * p.g0 * q[1]

    def evaluate(q, qdot, sigma):
        dm, dJ, dx, dy, dth = sigma
        m, J = p.m_bar + dm, p.J_bar + dJ
        s, c = math.sin(q[2]), math.cos(q[2])
        return ([[m, 0.0, 0.0], [0.0, m, 0.0], [0.0, 0.0, J]], [0.0, 0.0, 0.0],
                [-dx, m * p.g0 - dy, -dth], [[-s, c], [c, s], [0.0, 1.0]])

    hi = np.array([p.dm_rel * p.m_bar, p.dJ_rel * p.J_bar, ax, ay, at])
    return MechanicalSystem(
        name="pvtol", n=3, m_inputs=2, mass=mass, coriolis=coriolis, gravity=gravity,
        input_matrix=input_matrix, sigma_of_t=sigma_of_t, sigma_bounds=(-hi, hi),
        sigma_names=("dm", "dJ", "d_x", "d_y", "d_theta"), potential=potential,
        params=p.__dict__.copy(), evaluate_fn=evaluate,
    )


# --------------------------------------------------------------------------
# 3-link space manipulator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ManipulatorGeometry:
    l1: float = 1.0
    l2: float = 1.0
    J_bar: float = 0.5
    m2_bar: float = 1.0
    m3_bar: float = 2.0
    g0: float = 9.8

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v <= 0:
                raise ValueError(f"manipulator parameter {k} must be positive, got {v}")


@dataclass(frozen=True)
class ManipulatorUncertainty:
    J_rel: float = 0.1
    m2_rel: float = 0.1
    m3_rel: float = 0.1
    dist_amp: tuple[float, float, float] = (3.0, 3.0, 3.0)


def manipulator(geom: ManipulatorGeometry | dict | None = None,
                uncertainty: ManipulatorUncertainty | dict | None = None) -> MechanicalSystem:
    """Fully actuated 3-link arm, q = (theta1, theta2, theta3), B = I.

    sigma = (dJ, dm2, dm3, d1, d2, d3).
    """
    g = geom if isinstance(geom, ManipulatorGeometry) else ManipulatorGeometry(**(geom or {}))
    u = (uncertainty if isinstance(uncertainty, ManipulatorUncertainty)
         else ManipulatorUncertainty(**(uncertainty or {})))
    l1, l2, g0 = g.l1, g.l2, g.g0

    def _params(sigma):
        sigma = np.asarray(sigma, float)
        return g.J_bar + sigma[..., 0], g.m2_bar + sigma[..., 1], g.m3_bar + sigma[..., 2]

    def mass(q, sigma):
        q = np.asarray(q, float)
        J, m2, m3 = _params(sigma)
        c2, c3, c23 = np.cos(q[..., 1]), np.cos(q[..., 2]), np.cos(q[..., 1] + q[..., 2])
        m12 = m3 * l2**2 * c23**2 + 2 * m3 * l1 * l2 * c2 * c23 + m2 * m3 * l1**2 * c2**2 + J
        m22 = m3 * l2**2 + 2 * m3 * l1 * l2 * c3 + (m2 + m3) * l1**2
        m23 = m3 * l2 * (l1 + l2 * c3)
        m33 = m3 * l2**2 + 0.0 * c3
        shape = np.broadcast_shapes(np.shape(m12), np.shape(m22), np.shape(m33))
        out = np.zeros(shape + (3, 3))
        out[..., 0, 0] = m12
        out[..., 1, 1] = m22
        out[..., 1, 2] = m23
        out[..., 2, 1] = m23
        out[..., 2, 2] = m33
        return out

    def coriolis(q, qdot, sigma):
        q, qd = np.asarray(q, float), np.asarray(qdot, float)
        _, m2, m3 = _params(sigma)
        t2, t3 = q[..., 1], q[..., 2]
        d1, d2, d3 = qd[..., 0], qd[..., 1], qd[..., 2]
        s2, c2, s3, c3 = np.sin(t2), np.cos(t2), np.sin(t3), np.cos(t3)
        s23, c23 = np.sin(t2 + t3), np.cos(t2 + t3)
        a = m3 * l2**2
        b = m3 * l1 * l2
        e = (m2 + m3) * l1**2
        C1 = (-2 * a * d1 * d2 * s23 * c23 - 2 * a * d1 * d3 * s23 * c23
              - 2 * b * d1 * d2 * s2 * c23 - 2 * b * d1 * d2 * c2 * s23
              - 2 * b * d1 * d3 * c2 * s23 - 2 * e * d1 * d2 * s2 * c2)
        C2 = (a * d1**2 * s23 * c23 + b * d2**2 * s3 + b * d2**2 * c2 * s23
              - b * d1**2 * c23**2 * s3 - b * (d2 + d3) ** 2 * s3
              + b * d1**2 * s23 * c23 * c3 + e * d1**2 * s2 * c2)
        C3 = a * d1**2 * s23 * c23 + b * d2**2 * s3 + b * d1**2 * c2 * s23
        return np.stack(np.broadcast_arrays(C1, C2, C3), axis=-1)

    def gravity(q, sigma):
        q, sigma = np.asarray(q, float), np.asarray(sigma, float)
        _, m2, m3 = _params(sigma)
        c2, c23 = np.cos(q[..., 1]), np.cos(q[..., 1] + q[..., 2])
        g2 = m3 * g0 * l2 * c23 + (m2 + m3) * g0 * l1 * c2
        g3 = m3 * g0 * l2 * c23
        return np.stack(np.broadcast_arrays(sigma[..., 3], g2 + sigma[..., 4], g3 + sigma[..., 5]),
                        axis=-1)

    def input_matrix(q, sigma):
        shape = np.broadcast_shapes(np.shape(q)[:-1], np.shape(sigma)[:-1])
        return np.broadcast_to(np.eye(3), shape + (3, 3)).copy()

    def sigma_of_t(t):
        t = float(t)
        a1, a2, a3 = u.dist_amp
        return np.array([u.J_rel * g.J_bar * math.sin(7.5 * t), u.m2_rel * g.m2_bar * math.sin(5 * t),
                         u.m3_rel * g.m3_bar * math.cos(5 * t),
                         a1 * math.sin(2 * t), a2 * math.cos(4 * t), a3 * math.sin(6 * t)])

    def potential(q, sigma):
        _, m2, m3 = _params(sigma)
        return m3 * g0 * l2 * np.sin(q[1] + q[2]) + (m2 + m3) * g0 * l1 * np.sin(q[1])

    def evaluate(q, qdot, sigma):
        # scalar transcription of mass/coriolis/gravity above
        dJ, dm2, dm3, e1, e2, e3 = sigma
        J, m2, m3 = g.J_bar + dJ, g.m2_bar + dm2, g.m3_bar + dm3
        t2, t3 = q[1], q[2]
        d1, d2, d3 = qdot
        s2, c2, s3, c3 = math.sin(t2), math.cos(t2), math.sin(t3), math.cos(t3)
        s23, c23 = math.sin(t2 + t3), math.cos(t2 + t3)
        m12 = m3 * l2**2 * c23**2 + 2 * m3 * l1 * l2 * c2 * c23 + m2 * m3 * l1**2 * c2**2 + J
        m22 = m3 * l2**2 + 2 * m3 * l1 * l2 * c3 + (m2 + m3) * l1**2
        m23 = m3 * l2 * (l1 + l2 * c3)
        m33 = m3 * l2**2
        a, b, e = m3 * l2**2, m3 * l1 * l2, (m2 + m3) * l1**2
        C1 = (-2 * a * d1 * d2 * s23 * c23 - 2 * a * d1 * d3 * s23 * c23
              - 2 * b * d1 * d2 * s2 * c23 - 2 * b * d1 * d2 * c2 * s23
              - 2 * b * d1 * d3 * c2 * s23 - 2 * e * d1 * d2 * s2 * c2)
        C2 = (a * d1**2 * s23 * c23 + b * d2**2 * s3 + b * d2**2 * c2 * s23
              - b * d1**2 * c23**2 * s3 - b * (d2 + d3) ** 2 * s3
              + b * d1**2 * s23 * c23 * c3 + e * d1**2 * s2 * c2)
        C3 = a * d1**2 * s23 * c23 + b * d2**2 * s3 + b * d1**2 * c2 * s23
        g3 = m3 * g0 * l2 * c23
        g2 = g3 + (m2 + m3) * g0 * l1 * c2
        return ([[m12, 0.0, 0.0], [0.0, m22, m23], [0.0, m23, m33]], [C1, C2, C3],
                [e1, g2 + e2, g3 + e3], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

    hi = np.array([u.J_rel * g.J_bar, u.m2_rel * g.m2_bar, u.m3_rel * g.m3_bar, *u.dist_amp])
    return MechanicalSystem(
        name="manipulator", n=3, m_inputs=3, mass=mass, coriolis=coriolis, gravity=gravity,
        input_matrix=input_matrix, sigma_of_t=sigma_of_t, sigma_bounds=(-hi, hi),
        sigma_names=("dJ", "dm2", "dm3", "d_theta1", "d_theta2", "d_theta3"),
        potential=potential, params={**g.__dict__, "uncertainty": u.__dict__.copy()},
        evaluate_fn=evaluate,
    )


# --------------------------------------------------------------------------
# kinematics
# --------------------------------------------------------------------------

def _ik_raw(point, geom: ManipulatorGeometry):
    p = np.asarray(point, float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho2 = x**2 + y**2
    r2 = rho2 + z**2
    r = np.sqrt(r2)
    a2 = (r2 - geom.l1**2 - geom.l2**2) / (2 * geom.l1 * r)
    a3 = (r2 - geom.l1**2 - geom.l2**2) / (2 * geom.l1 * geom.l2)
    elev = np.sqrt(rho2 / r2)
    return np.arctan(x / y), a2, elev, a3


def ik(point, geom: ManipulatorGeometry) -> np.ndarray:
    """Joint angles of an end-effector point, evaluated literally from the arm's formula."""
    th1, a2, elev, a3 = _ik_raw(point, geom)
    bad = (np.abs(a2) > 1) | (np.abs(a3) > 1) | ~np.isfinite(th1)
    if np.any(bad):
        pts = np.asarray(point, float).reshape(-1, 3)[np.ravel(bad)]
        raise IKDomainError(f"point(s) outside the IK domain, e.g. {pts[0].tolist()}")
    return np.stack([th1, np.arccos(a2) + np.arccos(np.minimum(elev, 1.0)), np.arccos(a3)],
                    axis=-1)


def _ik_nan(point, geom):
    th1, a2, elev, a3 = _ik_raw(point, geom)
    with np.errstate(invalid="ignore"):
        out = np.stack([th1, np.arccos(a2) + np.arccos(np.minimum(elev, 1.0)), np.arccos(a3)],
                       axis=-1)
    return out


def _fk_closed(theta, geom: ManipulatorGeometry):
    """Algebraic inverse of ``ik`` on its image (y > 0, z >= 0 branch)."""
    th1, th2, th3 = theta[..., 0], theta[..., 1], theta[..., 2]
    c3 = np.cos(th3)
    r = np.sqrt(geom.l1**2 + geom.l2**2 + 2 * geom.l1 * geom.l2 * c3)
    elev = th2 - np.arccos(geom.l2 * c3 / r)
    rho = r * np.cos(elev)
    return np.stack([rho * np.sin(th1), rho * np.cos(th1), r * np.sin(elev)], axis=-1)


def fk_many(theta, geom: ManipulatorGeometry, seed, tol: float = 1e-12, max_iter: int = 60):
    """Invert ``ik``: algebraic inverse first, damped Newton from ``seed`` where that misses.

    Returns ``(points, converged)``; rows that fail to converge are NaN.
    """
    theta = np.atleast_2d(np.asarray(theta, float))
    p = np.array(np.broadcast_to(np.atleast_2d(np.asarray(seed, float)), theta.shape))
    N = theta.shape[0]
    h = 1e-7
    with np.errstate(invalid="ignore", divide="ignore"):
        res = _ik_nan(p, geom) - theta
        err = np.linalg.norm(res, axis=1)
        cand = _fk_closed(theta, geom)
        cres = _ik_nan(cand, geom) - theta
        cerr = np.linalg.norm(cres, axis=1)
        take = cerr < np.where(np.isfinite(err), err, np.inf)
        p[take], res[take], err[take] = cand[take], cres[take], cerr[take]
        for _ in range(max_iter):
            active = ~(err < tol)
            if not np.any(active):
                break
            pa, ra = p[active], res[active]
            J = np.empty((pa.shape[0], 3, 3))
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                J[:, :, j] = (_ik_nan(pa + e, geom) - _ik_nan(pa - e, geom)) / (2 * h)
            ok = np.all(np.isfinite(J), axis=(1, 2)) & (np.abs(np.linalg.det(np.where(
                np.isfinite(J), J, 0.0))) > 1e-14)
            step = np.zeros_like(pa)
            if np.any(ok):
                step[ok] = np.linalg.solve(J[ok], ra[ok][..., None])[..., 0]
            lam = np.ones(pa.shape[0])
            best_p, best_err = pa.copy(), err[active].copy()
            improved = np.zeros(pa.shape[0], dtype=bool)
            for _ in range(12):
                trial = pa - lam[:, None] * step
                tres = _ik_nan(trial, geom) - theta[active]
                terr = np.linalg.norm(tres, axis=1)
                better = ok & ~improved & (terr < best_err)
                best_p[better], best_err[better] = trial[better], terr[better]
                improved |= better
                if np.all(improved | ~ok):
                    break
                lam = np.where(improved, lam, 0.5 * lam)
            idx = np.flatnonzero(active)
            p[idx] = best_p
            res[idx] = _ik_nan(best_p, geom) - theta[active]
            err[idx] = best_err
            if not np.any(improved):
                break
    converged = err < max(tol, 1e-9)
    p[~converged] = np.nan
    return p[:N], converged


def fk(theta, geom: ManipulatorGeometry, seed) -> np.ndarray:
    pts, ok = fk_many(np.asarray(theta, float)[None, :], geom, np.asarray(seed, float)[None, :])
    if not ok[0]:
        raise RuntimeError(f"forward kinematics did not converge for theta={list(theta)}")
    return pts[0]


def joint_path_from_task(task_path: ParametricPath, geom: ManipulatorGeometry,
                         h1: float = 1e-5, h2: float = 1e-4,
                         check_samples: int = 20001) -> ParametricPath:
    """Compose ik with a task-space path; derivatives by central differences."""
    if task_path.dim_m != 3:
        raise ValueError("task path must live in R^3")
    lo, hi = task_path.w_window
    w_chk = np.linspace(lo, hi, check_samples)
    th1, a2, _, a3 = _ik_raw(task_path.eval(w_chk), geom)
    bad = (np.abs(a2) > 1) | (np.abs(a3) > 1) | ~np.isfinite(th1)
    if np.any(bad):
        raise IKDomainError(
            f"{task_path.name}: {int(bad.sum())}/{check_samples} window samples unreachable "
            f"with l1={geom.l1}, l2={geom.l2} (first at w={w_chk[bad][0]:.4f})")

    def ev(w):
        return _ik_nan(task_path.eval(w), geom)

    def d1(w):
        w = np.asarray(w, float)
        return (ev(w + h1) - ev(w - h1)) / (2 * h1)

    def d2(w):
        w = np.asarray(w, float)
        return (ev(w + h2) - 2 * ev(w) + ev(w - h2)) / h2**2

    offsets = np.array([0.0, h1, -h1, h2, -h2])

    def jet(w):
        th = ev(w + offsets)
        return (th[0].tolist(), ((th[1] - th[2]) / (2 * h1)).tolist(),
                ((th[3] - 2 * th[0] + th[4]) / h2**2).tolist())

    tb = float(np.max(np.abs(d1(w_chk))))
    return ParametricPath(
        name=f"{task_path.name}@joint", dim_m=3, eval=ev, d1=d1, d2=d2,
        w_window=task_path.w_window, tangent_bound=tb, period=task_path.period,
        params={"task": task_path.name, "l1": geom.l1, "l2": geom.l2}, jet_fn=jet,
    )
