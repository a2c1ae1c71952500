"""Fixed-step RK4 integration of plant + virtual coordinate + adaptive estimate."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import math

import numpy as np

from .constraint import VfcContext
from . import _small
from .control import (BoundFunction, ControllerConfig, adaptive_rate_list, beta_breve,
                      nominal_terms, p3_list)
from .plants import MechanicalSystem, accel_lists

ALPHA_FLOOR = 1e-12


class SimulationError(RuntimeError):
    def __init__(self, msg, t=None, step=None):
        super().__init__(msg)
        self.t, self.step = t, step


@dataclass(frozen=True)
class SimState:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    w: float
    alpha_hat: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        vals = np.concatenate([np.atleast_1d(self.q), np.atleast_1d(self.qdot),
                               [self.w, self.t], np.atleast_1d(self.alpha_hat)])
        if not np.all(np.isfinite(vals)):
            raise ValueError("SimState entries must be finite")
        if np.any(np.asarray(self.alpha_hat) <= 0):
            raise ValueError("adaptive parameters must be positive")


@dataclass(frozen=True)
class Scenario:
    id: str
    sys: MechanicalSystem
    ctx: VfcContext
    cfg: ControllerConfig
    plant_mode: str
    initial: SimState
    duration: float
    step: float
    bound: BoundFunction | None = None
    task_path: object = None        # task-space path when ctx.path lives in joint space
    geom: object = None
    meta: dict = field(default_factory=dict)


@dataclass
class TrajectoryLog:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    w: np.ndarray
    alpha_hat: np.ndarray
    tau: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    wdot: np.ndarray
    meta: dict

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> SimState:
        return SimState(float(self.t[i]), self.q[i], self.qdot[i], float(self.w[i]), self.alpha_hat[i])


def rk4_step(derivative: Callable, state, t: float, h: float, k1=None):
    """Classical fourth-order Runge-Kutta update.

    ``k1`` may be supplied when the caller already evaluated ``derivative(state, t)``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    state = np.asarray(state, dtype=float)
    if k1 is None:
        k1 = derivative(state, t)
    hh = 0.5 * h
    k2 = derivative(state + hh * k1, t + hh)
    k3 = derivative(state + hh * k2, t + hh)
    k4 = derivative(state + h * k3, t + h)
    incr = k1 + 2.0 * (k2 + k3) + k4
    if not math.isfinite(incr.sum()):
        raise SimulationError(f"non-finite derivative near t={t:.6g}", t=t)
    return state + (h / 6.0) * incr


def closed_loop(sc: Scenario):
    """Return f(z, t) -> (zdot, diagnostics) for the packed state z = (q, qdot, w, alpha)."""
    sys, ctx, cfg = sc.sys, sc.ctx, sc.cfg
    n = sys.n
    P, kappa, mu = ctx.P.tolist(), cfg.kappa, cfg.mu
    adaptive = cfg.kind == "adaptive_robust"
    bound = sc.bound
    if adaptive and bound is None:
        raise ValueError("adaptive_robust control needs a bound function")
    if sc.plant_mode == "nominal":
        def sigma_at(t):
            return sys.sigma_zero_list
    else:
        def sigma_at(t):
            return sys.sigma(sc.plant_mode, t).tolist()

    def f(z, t):
        zl = z.tolist()
        q, qd, w = zl[:n], zl[n:2 * n], zl[2 * n]
        terms = nominal_terms(ctx, sys, q, qd, w, t)
        bb = beta_breve(terms, P)
        tau = [p - kappa * v for p, v in zip(terms.p1, bb)]
        adot = []
        if adaptive:
            a = zl[2 * n + 1:]
            pib = bound.pi_breve(terms, q, qd, w, t)
            Pi = sum(ai * pi for ai, pi in zip(a, pib))
            tau = [u + v for u, v in zip(tau, p3_list(bb, Pi, mu))]
            adot = adaptive_rate_list(cfg, pib, _small.norm(bb), a)
        qdd = accel_lists(sys, sigma_at(t), q, qd, tau, t)
        zdot = np.array(qd + qdd + [terms.wdot] + adot)
        return zdot, (tau, terms.beta, terms.phi, terms.wdot)

    return f


def run_scenario(scenario) -> TrajectoryLog:
    """Integrate a scenario (or a ScenarioConfig, which is built first)."""
    if not isinstance(scenario, Scenario):
        from .config import build_scenario
        scenario = build_scenario(scenario)
    sc = scenario
    n, h = sc.sys.n, sc.step
    if h <= 0 or sc.duration < 0:
        raise ValueError("step must be positive and duration non-negative")
    steps = int(round(sc.duration / h))
    k = len(sc.initial.alpha_hat) if sc.cfg.kind == "adaptive_robust" else 0
    m, mi = sc.ctx.m, sc.sys.m_inputs

    f = closed_loop(sc)
    z = np.concatenate([sc.initial.q, sc.initial.qdot, [sc.initial.w],
                        np.asarray(sc.initial.alpha_hat, float)[:k]])
    t0 = sc.initial.t
    N = steps + 1
    Z = np.empty((N, z.size))
    tau, beta, phi, wdot = np.empty((N, mi)), np.empty((N, m)), np.empty((N, m)), np.empty(N)

    def g(state, t):
        return f(state, t)[0]

    for i in range(N):
        t = t0 + i * h
        try:
            zdot, diag = f(z, t)
        except np.linalg.LinAlgError as exc:
            raise SimulationError(f"{sc.id}: {exc} (step {i}, t={t:.6g})", t=t, step=i) from exc
        Z[i] = z
        tau[i], beta[i], phi[i], wdot[i] = diag
        if i == steps:
            break
        try:
            z = rk4_step(g, z, t, h, k1=zdot)
        except (SimulationError, np.linalg.LinAlgError) as exc:
            raise SimulationError(f"{sc.id}: diverged at step {i}, t={t:.6g}: {exc}",
                                  t=t, step=i) from exc
        if not math.isfinite(z.sum()):
            raise SimulationError(f"{sc.id}: non-finite state at t={t + h:.6g}", t=t + h, step=i + 1)
        if k:
            z[2 * n + 1:] = np.maximum(z[2 * n + 1:], ALPHA_FLOOR)

    meta = {"scenario": sc.id, "step": h, "duration": sc.duration, "controller": sc.cfg.kind,
            "plant_mode": sc.plant_mode, "plant": sc.sys.name, "path": sc.ctx.path.name,
            **sc.meta}
    return TrajectoryLog(
        t=t0 + h * np.arange(N), q=Z[:, :n], qdot=Z[:, n:2 * n], w=Z[:, 2 * n],
        alpha_hat=Z[:, 2 * n + 1:], tau=tau, beta=beta, phi=phi, wdot=wdot, meta=meta,
    )
