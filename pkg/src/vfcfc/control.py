"""Nominal and adaptive robust constraint-following control.

Notation follows the usual constraint-following literature: ``D = Mbar^{-1}``,
``ADB = A Mbar^{-1} Bbar`` (square, assumed invertible), and
``beta_breve = ADB^T P beta`` which is the same vector as
``Bbar^T Mbar^{-1} A^T P beta`` because Mbar is symmetric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .constraint import VfcContext
from .geometry import SelectionMatrix
from . import _small
from .plants import MechanicalSystem


class SingularControlError(np.linalg.LinAlgError):
    """A Mbar^{-1} Bbar lost rank at the current state."""


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "nominal"           # nominal | adaptive_robust
    kappa: float = 5.0
    mu: float = 0.1
    l1: float = 0.5
    l2: float = 0.1
    eps_dz: float = 1.0

    def __post_init__(self):
        if self.kind not in ("nominal", "adaptive_robust"):
            raise ValueError(f"controller kind must be nominal or adaptive_robust, got {self.kind!r}")
        for name in ("kappa", "mu", "l1", "l2", "eps_dz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"controller parameter {name} must be positive")


class NominalTerms(NamedTuple):
    """Shared controller quantities at one state, as (nested) float lists."""
    Minv: list
    AD: list
    ADB: list
    ADB_inv: list
    beta: list
    b: list
    wdot: float
    phi: list
    p1: list


def nominal_terms(ctx: VfcContext, sys: MechanicalSystem, q, qdot, w, t: float = 0.0) -> NominalTerms:
    """Everything the controllers share at one state, computed once.

    ``q`` and ``qdot`` may be arrays or float lists.
    """
    if isinstance(q, np.ndarray):
        q, qdot = q.tolist(), np.asarray(qdot, float).tolist()
    path, k = ctx.path, ctx.gains.klist
    sgn = -1.0 if path.dim_m % 2 else 1.0
    idx = ctx.A.index_list
    f, df, ddf = path.jet_list(w)
    ph = [q[i] - fi for i, fi in zip(idx, f)]
    kph = [ki * p for ki, p in zip(k, ph)]
    wdot = sgn + sum(a * d for a, d in zip(kph, df))
    zeta_dot = [qdot[i] for i in idx]
    beta = [zd - sgn * d + a for zd, d, a in zip(zeta_dot, df, kph)]
    b = [-ki * zd + (sgn * dd + ki * d) * wdot for ki, zd, d, dd in zip(k, zeta_dot, df, ddf)]

    M, Cqd, g, B = sys.terms(q, qdot, sys.sigma_zero_list)
    Minv = _small.inv(M)
    AD = [Minv[i] for i in idx]
    ADB = _small.matmul(AD, B)
    try:
        ADB_inv = _small.inv(ADB)
    except np.linalg.LinAlgError as exc:
        raise SingularControlError(f"A Mbar^-1 Bbar singular at q={q}, t={t}") from exc
    rhs = _small.matvec(AD, [c + gi for c, gi in zip(Cqd, g)])
    p1 = _small.matvec(ADB_inv, [bi + r for bi, r in zip(b, rhs)])
    return NominalTerms(Minv, AD, ADB, ADB_inv, beta, b, wdot, ph, p1)


def beta_breve(terms: NominalTerms, P: list) -> list[float]:
    """ADB^T P beta."""
    return _small.tmatvec(terms.ADB, _small.matvec(P, terms.beta))


def p2_from(terms: NominalTerms, P, kappa: float) -> np.ndarray:
    return -kappa * np.array(beta_breve(terms, np.asarray(P, float).tolist()))


def nominal_tau(ctx: VfcContext, sys: MechanicalSystem, cfg: ControllerConfig,
                q, qdot, w, t: float = 0.0) -> np.ndarray:
    """p1 + p2: exact constraint-following for the nominal model plus beta feedback."""
    terms = nominal_terms(ctx, sys, np.asarray(q, float), np.asarray(qdot, float), w, t)
    return np.array(terms.p1) + p2_from(terms, ctx.P, cfg.kappa)


# --------------------------------------------------------------------------
# adaptive robust action
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundFunction:
    """Uncertainty envelope Pi(alpha, .) = alpha^T pi_breve(.).

    ``pi_breve(terms, q, qdot, w, t)`` receives float lists and returns a list of length k_dim.
    """

    k_dim: int
    pi_breve: Callable[[NominalTerms, list, list, float, float], list]
    name: str = ""


def pvtol_pi() -> BoundFunction:
    """(||(A D B)^{-1} A D||_2, ||p1||) for the aircraft."""
    def pi_breve(terms, q, qdot, w, t):
        return [_small.spectral_norm(_small.matmul(terms.ADB_inv, terms.AD)), _small.norm(terms.p1)]
    return BoundFunction(2, pi_breve, "pvtol")


def manipulator_pi() -> BoundFunction:
    """||qdot||^2 + ||qdot|| + 1."""
    def pi_breve(terms, q, qdot, w, t):
        v = _small.norm(qdot)
        return [v * v + v + 1.0]
    return BoundFunction(1, pi_breve, "manipulator")


BOUND_FUNCTIONS = {"pvtol": pvtol_pi, "manipulator": manipulator_pi}


def p3_list(beta_breve: list, Pi: float, mu: float) -> list[float]:
    """-eta * upsilon * Pi with upsilon = beta_breve * Pi and a mu-wide boundary layer."""
    upsilon = [v * Pi for v in beta_breve]
    nrm = _small.norm(upsilon)
    scale = -Pi / (nrm if nrm > mu else mu)
    return [scale * u for u in upsilon]


def p3_from(beta_breve, Pi: float, mu: float) -> np.ndarray:
    return np.array(p3_list(np.asarray(beta_breve, float).tolist(), float(Pi), mu))


def robust_p3(ctx: VfcContext, sys: MechanicalSystem, cfg: ControllerConfig, bound: BoundFunction,
              alpha_hat, q, qdot, w, t: float = 0.0) -> np.ndarray:
    q, qdot = np.asarray(q, float).tolist(), np.asarray(qdot, float).tolist()
    terms = nominal_terms(ctx, sys, q, qdot, w, t)
    Pi = float(np.dot(alpha_hat, bound.pi_breve(terms, q, qdot, w, t)))
    return np.array(p3_list(beta_breve(terms, ctx.P.tolist()), Pi, cfg.mu))


def adaptive_rate_list(cfg: ControllerConfig, pi_breve: list, beta_breve_norm: float,
                       alpha_hat: list) -> list[float]:
    """Leakage adaptive law with an eps dead-zone smoothing."""
    pn = _small.norm(pi_breve)
    if pn * beta_breve_norm > cfg.eps_dz:
        gain = cfg.l1 * beta_breve_norm
    else:
        gain = cfg.l1 * pn * beta_breve_norm**2 / cfg.eps_dz
    return [gain * p - cfg.l2 * a for p, a in zip(pi_breve, alpha_hat)]


def adaptive_rate(cfg: ControllerConfig, pi_breve, beta_breve_norm: float, alpha_hat) -> np.ndarray:
    return np.array(adaptive_rate_list(cfg, np.asarray(pi_breve, float).tolist(),
                                       float(beta_breve_norm), np.asarray(alpha_hat, float).tolist()))


# --------------------------------------------------------------------------
# uncertainty decomposition and assumption checks
# --------------------------------------------------------------------------

def _projector(sys: MechanicalSystem, A: SelectionMatrix, q):
    """Return (ADB^{-1} A D, Bbar) at q (batched over leading axes)."""
    Minv = np.linalg.inv(sys.M_bar(q))
    AD = Minv[..., A.index0, :]
    Bb = sys.B_bar(q)
    ADB = AD @ Bb
    if np.any(np.abs(np.linalg.det(ADB)) < 1e-12):
        raise SingularControlError("A Mbar^-1 Bbar singular on the grid")
    return np.linalg.solve(ADB, AD), Bb


def matched_split(sys: MechanicalSystem, A: SelectionMatrix, q, X):
    """Split X (vector or matrix) into Bbar X_check + X_tilde."""
    Pm, Bb = _projector(sys, A, q)
    X = np.asarray(X, float)
    if X.ndim == np.ndim(q):       # a vector per state
        Xc = (Pm @ X[..., None])[..., 0]
        return Xc, X - (Bb @ Xc[..., None])[..., 0]
    Xc = Pm @ X
    return Xc, X - Bb @ Xc


def decompose_matched(sys: MechanicalSystem, A: SelectionMatrix, q, sigma, t: float = 0.0):
    """(H_check, H_tilde) for H = Mbar M^{-1} - I."""
    H = sys.M_bar(q) @ np.linalg.inv(sys.mass(q, sigma)) - np.eye(sys.n)
    return matched_split(sys, A, q, H)


def w_matrix(sys: MechanicalSystem, A: SelectionMatrix, q, sigma) -> np.ndarray:
    """W = B_check + H_check B (batched)."""
    H_check, _ = decompose_matched(sys, A, q, sigma)
    B = sys.input_matrix(q, sigma)
    B_check, _ = matched_split(sys, A, q, B - sys.B_bar(q))
    return B_check + H_check @ B


def q_grid(n_per_axis: int = 50, n: int = 3, half_width: float = np.pi) -> np.ndarray:
    axes = [np.linspace(-half_width, half_width, n_per_axis)] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def sigma_grid(sys: MechanicalSystem, n_random: int = 20, seed: int = 0) -> np.ndarray:
    """Box corners of the uncertainty set plus ``n_random`` interior samples."""
    lo, hi = sys.sigma_bounds
    p = len(lo)
    corners = np.array(np.meshgrid(*[[0, 1]] * p, indexing="ij")).reshape(p, -1).T
    pts = lo + corners * (hi - lo)
    rng = np.random.default_rng(seed)
    return np.vstack([pts, lo + rng.random((n_random, p)) * (hi - lo)])


def check_assumption4(sys: MechanicalSystem, A: SelectionMatrix, P, states) -> float:
    """min over states of lambda_min(P ADB ADB^T P)."""
    P = np.asarray(P, float)
    states = np.atleast_2d(states)
    Minv = np.linalg.inv(sys.M_bar(states))
    ADB = Minv[..., A.index0, :] @ sys.B_bar(states)
    G = P @ ADB @ np.swapaxes(ADB, -1, -2) @ P
    return float(np.min(np.linalg.eigvalsh(G)[..., 0]))


def check_assumption5(sys: MechanicalSystem, A: SelectionMatrix, states, sigmas) -> float:
    """Estimate of rho_W = 1/2 min lambda_min(W + W^T); must exceed -1."""
    states = np.atleast_2d(states)
    best = np.inf
    for s in np.atleast_2d(sigmas):
        W = w_matrix(sys, A, states, s)
        lam = np.linalg.eigvalsh(W + np.swapaxes(W, -1, -2))[..., 0]
        best = min(best, 0.5 * float(np.min(lam)))
    return best


def uncertainty_lhs(ctx: VfcContext, sys: MechanicalSystem, rho_w: float, q, qdot, w, sigmas) -> float:
    """Left side of the envelope inequality, maximised over the sigma samples."""
    terms = nominal_terms(ctx, sys, q, qdot, w)
    p1 = np.array(terms.p1)
    A = ctx.A
    worst = 0.0
    for s in np.atleast_2d(sigmas):
        H_check, _ = decompose_matched(sys, A, q, s)
        B = sys.input_matrix(q, s)
        Cqd, g = sys.coriolis(q, qdot, s), sys.gravity(q, s)
        B_check, _ = matched_split(sys, A, q, B - sys.B_bar(q))
        C_check, _ = matched_split(sys, A, q, Cqd - sys.Cqd_bar(q, qdot))
        g_check, _ = matched_split(sys, A, q, g - sys.g_bar(q))
        v = H_check @ (-Cqd - g + B @ p1) + (B_check @ p1 - C_check - g_check)
        worst = max(worst, float(np.linalg.norm(v)))
    return worst / (1.0 + rho_w)


def sample_states(ctx: VfcContext, n: int, seed: int = 0, q_half: float = np.pi,
                  qdot_half: float = 2.0, centre=None):
    """Random (q, qdot, w) triples for envelope checks."""
    rng = np.random.default_rng(seed)
    nq = ctx.A.cols_n
    c = np.zeros(nq) if centre is None else np.asarray(centre, float)
    lo, hi = ctx.path.w_window
    for _ in range(n):
        yield (c + rng.uniform(-q_half, q_half, nq), rng.uniform(-qdot_half, qdot_half, nq),
               float(rng.uniform(lo, hi)))


def fit_reference_alpha(ctx, sys, bound: BoundFunction, rho_w: float, states, sigmas,
                        safety: float = 1.25) -> np.ndarray:
    """Smallest common alpha (times ``safety``) covering the envelope on ``states``."""
    ratio = 0.0
    for q, qd, w in states:
        terms = nominal_terms(ctx, sys, q, qd, w)
        denom = float(np.sum(bound.pi_breve(terms, q, qd, w, 0.0)))
        ratio = max(ratio, uncertainty_lhs(ctx, sys, rho_w, q, qd, w, sigmas) / denom)
    return np.full(bound.k_dim, safety * ratio)


def check_assumption6(ctx, sys, bound: BoundFunction, rho_w: float, alpha_ref, states, sigmas):
    """Margins Pi(alpha_ref) - lhs at each state; all >= 0 certifies the envelope."""
    margins = []
    alpha_ref = np.asarray(alpha_ref, float)
    for q, qd, w in states:
        terms = nominal_terms(ctx, sys, q, qd, w)
        Pi = float(alpha_ref @ bound.pi_breve(terms, q, qd, w, 0.0))
        margins.append(Pi - uncertainty_lhs(ctx, sys, rho_w, q, qd, w, sigmas))
    return np.array(margins)
