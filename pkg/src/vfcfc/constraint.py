"""Vector-field guided constraint A qdot = chi_s(A q, w) and the conventional baseline.

The conventional constraint folds the implicit path functions psi(q_s) = 0
into psi_dot + Lambda psi = 0, giving a state-dependent A = grad psi.  It is
kept only to show where feasibility breaks down.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import ParametricPath, SelectionMatrix
from .vectorfield import GvfGains, chi_s, chi_s_jacobians, w_dot


@dataclass(frozen=True)
class VfcContext:
    A: SelectionMatrix
    path: ParametricPath
    gains: GvfGains
    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        m = self.path.dim_m
        if self.A.rows_m != m:
            raise ValueError(f"selection has {self.A.rows_m} rows but path lives in R^{m}")
        if P.shape != (m, m):
            raise ValueError(f"P must be {m}x{m}, got {P.shape}")
        if np.max(np.abs(P - P.T)) > 1e-12:
            raise ValueError("P must be symmetric")
        if np.min(np.linalg.eigvalsh(P)) <= 0:
            raise ValueError("P must be positive definite")
        object.__setattr__(self, "P", P)

    @property
    def m(self) -> int:
        return self.path.dim_m

    def xi(self, q, w) -> np.ndarray:
        return np.concatenate([self.A.apply(q), np.atleast_1d(w)])


def vfc_beta(ctx: VfcContext, q, qdot, w) -> np.ndarray:
    """Constraint-following error A qdot - chi_s(A q, w)."""
    q, qdot = np.asarray(q, float), np.asarray(qdot, float)
    if q.shape != (ctx.A.cols_n,) or qdot.shape != q.shape:
        raise ValueError(f"q and qdot must have shape ({ctx.A.cols_n},)")
    return ctx.A.apply(qdot) - chi_s(ctx.path, ctx.gains, ctx.xi(q, w))


def vfc_b(ctx: VfcContext, q, qdot, w) -> np.ndarray:
    """Right-hand side of the second-order constraint A qddot = b."""
    q, qdot = np.asarray(q, float), np.asarray(qdot, float)
    if q.shape != (ctx.A.cols_n,) or qdot.shape != q.shape:
        raise ValueError(f"q and qdot must have shape ({ctx.A.cols_n},)")
    xi = ctx.xi(q, w)
    _, dchi_dw = chi_s_jacobians(ctx.path, ctx.gains, xi)
    return -ctx.gains.k * ctx.A.apply(qdot) + dchi_dw * w_dot(ctx.path, ctx.gains, xi)


def feasibility_residual(A_eval, b_eval) -> float:
    """||A A^+ b - b||; zero iff A qddot = b has a solution."""
    A_eval = np.atleast_2d(np.asarray(A_eval, dtype=float))
    b_eval = np.atleast_1d(np.asarray(b_eval, dtype=float))
    return float(np.linalg.norm(A_eval @ (np.linalg.pinv(A_eval) @ b_eval) - b_eval))


# --------------------------------------------------------------------------
# conventional constraint baseline
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CcfcConstraint:
    """psi(q_s) = 0 encoded as grad_psi(q_s) qdot_s = -Lambda psi(q_s)."""

    psi: Callable[[np.ndarray], np.ndarray]
    grad_psi: Callable[[np.ndarray], np.ndarray]
    hess_psi: Callable[[np.ndarray], np.ndarray]
    Lambda: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        if L.ndim != 2 or L.shape[0] != L.shape[1] or np.any(L != np.diag(np.diag(L))):
            raise ValueError("Lambda must be a square diagonal matrix")
        if np.any(np.diag(L) <= 0):
            raise ValueError("Lambda must have positive diagonal entries")
        object.__setattr__(self, "Lambda", L)


def ccfc_second_order(c: CcfcConstraint, q_s, qdot_s):
    """Differentiate the first-order conventional constraint once.

    Returns ``(A_eval, b_eval)`` with A = grad psi and
    b = -Lambda (grad psi qdot) - [qdot^T H_i qdot]_i.
    """
    q_s, qdot_s = np.asarray(q_s, float), np.asarray(qdot_s, float)
    G = np.atleast_2d(c.grad_psi(q_s))
    if G.shape[1] != q_s.shape[0] or qdot_s.shape != q_s.shape:
        raise ValueError("dimension mismatch between psi and q_s")
    H = np.asarray(c.hess_psi(q_s)).reshape(G.shape[0], q_s.size, q_s.size)
    quad = np.einsum("i,kij,j->k", qdot_s, H, qdot_s)
    return G, -c.Lambda @ (G @ qdot_s) - quad


def ccfc_for_path(name: str, params: dict | None = None, Lambda=1.0) -> CcfcConstraint:
    """Implicit-function constraints for the planar catalog paths."""
    params = dict(params or {})
    L = np.atleast_2d(np.asarray(Lambda, dtype=float))
    if L.size == 1:
        L = L.reshape(1, 1)
    if name == "sinusoid":
        def psi(p):
            return np.array([p[1] - np.sin(p[0])])

        def grad(p):
            return np.array([[-np.cos(p[0]), 1.0]])

        def hess(p):
            return np.array([[[np.sin(p[0]), 0.0], [0.0, 0.0]]])
    elif name == "cassini":
        ra = float(params.get("ra", 3.0))
        rb = float(params.get("rb") or 1.05 * ra)

        def psi(p):
            x, y = p
            return np.array([(x**2 + y**2 + ra**2) ** 2 - 4 * ra**2 * x**2 - rb**4])

        def grad(p):
            x, y = p
            s = x**2 + y**2 + ra**2
            return np.array([[4 * x * s - 8 * ra**2 * x, 4 * y * s]])

        def hess(p):
            x, y = p
            s = x**2 + y**2 + ra**2
            return np.array([[[4 * s + 8 * x**2 - 8 * ra**2, 8 * x * y],
                              [8 * x * y, 4 * s + 8 * y**2]]])
    elif name == "lemniscate":
        def psi(p):
            x, y = p
            return np.array([(x**2 + y**2) ** 2 - x**2 + y**2])

        def grad(p):
            x, y = p
            s = x**2 + y**2
            return np.array([[4 * x * s - 2 * x, 4 * y * s + 2 * y]])

        def hess(p):
            x, y = p
            s = x**2 + y**2
            return np.array([[[4 * s + 8 * x**2 - 2, 8 * x * y],
                              [8 * x * y, 4 * s + 8 * y**2 + 2]]])
    else:
        raise ValueError(f"no conventional constraint for path {name!r}; "
                         "available: sinusoid, cassini, lemniscate")
    return CcfcConstraint(psi, grad, hess, L)
