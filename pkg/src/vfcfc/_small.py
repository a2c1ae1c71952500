"""Dense linear algebra on nested Python lists for n <= 3.

The control loop evaluates dozens of 2x2/3x3 products per RK4 stage; numpy's
per-call overhead dominates at that size, so the hot path stays in floats.
"""
from __future__ import annotations

import math
from operator import mul

import numpy as np


def dot(u, v) -> float:
    return sum(map(mul, u, v))


def matvec(M, v) -> list[float]:
    return [sum(map(mul, row, v)) for row in M]


def tmatvec(M, v) -> list[float]:
    """M^T v."""
    return [sum(map(mul, col, v)) for col in zip(*M)]


def matmul(X, Y) -> list[list[float]]:
    cols = list(zip(*Y))
    return [[sum(map(mul, row, c)) for c in cols] for row in X]


def norm(v) -> float:
    return math.sqrt(sum(map(mul, v, v)))


def inv(X, tol: float = 1e-12) -> list[list[float]]:
    """Adjugate inverse for sizes up to 3; LAPACK beyond.

    Raises ``LinAlgError`` when |det| <= tol * (max |entry|)^n.
    """
    n = len(X)
    if n > 3:
        return np.linalg.inv(np.asarray(X, float)).tolist()
    scale = max([max(map(abs, row)) for row in X]) or 1.0
    if n == 1:
        det = X[0][0]
        adj = [[1.0]]
    elif n == 2:
        (a, b), (c, d) = X
        det = a * d - b * c
        adj = [[d, -b], [-c, a]]
    else:
        (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = X
        adj = [[b1 * c2 - b2 * c1, a2 * c1 - a1 * c2, a1 * b2 - a2 * b1],
               [b2 * c0 - b0 * c2, a0 * c2 - a2 * c0, a2 * b0 - a0 * b2],
               [b0 * c1 - b1 * c0, a1 * c0 - a0 * c1, a0 * b1 - a1 * b0]]
        det = a0 * adj[0][0] + a1 * adj[1][0] + a2 * adj[2][0]
    if not math.isfinite(det) or abs(det) <= tol * scale**n:
        raise np.linalg.LinAlgError(f"matrix is singular (det={det:.3g})")
    r = 1.0 / det
    return [[r * v for v in row] for row in adj]


def spectral_norm(X) -> float:
    """Largest singular value; closed form for one or two rows."""
    if len(X) == 1:
        return norm(X[0])
    if len(X) == 2:
        a, b, c = dot(X[0], X[0]), dot(X[0], X[1]), dot(X[1], X[1])
        return math.sqrt(0.5 * (a + c) + math.hypot(0.5 * (a - c), b))
    return float(np.linalg.norm(np.asarray(X, float), 2))
