"""Singularity-free guiding vector field in the augmented (zeta, w) space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ParametricPath


@dataclass(frozen=True)
class GvfGains:
    k: np.ndarray

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        if np.any(k <= 0):
            raise ValueError(f"GVF gains must be positive, got {k}")
        object.__setattr__(self, "k", k)

    @property
    def klist(self) -> list[float]:
        return self.k.tolist()

    @classmethod
    def uniform(cls, value: float, m: int) -> "GvfGains":
        return cls(np.full(m, float(value)))


def _split(path: ParametricPath, gains: GvfGains, xi):
    xi = np.asarray(xi, dtype=float)
    m = path.dim_m
    if xi.shape[-1] != m + 1:
        raise ValueError(f"xi has {xi.shape[-1]} entries, expected {m + 1}")
    if gains.k.shape != (m,):
        raise ValueError(f"expected {m} gains, got {gains.k.shape[0]}")
    w = xi[..., -1]
    ph = xi[..., :-1] - path.eval(w)
    return w, ph, path.d1(w), (-1.0) ** m


def chi_s(path: ParametricPath, gains: GvfGains, xi) -> np.ndarray:
    """Physical part of the field: (-1)^m f'(w) - k * phi(xi)."""
    _, ph, df, sgn = _split(path, gains, xi)
    return sgn * df - gains.k * ph


def w_dot(path: ParametricPath, gains: GvfGains, xi):
    """Virtual-coordinate rate (-1)^m + sum_i k_i phi_i f'_i(w)."""
    _, ph, df, sgn = _split(path, gains, xi)
    return sgn + np.sum(gains.k * ph * df, axis=-1)


def gvf_full(path: ParametricPath, gains: GvfGains, xi) -> np.ndarray:
    _, ph, df, sgn = _split(path, gains, xi)
    head = sgn * df - gains.k * ph
    tail = sgn + np.sum(gains.k * ph * df, axis=-1)
    return np.concatenate([head, np.asarray(tail)[..., None]], axis=-1)


def chi_s_jacobians(path: ParametricPath, gains: GvfGains, xi):
    """Return (d chi_s / d zeta, d chi_s / d w).

    The zeta-Jacobian is always ``-diag(k)``; the w-derivative needs f''.
    """
    if path.d2 is None:
        raise ValueError(f"path {path.name!r} provides no second derivative")
    w, _, df, sgn = _split(path, gains, xi)
    return -np.diag(gains.k), sgn * path.d2(w) + gains.k * df
