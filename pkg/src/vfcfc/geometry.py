"""Parametric desired paths, selection matrices and a distance-to-path oracle.

Every path maps a scalar parameter ``w`` to a point in R^m.  Arrays follow a
last-axis convention: ``eval(w)`` returns shape ``(m,)`` for scalar ``w`` and
``(..., m)`` for an array of parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi
PATH_NAMES = ("sinusoid", "cassini", "lemniscate", "cylinder_intersection", "torus_knot")

PathFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParametricPath:
    """A desired path f(w) together with its first and second derivatives."""

    name: str
    dim_m: int
    eval: PathFn
    d1: PathFn
    d2: PathFn | None
    w_window: tuple[float, float]
    tangent_bound: float
    period: float | None = None
    implicit: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)
    jet_fn: Callable[[float], tuple[list, list, list]] | None = None   # scalar w only

    def __call__(self, w):
        return self.eval(w)

    def jet(self, w):
        """(f, f', f'') at ``w`` in one call."""
        if self.jet_fn is not None and np.ndim(w) == 0:
            return tuple(np.array(v) for v in self.jet_fn(float(w)))
        return self.eval(w), self.d1(w), self.d2(w)

    def jet_list(self, w: float):
        """Scalar-``w`` jet as three float lists."""
        if self.jet_fn is not None:
            return self.jet_fn(float(w))
        return tuple(np.asarray(v, float).tolist() for v in (self.eval(w), self.d1(w), self.d2(w)))


@dataclass(frozen=True)
class SelectionMatrix:
    """Binary full-row-rank matrix picking ``q[s_i]`` out of ``q``.

    ``indices`` are 1-based, matching the usual mathematical convention.
    """

    indices: tuple[int, ...]
    cols_n: int

    @property
    def rows_m(self) -> int:
        return len(self.indices)

    @cached_property
    def index_list(self) -> list[int]:
        return [i - 1 for i in self.indices]

    @cached_property
    def index0(self) -> np.ndarray:
        idx = np.asarray(self.indices, dtype=int) - 1
        idx.flags.writeable = False
        return idx

    @property
    def entries(self) -> np.ndarray:
        A = np.zeros((self.rows_m, self.cols_n))
        A[np.arange(self.rows_m), self.index0] = 1.0
        return A

    def apply(self, q: np.ndarray) -> np.ndarray:
        """Return ``A q`` by direct indexing (exact, no floating-point products)."""
        return np.asarray(q)[..., self.index0]

    def transpose_apply(self, v: np.ndarray) -> np.ndarray:
        """Return ``A^T v``."""
        out = np.zeros(np.shape(v)[:-1] + (self.cols_n,))
        out[..., self.index0] = v
        return out


def make_selection_matrix(indices, n: int) -> SelectionMatrix:
    idx = tuple(int(i) for i in np.atleast_1d(indices))
    if not idx:
        raise ValueError("selection indices must be non-empty")
    if len(idx) > n:
        raise ValueError(f"cannot select {len(idx)} coordinates out of n={n}")
    if any(i < 1 or i > n for i in idx):
        raise ValueError(f"selection indices {idx} out of range 1..{n}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"selection indices {idx} must be strictly increasing")
    return SelectionMatrix(idx, int(n))


# --------------------------------------------------------------------------
# path catalog
# --------------------------------------------------------------------------

def _stack(*cols):
    if all(type(c) is float for c in cols):
        return np.array(cols)
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _ns(w):
    """Scalar parameters take the ``math`` fast path; arrays use numpy."""
    if isinstance(w, float) or np.ndim(w) == 0:
        return float(w), math
    return np.asarray(w, dtype=float), np


def _sqrt_chain(u, du, ddu, xp=np):
    """Value, first and second derivative of sqrt(u(w))."""
    r = xp.sqrt(u)
    dr = du / (2.0 * r)
    ddr = ddu / (2.0 * r) - du**2 / (4.0 * r**3)
    return r, dr, ddr


def _quotient(N, dN, ddN, D, dD, ddD):
    """Second-order derivatives of N(w)/D(w)."""
    q = N / D
    dq = dN / D - N * dD / D**2
    ddq = ddN / D - 2.0 * dN * dD / D**2 - N * ddD / D**2 + 2.0 * N * dD**2 / D**3
    return q, dq, ddq


def _estimate_tangent_bound(d1: PathFn, window, samples: int = 20001) -> float:
    """Grid maximum of |f'_i|, polished around each component's peak, plus 1e-6 relative slack."""
    w = np.linspace(window[0], window[1], samples)
    a = np.abs(d1(w))
    best = float(np.max(a))
    dw = w[1] - w[0]
    for i in range(a.shape[1]):
        j = int(np.argmax(a[:, i]))
        fine = np.linspace(max(w[j] - dw, window[0]), min(w[j] + dw, window[1]), 2001)
        best = max(best, float(np.max(np.abs(d1(fine)[:, i]))))
    return best * (1.0 + 1e-6)


def _make(name, m, ev, d1, d2, window, period, implicit, params, jet=None) -> ParametricPath:
    return ParametricPath(
        name=name, dim_m=m, eval=ev, d1=d1, d2=d2,
        w_window=(float(window[0]), float(window[1])),
        tangent_bound=_estimate_tangent_bound(d1, window),
        period=period, implicit=implicit, params=dict(params), jet_fn=jet,
    )


def _jet_from_parts(parts):
    def jet(w):
        return tuple(list(r) for r in zip(*parts(w)))
    return jet


def sinusoid_path(window=(-10.0, 10.0)) -> ParametricPath:
    def ev(w):
        w = np.asarray(w, dtype=float)
        return _stack(w, np.sin(w))

    def d1(w):
        w = np.asarray(w, dtype=float)
        return _stack(np.ones_like(w), np.cos(w))

    def d2(w):
        w = np.asarray(w, dtype=float)
        return _stack(np.zeros_like(w), -np.sin(w))

    def implicit(p):
        p = np.asarray(p)
        return p[..., 1:2] - np.sin(p[..., 0:1])

    def jet(w):
        s, c = math.sin(w), math.cos(w)
        return [w, s], [1.0, c], [0.0, -s]

    return _make("sinusoid", 2, ev, d1, d2, window, None, implicit, {}, jet)


def _cassini_parts(w, ra, rb):
    w, xp = _ns(w)
    s4, c4 = xp.sin(4 * w), xp.cos(4 * w)
    s2, c2 = xp.sin(2 * w), xp.cos(2 * w)
    v = rb**4 - ra**4 * s2**2
    sv, dsv, ddsv = _sqrt_chain(v, -2.0 * ra**4 * s4, -8.0 * ra**4 * c4, xp)
    u = ra**2 * c2 + sv
    du = -2.0 * ra**2 * s2 + dsv
    ddu = -4.0 * ra**2 * c2 + ddsv
    r, dr, ddr = _sqrt_chain(u, du, ddu, xp)
    return w, r, dr, ddr, xp


def cassini_path(ra: float = 3.0, rb: float | None = None, window=(0.0, TWO_PI)) -> ParametricPath:
    rb = 1.05 * ra if rb is None else rb
    if ra <= 0:
        raise ValueError("cassini requires ra > 0")
    if rb <= ra:
        raise ValueError(f"cassini requires rb > ra (got ra={ra}, rb={rb}); "
                         "the square-root argument would go negative")

    def ev(w):
        w, r, _, _, xp = _cassini_parts(w, ra, rb)
        return _stack(r * xp.cos(w), r * xp.sin(w))

    def d1(w):
        w, r, dr, _, xp = _cassini_parts(w, ra, rb)
        c, s = xp.cos(w), xp.sin(w)
        return _stack(dr * c - r * s, dr * s + r * c)

    def d2(w):
        w, r, dr, ddr, xp = _cassini_parts(w, ra, rb)
        c, s = xp.cos(w), xp.sin(w)
        return _stack(ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s)

    def implicit(p):
        p = np.asarray(p)
        x, y = p[..., 0:1], p[..., 1:2]
        return (x**2 + y**2 + ra**2) ** 2 - 4 * ra**2 * x**2 - rb**4

    def jet(w):
        w, r, dr, ddr, _ = _cassini_parts(w, ra, rb)
        c, s = math.cos(w), math.sin(w)
        return ([r * c, r * s], [dr * c - r * s, dr * s + r * c],
                [ddr * c - 2 * dr * s - r * c, ddr * s + 2 * dr * c - r * s])

    return _make("cassini", 2, ev, d1, d2, window, TWO_PI, implicit, {"ra": ra, "rb": rb}, jet)


def lemniscate_path(window=(0.0, TWO_PI)) -> ParametricPath:
    def parts(w):
        w, xp = _ns(w)
        s, c = xp.sin(w), xp.cos(w)
        s2, c2 = xp.sin(2 * w), xp.cos(2 * w)
        D, dD, ddD = 1.0 + s**2, s2, 2.0 * c2
        x = _quotient(c, -s, -c, D, dD, ddD)
        y = _quotient(0.5 * s2, c2, -2.0 * s2, D, dD, ddD)
        return x, y

    def ev(w):
        x, y = parts(w)
        return _stack(x[0], y[0])

    def d1(w):
        x, y = parts(w)
        return _stack(x[1], y[1])

    def d2(w):
        x, y = parts(w)
        return _stack(x[2], y[2])

    def implicit(p):
        p = np.asarray(p)
        x, y = p[..., 0:1], p[..., 1:2]
        return (x**2 + y**2) ** 2 - (x**2 - y**2)

    return _make("lemniscate", 2, ev, d1, d2, window, TWO_PI, implicit, {},
                 _jet_from_parts(parts))


def cylinder_intersection_path(R1: float = 0.5, R2: float = 1.5, center=(0.0, 2.5, None),
                               window=(0.0, TWO_PI)) -> ParametricPath:
    """Intersection of (x-xc)^2+(z-zc)^2=R1^2 and (y-yc)^2+z^2=R2^2.

    ``zc`` defaults to ``R2 - R1`` which makes the two cylinders touch
    tangentially and the intersection curve self-intersecting.
    """
    xc, yc, zc = center
    zc = R2 - R1 if zc is None else zc
    if R1 <= 0 or R2 < R1:
        raise ValueError(f"cylinder_intersection requires 0 < R1 <= R2 (got R1={R1}, R2={R2})")

    def parts(w):
        w, xp = _ns(w)
        s, c = xp.sin(w), xp.cos(w)
        s2, c2 = xp.sin(2 * w), xp.cos(2 * w)
        g = R1 * (R2 - R1 * s**2)
        sg, dsg, ddsg = _sqrt_chain(g, -R1**2 * s2, -2.0 * R1**2 * c2, xp)
        y = (yc + 2 * s * sg, 2 * (c * sg + s * dsg), 2 * (-s * sg + 2 * c * dsg + s * ddsg))
        x = (xc + R1 * s2, 2 * R1 * c2, -4 * R1 * s2)
        z = (zc + R1 * c2, -2 * R1 * s2, -4 * R1 * c2)
        return x, y, z

    def ev(w):
        x, y, z = parts(w)
        return _stack(x[0], y[0], z[0])

    def d1(w):
        x, y, z = parts(w)
        return _stack(x[1], y[1], z[1])

    def d2(w):
        x, y, z = parts(w)
        return _stack(x[2], y[2], z[2])

    def implicit(p):
        p = np.asarray(p)
        x, y, z = p[..., 0:1], p[..., 1:2], p[..., 2:3]
        return np.concatenate([(x - xc) ** 2 + (z - zc) ** 2 - R1**2,
                               (y - yc) ** 2 + z**2 - R2**2], axis=-1)

    return _make("cylinder_intersection", 3, ev, d1, d2, window, TWO_PI, implicit,
                 {"R1": R1, "R2": R2, "center": [xc, yc, zc]}, _jet_from_parts(parts))


def torus_knot_path(major: float = 1.0, minor: float = 0.2, p: int = 3, q: int = 2,
                    center=(0.0, 2.0, 1.0), window=(0.0, TWO_PI)) -> ParametricPath:
    cx, cy, cz = center

    def parts(w):
        w, xp = _ns(w)
        cp, sp = xp.cos(p * w), xp.sin(p * w)
        cq, sq = xp.cos(q * w), xp.sin(q * w)
        rho, drho, ddrho = major + minor * cp, -minor * p * sp, -minor * p**2 * cp
        x = (cx + rho * cq, drho * cq - q * rho * sq,
             ddrho * cq - 2 * q * drho * sq - q**2 * rho * cq)
        y = (cy + rho * sq, drho * sq + q * rho * cq,
             ddrho * sq + 2 * q * drho * cq - q**2 * rho * sq)
        z = (cz + minor * sp, minor * p * cp, -minor * p**2 * sp)
        return x, y, z

    def ev(w):
        x, y, z = parts(w)
        return _stack(x[0], y[0], z[0])

    def d1(w):
        x, y, z = parts(w)
        return _stack(x[1], y[1], z[1])

    def d2(w):
        x, y, z = parts(w)
        return _stack(x[2], y[2], z[2])

    def implicit(pt):
        pt = np.asarray(pt)
        x, y, z = pt[..., 0:1] - cx, pt[..., 1:2] - cy, pt[..., 2:3] - cz
        return (np.sqrt(x**2 + y**2) - major) ** 2 + z**2 - minor**2

    return _make("torus_knot", 3, ev, d1, d2, window, TWO_PI, implicit,
                 {"major": major, "minor": minor, "p": p, "q": q, "center": list(center)},
                 _jet_from_parts(parts))


_BUILDERS = {
    "sinusoid": sinusoid_path,
    "cassini": cassini_path,
    "lemniscate": lemniscate_path,
    "cylinder_intersection": cylinder_intersection_path,
    "torus_knot": torus_knot_path,
}


def builtin_path(name: str, params: dict | None = None) -> ParametricPath:
    """Build one of the catalog paths by name."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown path {name!r}; catalog: {', '.join(PATH_NAMES)}")
    params = dict(params or {})
    if "w_window" in params:
        params["window"] = tuple(params.pop("w_window"))
    try:
        return _BUILDERS[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for path {name!r}: {exc}") from None


def phi(path: ParametricPath, xi) -> np.ndarray:
    """Path functions phi_i(xi) = zeta_i - f_i(w) for xi = (zeta, w)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != path.dim_m + 1:
        raise ValueError(f"xi has {xi.shape[-1]} entries, expected {path.dim_m + 1}")
    return xi[..., :-1] - path.eval(xi[..., -1])


# --------------------------------------------------------------------------
# distance oracle
# --------------------------------------------------------------------------

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _sqdist(path, points, w):
    diff = path.eval(w) - points[..., None, :] if w.ndim > 1 else path.eval(w) - points
    return np.sum(diff**2, axis=-1)


def _golden_min(path, pts, a, b, tol):
    """Vectorised golden-section search of ||f(w) - p||^2 on brackets [a, b]."""
    a0, b0 = a, b
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _sqdist(path, pts, c[:, None])[:, 0]
    fd = _sqdist(path, pts, d[:, None])[:, 0]
    while pts.shape[0] and np.max(b - a) > tol:
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c, d = np.where(left, b - _GOLDEN * (b - a), d), np.where(left, c, a + _GOLDEN * (b - a))
        fc, fd = np.where(left, np.nan, fd), np.where(left, fc, np.nan)
        if np.any(left):
            fc[left] = _sqdist(path, pts[left], c[left][:, None])[:, 0]
        if not np.all(left):
            fd[~left] = _sqdist(path, pts[~left], d[~left][:, None])[:, 0]
    w = 0.5 * (a + b)
    best = _sqdist(path, pts, w[:, None])[:, 0]
    return _polish(path, pts, w, best, a0, b0)


def _polish(path, pts, w, best, lo, hi, iters: int = 4):
    """Gauss-Newton on (f(w) - p) . f'(w) = 0; a step is kept only if it lowers the distance.

    Golden section on the squared distance stalls at a relative accuracy of
    about sqrt(eps) in w; this recovers full precision near the minimiser.
    """
    for _ in range(iters):
        t = path.d1(w)
        g = np.sum((path.eval(w) - pts) * t, axis=-1)
        tt = np.sum(t * t, axis=-1)
        step = np.divide(g, tt, out=np.zeros_like(g), where=tt > 0)
        trial = np.clip(w - step, lo, hi)
        val = _sqdist(path, pts, trial[:, None])[:, 0]
        better = val < best
        w, best = np.where(better, trial, w), np.where(better, val, best)
    return best


def dist_to_path_many(path: ParametricPath, points, resolution: int = 2000,
                      windows=None, tol: float = 1e-8, candidates: int = 3) -> np.ndarray:
    """Distance from each row of ``points`` to the path, by scan + golden section.

    ``windows`` is either ``None`` (use ``path.w_window``), one ``(lo, hi)``
    pair, or an ``(N, 2)`` array of per-point windows.  The ``candidates``
    lowest local minima of the scan are refined, so a point near a
    self-crossing is not locked onto the wrong branch by grid aliasing.
    """
    if resolution < 100:
        raise ValueError("resolution must be >= 100")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    N, m = points.shape
    if m != path.dim_m:
        raise ValueError(f"points have dimension {m}, path has {path.dim_m}")
    win = np.asarray(path.w_window if windows is None else windows, dtype=float)
    shared = win.ndim == 1
    win = np.broadcast_to(win, (N, 2))
    if np.any(win[:, 1] <= win[:, 0]):
        raise ValueError("empty parameter window")

    K = max(1, min(candidates, resolution // 3))
    out = np.empty(N)
    chunk = max(1, 1_000_000 // resolution)
    frac = np.linspace(0.0, 1.0, resolution)
    for start in range(0, N, chunk):
        sl = slice(start, min(N, start + chunk))
        pts, lo, hi = points[sl], win[sl, 0], win[sl, 1]
        grid = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        if shared:      # one grid for all points: evaluate the path once
            samples = path.eval(grid[0])
            d2 = np.zeros(grid.shape)
            for k in range(m):
                d2 += np.subtract.outer(pts[:, k], samples[:, k]) ** 2
        else:
            d2 = _sqdist(path, pts, grid)
        best = d2.min(axis=1)
        padded = np.pad(d2, ((0, 0), (1, 1)), constant_values=np.inf)
        is_min = (d2 <= padded[:, :-2]) & (d2 <= padded[:, 2:])
        ranked = np.where(is_min, d2, np.inf)
        idx = np.argpartition(ranked, K - 1, axis=1)[:, :K]
        rows = np.repeat(np.arange(len(pts)), K)
        idx = idx.ravel()
        valid = np.isfinite(ranked[rows, idx])
        rows, idx = rows[valid], idx[valid]
        a = grid[rows, np.maximum(idx - 1, 0)]
        b = grid[rows, np.minimum(idx + 1, resolution - 1)]
        refined = np.full(len(pts), np.inf)
        np.minimum.at(refined, rows, _golden_min(path, pts[rows], a, b, tol))
        out[sl] = np.sqrt(np.minimum(best, refined))
    return out


def dist_to_path(path: ParametricPath, point, resolution: int = 2000, window=None) -> float:
    """inf over the parameter window of ||point - f(w)||."""
    point = np.asarray(point, dtype=float)
    if point.shape != (path.dim_m,):
        raise ValueError(f"point must have shape ({path.dim_m},)")
    return float(dist_to_path_many(path, point[None, :], resolution, window)[0])
