"""Error signals, ultimate-boundedness arithmetic and summary metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraint import VfcContext
from .geometry import ParametricPath, dist_to_path_many, phi
from .plants import ManipulatorGeometry, fk_many
from .sim import TrajectoryLog
from .vectorfield import chi_s

_PAD = 1e-3


@dataclass
class ErrorSeries:
    t: np.ndarray
    beta_norm: np.ndarray
    phi_norm: np.ndarray
    dist_hgh: np.ndarray
    dist_phys: np.ndarray
    effort: np.ndarray
    task_points: np.ndarray | None = None    # end-effector positions for joint-space runs

    def __len__(self):
        return len(self.t)


def augmented_path(path: ParametricPath) -> ParametricPath:
    """The lifted curve w -> (f(w), w) in R^{m+1}; never periodic."""
    def ev(w):
        w = np.asarray(w, dtype=float)
        return np.concatenate([path.eval(w), w[..., None]], axis=-1)

    def d1(w):
        w = np.asarray(w, dtype=float)
        return np.concatenate([path.d1(w), np.ones_like(w)[..., None]], axis=-1)

    return ParametricPath(name=f"{path.name}_hgh", dim_m=path.dim_m + 1, eval=ev, d1=d1, d2=None,
                          w_window=path.w_window, tangent_bound=math.hypot(path.tangent_bound, 1.0))


def dist_hgh_many(path: ParametricPath, xi, resolution: int = 400) -> np.ndarray:
    """Distance of each xi = (zeta, w) to the lifted path.

    The lifted point at the current w sits at distance ||phi||, so the
    minimiser lies in [w - ||phi||, w + ||phi||]; that window is searched.
    The window is narrow, hence the coarser default scan.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    r = np.linalg.norm(phi(path, xi), axis=-1) + _PAD
    w = xi[:, -1]
    return dist_to_path_many(augmented_path(path), xi, resolution, np.stack([w - r, w + r], axis=1))


def dist_phys_many(path: ParametricPath, points, w_hint=None, resolution: int = 2000) -> np.ndarray:
    """Distance of physical points to the path.

    Periodic paths are scanned over one period.  Otherwise a window around
    ``w_hint`` of half-width 2 ||zeta - f(w_hint)|| + 1 is used, which
    contains the minimiser for graph-type paths f(w) = (w, g(w)).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if path.period is not None or w_hint is None:
        return dist_to_path_many(path, points, resolution)
    w_hint = np.asarray(w_hint, dtype=float)
    r = 2.0 * np.linalg.norm(points - path.eval(w_hint), axis=-1) + 1.0
    return dist_to_path_many(path, points, resolution, np.stack([w_hint - r, w_hint + r], axis=1))


def error_series(log: TrajectoryLog, ctx: VfcContext, task_path: ParametricPath | None = None,
                 geom: ManipulatorGeometry | None = None, resolution: int = 2000) -> ErrorSeries:
    """Per-sample error signals of a trajectory.

    When ``task_path`` and ``geom`` are given the constraint lives in joint
    space; dist_phys is then measured between fk(q) and the task-space path,
    with Newton seeded at task_path(w).  Samples where fk does not converge
    are reported as NaN.
    """
    if log.q.shape[1] != ctx.A.cols_n:
        raise ValueError(f"log has n={log.q.shape[1]} but the selection expects {ctx.A.cols_n}")
    if log.beta.shape[1] != ctx.m:
        raise ValueError(f"log tracks an R^{log.beta.shape[1]} path, context has R^{ctx.m}")
    zeta = ctx.A.apply(log.q)
    xi = np.concatenate([zeta, log.w[:, None]], axis=1)
    beta = ctx.A.apply(log.qdot) - chi_s(ctx.path, ctx.gains, xi)
    phi_norm = np.linalg.norm(phi(ctx.path, xi), axis=-1)
    d_hgh = dist_hgh_many(ctx.path, xi)
    task_points = None
    if task_path is not None:
        if geom is None:
            raise ValueError("task-space distances need the arm geometry")
        task_points, ok = fk_many(log.q, geom, seed=task_path.eval(log.w))
        task_points = np.where(ok[:, None], task_points, np.nan)
        d_phys = np.full(len(log), np.nan)
        if np.any(ok):
            d_phys[ok] = dist_phys_many(task_path, task_points[ok], log.w[ok], resolution)
    else:
        d_phys = dist_phys_many(ctx.path, zeta, log.w, resolution)
    return ErrorSeries(t=log.t, beta_norm=np.linalg.norm(beta, axis=-1), phi_norm=phi_norm,
                       dist_hgh=d_hgh, dist_phys=d_phys,
                       effort=np.linalg.norm(log.tau, axis=-1), task_points=task_points)


# --------------------------------------------------------------------------
# ultimate-boundedness arithmetic
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UubBounds:
    K1: float
    K2: float
    K3: float
    X1: float
    X2: float
    R: float
    dbar: float

    def T(self, d: float, s: float) -> float:
        """Time for the composite error to enter the ball of radius ``d`` from initial size ``s``.

        Evaluated from the closed form with ``d`` in place of the ultimate bound.
        The denominator vanishes at d = dbar, so only d > dbar yields a finite time.
        """
        ratio = self.X1 / self.X2
        if s <= d * math.sqrt(self.X2 / self.X1):
            return 0.0
        den = self.K1 * d * d * ratio - self.K2 * d * math.sqrt(ratio) - self.K3
        if den <= 0:
            return math.inf
        return (self.X2 * s * s - (self.X1**2 / self.X2) * d * d) / den

    def d(self, s: float) -> float:
        """Uniform bound for an initial composite error of size ``s``."""
        return math.sqrt(self.X2 / self.X1) * max(s, self.R)


def uub_bounds(kappa: float, lambda_low: float, rho_w: float, l1: float, l2: float, mu: float,
               alpha_norm: float, P) -> UubBounds:
    if rho_w <= -1:
        raise ValueError(f"rho_W = {rho_w} <= -1: the uncertainty assumption is violated")
    for name, v in (("kappa", kappa), ("lambda_low", lambda_low), ("l1", l1), ("l2", l2), ("mu", mu)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if alpha_norm < 0:
        raise ValueError("alpha_norm must be non-negative")
    eig = np.linalg.eigvalsh(np.atleast_2d(np.asarray(P, dtype=float)))
    c = 1.0 + rho_w
    K1 = min(2.0 * kappa * lambda_low * c, 2.0 * c * l2 / l1)
    K2 = 2.0 * c * (l2 / l1) * alpha_norm
    K3 = 0.5 * c * mu
    X1 = min(float(eig[0]), 2.0 * c / l1)
    X2 = max(float(eig[-1]), 2.0 * c / l1)
    R = (K2 + math.sqrt(K2 * K2 + 4.0 * K1 * K3)) / (2.0 * K1)
    return UubBounds(K1, K2, K3, X1, X2, R, math.sqrt(X2 / X1) * R)


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SettleMetrics:
    ultimate_bound_est: float
    settle_time: float
    mean_effort: float


def tail_max(values, tail_fraction: float = 0.2) -> float:
    values = np.asarray(values, dtype=float)
    start = int(math.floor(len(values) * (1.0 - tail_fraction)))
    return float(np.max(values[min(start, len(values) - 1):]))


def settle_metrics(series: ErrorSeries, tail_fraction: float = 0.2) -> SettleMetrics:
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    if len(series) < 2:
        raise ValueError("need at least two samples")
    d = series.dist_phys
    ub = tail_max(d, tail_fraction)
    above = np.nonzero(~(d <= 1.05 * ub))[0]      # NaN counts as not settled
    settle = series.t[0] if above.size == 0 else series.t[min(above[-1] + 1, len(d) - 1)]
    t = series.t
    mean_effort = float(np.trapezoid(series.effort, t) / (t[-1] - t[0]))
    return SettleMetrics(ub, float(settle), mean_effort)


@dataclass(frozen=True)
class DecayFit:
    rate: float          # fitted slope of log ||beta|| (negative for decay)
    intercept: float
    r2: float
    n_samples: int
    t_range: tuple[float, float] = field(default=(math.nan, math.nan))


def fit_exponential_decay(t, values, t_start: float = 0.5, floor: float = 1e-9) -> DecayFit:
    """Least-squares line through log(values) for t >= t_start.

    Samples at or below ``floor`` are dropped: once the signal reaches the
    rounding level of the integrator it no longer carries decay information.
    """
    t, v = np.asarray(t, dtype=float), np.asarray(values, dtype=float)
    keep = (t >= t_start) & (v > floor)
    if keep.sum() < 3:
        raise ValueError("fewer than three usable samples for the fit")
    x, y = t[keep], np.log(v[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, int(keep.sum()), (float(x[0]), float(x[-1])))
