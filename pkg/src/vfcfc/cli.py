"""Command line entry point: ``vfcfc run | check-assumptions | list-presets``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as C
from .analysis import ErrorSeries, error_series, settle_metrics, uub_bounds
from .constraint import ccfc_second_order, feasibility_residual, vfc_b
from .control import (BOUND_FUNCTIONS, check_assumption4, check_assumption5, check_assumption6,
                      fit_reference_alpha, q_grid, sample_states, sigma_grid)
from .plants import IKDomainError
from .sim import Scenario, SimulationError, TrajectoryLog, run_scenario

log_ = logging.getLogger("vfcfc")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
FEASIBILITY_TOL = 1e-10


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def csv_columns(sc: Scenario, log: TrajectoryLog) -> list[str]:
    n, k, mi = sc.sys.n, log.alpha_hat.shape[1], log.tau.shape[1]
    return (["t"] + [f"q{i + 1}" for i in range(n)] + [f"qdot{i + 1}" for i in range(n)] + ["w"]
            + [f"alpha_hat{i + 1}" for i in range(k)] + [f"tau{i + 1}" for i in range(mi)]
            + ["beta_norm", "phi_norm", "dist_hgh", "dist_phys"])


def write_csv(path: Path, sc: Scenario, log: TrajectoryLog, es: ErrorSeries) -> None:
    data = np.column_stack([log.t, log.q, log.qdot, log.w, log.alpha_hat, log.tau,
                            es.beta_norm, es.phi_norm, es.dist_hgh, es.dist_phys])
    np.savetxt(path, data, fmt="%.15g", delimiter=",", header=",".join(csv_columns(sc, log)),
               comments="")


def write_svg(path: Path, sc: Scenario, log: TrajectoryLog, es: ErrorSeries) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": sc.id, "svg.fonttype": "path"}):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4.5))
        ref = sc.task_path or sc.ctx.path
        lo, hi = ref.w_window
        if ref.period is None:
            lo, hi = min(lo, float(np.min(log.w))), max(hi, float(np.max(log.w)))
        curve = ref.eval(np.linspace(lo, hi, 2000))
        pts = es.task_points if es.task_points is not None else sc.ctx.A.apply(log.q)
        ax0.plot(curve[:, 0], curve[:, 1], "k--", lw=1, label="desired path")
        ax0.plot(pts[:, 0], pts[:, 1], lw=1.2, label="trajectory")
        ax0.plot(pts[0, 0], pts[0, 1], "o", ms=4, label="start")
        ax0.set_xlabel("x")
        ax0.set_ylabel("y")
        ax0.set_title("x-y projection" if ref.dim_m > 2 else "path overlay")
        ax0.axis("equal")
        ax0.legend(loc="best", fontsize=8)
        floor = 1e-12
        ax1.semilogy(es.t, np.maximum(es.beta_norm, floor), label="||beta||")
        ax1.semilogy(es.t, np.maximum(es.phi_norm, floor), label="||phi||")
        ax1.semilogy(es.t, np.maximum(es.dist_phys, floor), label="dist to path")
        ax1.set_xlabel("t [s]")
        ax1.set_title("errors")
        ax1.legend(loc="best", fontsize=8)
        fig.suptitle(sc.id)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def scenario_metrics(sc: Scenario, log: TrajectoryLog, es: ErrorSeries,
                     alpha_norm_override: float | None = None, tail_fraction: float = 0.2) -> dict:
    """Structured run report; bounds use lambda/rho estimated along the logged states."""
    sm = settle_metrics(es, tail_fraction)
    out = {
        "id": sc.id, "controller": sc.cfg.kind, "plant_mode": sc.plant_mode, "step": sc.step,
        "duration": sc.duration, "samples": len(log),
        "terminal": {"beta_norm": _finite(es.beta_norm[-1]), "phi_norm": _finite(es.phi_norm[-1]),
                     "dist_hgh": _finite(es.dist_hgh[-1]), "dist_phys": _finite(es.dist_phys[-1])},
        "tail_fraction": tail_fraction,
        "ultimate_bound_est": _finite(sm.ultimate_bound_est),
        "settle_time": _finite(sm.settle_time),
        "mean_effort": _finite(sm.mean_effort),
        "fk_failures": int(np.count_nonzero(np.isnan(es.dist_phys))),
    }
    if log.alpha_hat.shape[1]:
        out["alpha_hat_min"] = float(np.min(log.alpha_hat))
        out["alpha_hat_terminal"] = log.alpha_hat[-1].tolist()
        states = log.q[:: max(1, len(log) // 300)]
        lam = check_assumption4(sc.sys, sc.ctx.A, sc.ctx.P, states)
        rho = check_assumption5(sc.sys, sc.ctx.A, states, sigma_grid(sc.sys))
        out["lambda_low_est"], out["rho_w_est"] = lam, rho
        norms = {"terminal_alpha_hat": float(np.linalg.norm(log.alpha_hat[-1]))}
        if alpha_norm_override is not None:
            norms["override"] = float(alpha_norm_override)
        bounds = {}
        for label, a in norms.items():
            try:
                b = uub_bounds(sc.cfg.kappa, lam, rho, sc.cfg.l1, sc.cfg.l2, sc.cfg.mu, a, sc.ctx.P)
            except ValueError as exc:
                bounds[label] = {"error": str(exc)}
                continue
            bounds[label] = {**asdict(b), "alpha_norm": a,
                             "tail_within_dbar": bool(sm.ultimate_bound_est <= b.dbar)}
        out["uub"] = bounds
        out["notes"] = ["Lyapunov weight on the alpha error uses 1/l1 (1+rho) while X1, X2 use "
                        "2/l1 (1+rho); both are kept as printed."]
    return out


def run_one(cfg: C.ScenarioConfig, out_dir: Path, alpha_norm: float | None = None) -> dict:
    sc = C.build_scenario(cfg)
    log = run_scenario(sc)
    es = error_series(log, sc.ctx, sc.task_path, sc.geom)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / f"{cfg.id}_trajectory.csv", sc, log, es)
    metrics = scenario_metrics(sc, log, es, alpha_norm)
    (out_dir / f"{cfg.id}_metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    write_svg(out_dir / f"{cfg.id}_path.svg", sc, log, es)
    return metrics


# --------------------------------------------------------------------------
# assumption report
# --------------------------------------------------------------------------

def assumption_report(cfg: C.ScenarioConfig) -> tuple[list[str], bool]:
    """Human-readable certificate lines and overall pass flag."""
    lines, ok = [], True
    a = cfg.assumptions

    def cert(name, passed, detail):
        nonlocal ok
        ok &= bool(passed)
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    if cfg.constraint == "ccfc":
        c = C.build_ccfc(cfg)
        p = np.asarray(cfg.ccfc.probe, float)
        half = p.size // 2
        res = feasibility_residual(*ccfc_second_order(c, p[:half], p[half:]))
        cert("feasibility (conventional constraint)", res <= FEASIBILITY_TOL,
             f"residual {res:.12g} at probe {p.tolist()}")
        return lines, ok

    sys_, geom = C.build_plant(cfg)
    try:
        ctx, _ = C.build_context(cfg, geom)
    except IKDomainError as exc:
        ctx = None
        cert("ik domain", False, str(exc))

    if ctx is not None:
        rng = np.random.default_rng(a.seed)
        n, lo_w, hi_w = ctx.A.cols_n, *ctx.path.w_window
        worst = 0.0
        for _ in range(a.feasibility_samples):
            q, qd = rng.uniform(-np.pi, np.pi, n), rng.uniform(-2.0, 2.0, n)
            b = vfc_b(ctx, q, qd, rng.uniform(lo_w, hi_w))
            worst = max(worst, feasibility_residual(ctx.A.entries, b))
        cert("feasibility (vector-field constraint)", worst < FEASIBILITY_TOL,
             f"max residual {worst:.3g} over {a.feasibility_samples} random states")

    A = C.make_selection_matrix(cfg.selection, sys_.n)
    P = np.eye(len(cfg.selection)) if cfg.controller.P is None else np.asarray(cfg.controller.P, float)
    grid = q_grid(a.grid_per_axis, sys_.n)
    lam = check_assumption4(sys_, A, P, grid)
    cert("lambda_low", lam > 0, f"{lam:.12g} over {len(grid)} grid states")
    sig = sigma_grid(sys_, a.sigma_samples, a.seed)
    rho = check_assumption5(sys_, A, grid, sig)
    cert("rho_W", rho > -1, f"{rho:.12g} over {len(grid)} states x {len(sig)} uncertainty samples")

    if ctx is not None and rho > -1:
        bound = BOUND_FUNCTIONS[cfg.bound or cfg.plant.name]()
        fit = list(sample_states(ctx, a.envelope_samples, seed=a.seed))
        alpha = fit_reference_alpha(ctx, sys_, bound, rho, fit, sig)
        check = list(sample_states(ctx, a.envelope_samples, seed=a.seed + 1))
        margins = check_assumption6(ctx, sys_, bound, rho, alpha, check, sig)
        cert("uncertainty envelope", float(np.min(margins)) >= 0,
             f"reference alpha {np.round(alpha, 6).tolist()}, min margin {np.min(margins):.6g}, "
             f"median margin {np.median(margins):.6g} on {len(check)} held-out states")
    return lines, ok


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _configs(args) -> list[C.ScenarioConfig]:
    cfgs = [C.load_preset(p) for p in (args.preset or [])]
    cfgs += [C.load_config(p) for p in (args.config or [])]
    if not cfgs:
        raise C.ConfigError("--config/--preset", "give at least one scenario")
    out = []
    for cfg in cfgs:
        changes = {k: getattr(args, k) for k in ("step", "duration") if getattr(args, k, None) is not None}
        if getattr(args, "out_dir", None):
            changes["out_dir"] = args.out_dir
        cfg = cfg.replace(**changes)
        C.validate(cfg)
        out.append(cfg)
    return out


def cmd_run(args) -> int:
    status = EXIT_OK
    for cfg in _configs(args):
        try:
            m = run_one(cfg, Path(cfg.out_dir), args.alpha_norm)
        except (SimulationError, IKDomainError, np.linalg.LinAlgError) as exc:
            print(f"{cfg.id}: FAILED: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        t = m["terminal"]
        print(f"{cfg.id}: {m['samples']} samples, terminal ||beta||={t['beta_norm']:.3g}, "
              f"dist={t['dist_phys']}, tail max dist={m['ultimate_bound_est']} -> {cfg.out_dir}")
    return status


def cmd_check(args) -> int:
    status = EXIT_OK
    for cfg in _configs(args):
        lines, ok = assumption_report(cfg)
        print(f"== {cfg.id}")
        print("\n".join(lines))
        status = status if ok else EXIT_FAIL
    return status


def cmd_list(args) -> int:
    for name in C.preset_names():
        print(f"{name:40s} {C.load_preset(name).description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vfcfc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def scen(sp):
        sp.add_argument("--config", action="append", metavar="YAML", help="scenario file (repeatable)")
        sp.add_argument("--preset", action="append", metavar="NAME", help="bundled preset (repeatable)")

    r = sub.add_parser("run", help="simulate scenarios and write CSV, metrics and SVG")
    scen(r)
    r.add_argument("--out-dir", dest="out_dir")
    r.add_argument("--step", type=float)
    r.add_argument("--duration", type=float)
    r.add_argument("--alpha-norm", dest="alpha_norm", type=float,
                   help="extra ||alpha|| for the ultimate-bound report")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check-assumptions", help="numerical certificates for a scenario")
    scen(c)
    c.set_defaults(func=cmd_check)
    ls = sub.add_parser("list-presets", help="show bundled presets")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
