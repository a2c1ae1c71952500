"""Run every bundled simulation preset in parallel and print a one-line summary per scenario.

    python3 scripts/run_all_presets.py --out-dir out --jobs 4
"""
import argparse
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from vfcfc.cli import run_one
from vfcfc.config import load_preset, preset_names
from vfcfc.plants import IKDomainError
from vfcfc.sim import SimulationError


def _one(name: str, out_dir: str) -> tuple[str, dict | str]:
    cfg = load_preset(name)
    if cfg.constraint != "vfc":
        return name, "skipped (feasibility demo, nothing to simulate)"
    try:
        return name, run_one(cfg, Path(out_dir))
    except (IKDomainError, SimulationError) as exc:
        return name, f"FAILED: {exc}"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="out")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    names = preset_names()
    with ProcessPoolExecutor(args.jobs) as pool:
        results = dict(pool.map(_one, names, [args.out_dir] * len(names)))
    for name in names:
        r = results[name]
        if isinstance(r, str):
            print(f"{name:40s} {r}")
            continue
        t = r["terminal"]
        extra = f" alpha_min={r['alpha_hat_min']:.3g}" if "alpha_hat_min" in r else ""
        print(f"{name:40s} |beta(T)|={t['beta_norm']:.3g} dist(T)={t['dist_phys']:.3g} "
              f"tail max={r['ultimate_bound_est']:.4g}{extra}")
    summary = {k: v for k, v in results.items() if isinstance(v, dict)}
    Path(args.out_dir, "summary.json").write_text(json.dumps(summary, indent=2, default=str))


if __name__ == "__main__":
    main()
