"""Scenario configuration: YAML files <-> dataclasses -> runnable scenarios."""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import dacite
import numpy as np
import yaml

from .constraint import CcfcConstraint, VfcContext, ccfc_for_path
from .control import BOUND_FUNCTIONS, ControllerConfig
from .geometry import PATH_NAMES, builtin_path, make_selection_matrix
from .plants import (ManipulatorGeometry, ManipulatorUncertainty, joint_path_from_task, manipulator,
                     pvtol)
from .sim import Scenario, SimState
from .vectorfield import GvfGains

PLANT_NAMES = ("pvtol", "manipulator")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message starts with the offending field."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class PlantSpec:
    name: str
    params: dict = field(default_factory=dict)
    uncertainty: dict = field(default_factory=dict)


@dataclass
class PathSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class ControllerSpec:
    kind: str = "nominal"
    kappa: float = 5.0
    mu: float = 0.1
    l1: float = 0.5
    l2: float = 0.1
    eps_dz: float = 1.0
    P: list[list[float]] | None = None      # identity when omitted


@dataclass
class InitialSpec:
    q: list[float]
    qdot: list[float]
    w: float = 0.0
    alpha_hat: list[float] = field(default_factory=list)
    t: float = 0.0


@dataclass
class CcfcSpec:
    Lambda: float = 1.0
    probe: list[float] = field(default_factory=lambda: [0.0, 0.0, 1.0, 0.0])


@dataclass
class AssumptionSpec:
    grid_per_axis: int = 50
    sigma_samples: int = 20
    envelope_samples: int = 200
    seed: int = 0
    feasibility_samples: int = 10_000


@dataclass
class ScenarioConfig:
    id: str
    plant: PlantSpec
    path: PathSpec
    initial: InitialSpec
    selection: list[int] = field(default_factory=lambda: [1, 2])
    gains: list[float] = field(default_factory=lambda: [1.0, 1.0])
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    plant_mode: str = "nominal"
    duration: float = 30.0
    step: float = 1e-3
    out_dir: str = "out"
    bound: str | None = None                # defaults to the plant's own bound function
    constraint: str = "vfc"                 # vfc | ccfc (feasibility demonstration only)
    ccfc: CcfcSpec | None = None
    assumptions: AssumptionSpec = field(default_factory=AssumptionSpec)
    description: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# (de)serialisation
# --------------------------------------------------------------------------

_DACITE = dacite.Config(strict=True, cast=[], type_hooks={float: lambda v: float(v)
                                                          if isinstance(v, int) and not isinstance(v, bool)
                                                          else v})


def config_from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", f"expected a mapping, got {type(data).__name__}")
    try:
        cfg = dacite.from_dict(ScenarioConfig, data, config=_DACITE)
    except dacite.MissingValueError as exc:
        raise ConfigError(exc.field_path, "missing value") from None
    except dacite.WrongTypeError as exc:
        raise ConfigError(exc.field_path, f"wrong type ({exc.value!r})") from None
    except dacite.UnexpectedDataError as exc:
        raise ConfigError(",".join(sorted(exc.keys)), "unknown field") from None
    except dacite.DaciteError as exc:
        raise ConfigError("<root>", str(exc)) from None
    validate(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    return loads(text)


def loads(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "<yaml>"
        raise ConfigError(where, f"YAML parse error: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(data)


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def _n_of(plant: str) -> int:
    return 3


def validate(cfg: ScenarioConfig) -> None:
    if cfg.plant.name not in PLANT_NAMES:
        raise ConfigError("plant.name", f"unknown plant {cfg.plant.name!r}; catalog: {', '.join(PLANT_NAMES)}")
    if cfg.path.name not in PATH_NAMES:
        raise ConfigError("path.name", f"unknown path {cfg.path.name!r}; catalog: {', '.join(PATH_NAMES)}")
    if cfg.controller.kind not in ("nominal", "adaptive_robust"):
        raise ConfigError("controller.kind", "must be nominal or adaptive_robust")
    for name in ("kappa", "mu", "l1", "l2", "eps_dz"):
        if not getattr(cfg.controller, name) > 0:
            raise ConfigError(f"controller.{name}", "must be positive")
    if cfg.plant_mode not in ("nominal", "true"):
        raise ConfigError("plant_mode", "must be nominal or true")
    if cfg.constraint not in ("vfc", "ccfc"):
        raise ConfigError("constraint", "must be vfc or ccfc")
    if not cfg.step > 0:
        raise ConfigError("step", "must be positive")
    if not cfg.duration >= 0:
        raise ConfigError("duration", "must be non-negative")
    n = _n_of(cfg.plant.name)
    for name in ("q", "qdot"):
        v = getattr(cfg.initial, name)
        if len(v) != n or not np.all(np.isfinite(v)):
            raise ConfigError(f"initial.{name}", f"expected {n} finite numbers")
    if cfg.controller.kind == "adaptive_robust":
        bound = cfg.bound or cfg.plant.name
        if bound not in BOUND_FUNCTIONS:
            raise ConfigError("bound", f"unknown bound function {bound!r}; "
                                       f"catalog: {', '.join(BOUND_FUNCTIONS)}")
        if not cfg.initial.alpha_hat or any(a <= 0 for a in cfg.initial.alpha_hat):
            raise ConfigError("initial.alpha_hat", "adaptive control needs positive initial estimates")
    m = len(cfg.selection)
    if cfg.plant.name == "manipulator" and m != 3:
        raise ConfigError("selection", "the arm follows a 3-D task-space path with A = I")
    try:
        make_selection_matrix(cfg.selection, n)
    except ValueError as exc:
        raise ConfigError("selection", str(exc)) from None
    if len(cfg.gains) != m or any(k <= 0 for k in cfg.gains):
        raise ConfigError("gains", f"expected {m} positive GVF gains")
    if cfg.controller.P is not None:
        P = np.asarray(cfg.controller.P, float)
        if P.shape != (m, m):
            raise ConfigError("controller.P", f"expected a {m}x{m} matrix")
    if cfg.constraint == "ccfc" and cfg.ccfc is None:
        raise ConfigError("ccfc", "ccfc constraint needs a ccfc section")


# --------------------------------------------------------------------------
# building runnable objects
# --------------------------------------------------------------------------

def build_plant(cfg: ScenarioConfig):
    if cfg.plant.name == "pvtol":
        if cfg.plant.uncertainty:
            raise ConfigError("plant.uncertainty", "pvtol uncertainty lives in plant.params")
        try:
            return pvtol(cfg.plant.params), None
        except (TypeError, ValueError) as exc:
            raise ConfigError("plant.params", str(exc)) from None
    try:
        geom = ManipulatorGeometry(**cfg.plant.params)
        unc = ManipulatorUncertainty(**{k: tuple(v) if isinstance(v, list) else v
                                        for k, v in cfg.plant.uncertainty.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError("plant.params", str(exc)) from None
    return manipulator(geom, unc), geom


def build_context(cfg: ScenarioConfig, geom=None):
    """(VfcContext, task-space path or None)."""
    try:
        path = builtin_path(cfg.path.name, cfg.path.params)
    except ValueError as exc:
        raise ConfigError("path.params", str(exc)) from None
    task_path = None
    if cfg.plant.name == "manipulator":
        task_path, path = path, joint_path_from_task(path, geom)   # may raise IKDomainError
    if path.dim_m != len(cfg.selection):
        raise ConfigError("selection", f"path {cfg.path.name} lives in R^{path.dim_m}")
    P = np.eye(path.dim_m) if cfg.controller.P is None else np.asarray(cfg.controller.P, float)
    try:
        ctx = VfcContext(make_selection_matrix(cfg.selection, _n_of(cfg.plant.name)), path,
                         GvfGains(np.asarray(cfg.gains, float)), P)
    except ValueError as exc:
        raise ConfigError("controller.P", str(exc)) from None
    return ctx, task_path


def build_ccfc(cfg: ScenarioConfig) -> CcfcConstraint:
    if cfg.ccfc is None:
        raise ConfigError("ccfc", "section missing")
    try:
        return ccfc_for_path(cfg.path.name, cfg.path.params, cfg.ccfc.Lambda)
    except ValueError as exc:
        raise ConfigError("path.name", str(exc)) from None


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    if cfg.constraint != "vfc":
        raise ConfigError("constraint", "only vfc scenarios can be simulated; "
                                        "ccfc presets are feasibility demonstrations")
    sys, geom = build_plant(cfg)
    ctx, task_path = build_context(cfg, geom)
    c = cfg.controller
    ctrl = ControllerConfig(kind=c.kind, kappa=c.kappa, mu=c.mu, l1=c.l1, l2=c.l2, eps_dz=c.eps_dz)
    bound = None
    alpha = np.zeros(0)
    if c.kind == "adaptive_robust":
        bound = BOUND_FUNCTIONS[cfg.bound or cfg.plant.name]()
        alpha = np.asarray(cfg.initial.alpha_hat, float)
        if alpha.size != bound.k_dim:
            raise ConfigError("initial.alpha_hat", f"bound function needs {bound.k_dim} entries")
    init = SimState(cfg.initial.t, np.asarray(cfg.initial.q, float),
                    np.asarray(cfg.initial.qdot, float), float(cfg.initial.w), alpha)
    return Scenario(id=cfg.id, sys=sys, ctx=ctx, cfg=ctrl, plant_mode=cfg.plant_mode, initial=init,
                    duration=cfg.duration, step=cfg.step, bound=bound, task_path=task_path,
                    geom=geom, meta={"description": cfg.description})


# --------------------------------------------------------------------------
# bundled presets
# --------------------------------------------------------------------------

def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("vfcfc.presets").iterdir()
                  if p.name.endswith(".yaml"))


def load_preset(name: str) -> ScenarioConfig:
    res = resources.files("vfcfc.presets") / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return loads(res.read_text())
