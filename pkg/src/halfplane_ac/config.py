"""Experiment configuration: YAML loading, defaults and validation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .domain import ConePartition
from .heteroclinic import solve_connection
from .potential import MultiWellPotential, equilateral_wells, make_product_potential

DEFAULTS: dict = {
    "name": "experiment",
    "potential": {"wells": "equilateral", "well_radius": 1.0, "scale": 1.0},
    "metric": {"resolution": 400, "refine": True, "profile_step": 0.02},
    "grid": {"radii": [40.0], "h": 0.25},
    "boundary": {
        "cone": "auto",             # or {alpha1_deg, alpha2_deg, middle}
        "smoothing_angle": "max",   # or degrees
        "flat_width": "auto",       # or a length; auto is the decay length 1/sqrt(c1)
    },
    "solver": {"tol": 1e-10, "max_iter": 400, "seed": 0, "newton": True},
    "diagnostics": {
        "gamma": 0.3,
        "delta": 0.5,
        "angle_radii": [0.125, 0.25, 0.5, 0.75],      # fractions of R
        "pohozaev_annuli": 5,
        "stations": [10.0, 15.0, 20.0, 25.0, 30.0],    # absolute distances along each interface ray
        "station_fractions": [0.25, 0.5, 0.75],
        "energy_radii": [10.0, 20.0, 40.0, 80.0],
        "constrained_deltas": [0.05, 0.1, 0.2],
        "constrained_step": 0.02,
        "probe_trials": 50,
        "radial_samples": 24,
    },
}


class ConfigError(ValueError):
    def __init__(self, problems: list):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = ""

    @property
    def name(self) -> str:
        return str(self.raw["name"])

    def section(self, key: str) -> dict:
        return self.raw[key]

    @property
    def radii(self) -> list:
        return [float(r) for r in self.raw["grid"]["radii"]]

    @property
    def h(self) -> float:
        return float(self.raw["grid"]["h"])

    def potential(self) -> MultiWellPotential:
        pot = self.raw["potential"]
        wells = pot["wells"]
        if wells == "equilateral":
            wells = equilateral_wells(float(pot.get("well_radius", 1.0)))
        return make_product_potential(wells, scale=float(pot["scale"]))

    def cone(self, sigma) -> ConePartition:
        entry = self.raw["boundary"]["cone"]
        if entry == "auto":
            from .partition import young_gap
            middle = 2
            gap = young_gap(sigma, middle)
            return ConePartition(0.5 * (math.pi - gap), 0.5 * (math.pi + gap), middle)
        a1 = math.radians(float(entry["alpha1_deg"]))
        a2 = math.radians(float(entry["alpha2_deg"]))
        return ConePartition(a1, a2, entry.get("middle"))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)


def _structural_problems(raw: dict) -> list:
    problems = []
    unknown = set(raw) - set(DEFAULTS)
    for k in sorted(unknown):
        problems.append(f"unknown section '{k}'")
    for sec, defaults in DEFAULTS.items():
        if isinstance(defaults, dict):
            if not isinstance(raw.get(sec), dict):
                problems.append(f"section '{sec}' must be a mapping")
                continue
            for k in sorted(set(raw[sec]) - set(defaults)):
                problems.append(f"unknown key '{sec}.{k}'")

    pot = raw.get("potential", {})
    if not _positive(pot.get("scale")):
        problems.append("potential.scale must be a positive number")
    wells = pot.get("wells")
    if wells != "equilateral":
        try:
            pts = [[float(c) for c in w] for w in wells]
            if len(pts) < 2 or any(len(p) != 2 for p in pts):
                raise ValueError
        except (TypeError, ValueError):
            problems.append("potential.wells must be 'equilateral' or a list of at least two 2D points")

    grid = raw.get("grid", {})
    radii = grid.get("radii")
    h = grid.get("h")
    if not _positive(h):
        problems.append("grid.h must be a positive number")
    if not isinstance(radii, list) or not radii or not all(_positive(r) for r in radii):
        problems.append("grid.radii must be a nonempty list of positive numbers")
    else:
        if any(b <= a for a, b in zip(radii[:-1], radii[1:])):
            problems.append("grid.radii must be strictly increasing")
        if _positive(h):
            for r in radii:
                if float(h) > float(r) / 20.0:
                    problems.append(f"grid rule violated: h = {h} exceeds R/20 = {float(r) / 20.0:g} for R = {r}")

    b = raw.get("boundary", {})
    cone = b.get("cone")
    if cone != "auto":
        if not isinstance(cone, dict) or "alpha1_deg" not in cone or "alpha2_deg" not in cone:
            problems.append("boundary.cone must be 'auto' or a mapping with alpha1_deg, alpha2_deg")
        else:
            try:
                ConePartition(math.radians(float(cone["alpha1_deg"])), math.radians(float(cone["alpha2_deg"])),
                              cone.get("middle"))
            except (TypeError, ValueError) as exc:
                problems.append(f"boundary.cone: {exc}")
    sm = b.get("smoothing_angle")
    if sm != "max" and not _positive(sm):
        problems.append("boundary.smoothing_angle must be 'max' or a positive angle in degrees")
    fw = b.get("flat_width")
    if fw != "auto" and not _positive(fw):
        problems.append("boundary.flat_width must be 'auto' or a positive length")

    s = raw.get("solver", {})
    if not _positive(s.get("tol")):
        problems.append("solver.tol must be positive")
    if not isinstance(s.get("max_iter"), int) or s.get("max_iter") < 1:
        problems.append("solver.max_iter must be a positive integer")
    if not isinstance(s.get("seed"), int):
        problems.append("solver.seed must be an integer")

    d = raw.get("diagnostics", {})
    for key in ("gamma", "delta"):
        if not _positive(d.get(key)):
            problems.append(f"diagnostics.{key} must be positive")
    fr = d.get("angle_radii")
    if not isinstance(fr, list) or len(fr) < 2 or not all(_positive(x) and x <= 1 for x in fr):
        problems.append("diagnostics.angle_radii must list at least two fractions in (0, 1]")
    if not isinstance(d.get("pohozaev_annuli"), int) or d.get("pohozaev_annuli") < 1:
        problems.append("diagnostics.pohozaev_annuli must be a positive integer")
    for key in ("stations", "energy_radii", "constrained_deltas"):
        v = d.get(key)
        if not isinstance(v, list) or not all(_positive(x) for x in v):
            problems.append(f"diagnostics.{key} must be a list of positive numbers")
    return problems


def _positive(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0


def transition_width_rule(raw: dict) -> list:
    """h <= 0.2 * (1% transition width of the slowest connection)."""
    cfg = ExperimentConfig(raw)
    p = cfg.potential()
    widths = []
    n = p.n_wells
    for i in range(n):
        for j in range(i + 1, n):
            widths.append(solve_connection(p, i, j, n_seeds=1).transition_width())
    width = min(widths)
    if cfg.h > 0.2 * width:
        return [f"transition-width rule violated: h = {cfg.h} exceeds 0.2 * width = {0.2 * width:.4g}"]
    return []


def load_config(path, check_width: bool = True) -> ExperimentConfig:
    """Read, merge with defaults, validate; every problem is reported in one ConfigError."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    merged = _merge(DEFAULTS, raw)
    problems = _structural_problems(merged)
    if not problems and check_width:
        problems = transition_width_rule(merged)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(merged, str(path))


def bundled_config(name: str) -> Path:
    here = Path(__file__).parent / "configs" / f"{name}.yaml"
    if not here.exists():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return here
