"""End-to-end experiment driver and the verdict table built from its artifacts.

``run_pipeline`` goes potential -> metric -> connections -> cones -> solve ->
diagnostics and writes everything under ``<output root>/<config name>/``.
``verify`` re-reads those files (nothing is re-solved) and produces one
verdict row per acceptance check.
"""
from __future__ import annotations

import csv
import fnmatch
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .diagnostics import (
    decay_fit, default_annuli, diffuse_interface, fit_translation, interface_angles, loglog_fit,
    max_principle_check, pohozaev_check, radial_profiles, section_bounds, section_reference,
)
from .domain import ConePartition, ProfileTransition, build_arc_boundary_data, build_grid
from .heteroclinic import constrained_energy, fit_quadratic_deficit, profile_on_grid, solve_connection
from .partition import (
    SharpInterface, classify_minimal_cones, gamma0, minimize_slicing, unit, young_angles, young_gap,
)
from .phase_metric import MetricLattice, check_hypothesis_h3, extrapolated_sigma_matrix, metric_distance
from .potential import hessian_bounds, validate_hypotheses
from .solver2d import (
    Disk, HalfDiskField, Schedule, Sector, SolverFault, energy, initial_field, load_field,
    local_minimality_probe, minimize, pde_residual, save_field,
)

logger = logging.getLogger(__name__)

OUTPUT_ENV = "HALFPLANE_AC_OUTPUT"
DEFAULT_OUTPUT = "halfplane_runs"
# files that legitimately differ between identical runs
VOLATILE = {"timings.json", "runs.json"}


def output_root(explicit=None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating,)):
        o = float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


def max_smoothing_angle(cone: ConePartition) -> float:
    """Largest window half-width that keeps every boundary window inside [0, pi] and disjoint."""
    centers = [b for b, _, _ in cone.discontinuities()]
    limits = []
    for b in centers:
        if 0.0 < b < math.pi:
            limits += [b, math.pi - b]
    if any(b in (0.0, math.pi) for b in centers):
        limits.append(math.pi / 2)
    for b0, b1 in zip(centers[:-1], centers[1:]):
        if b0 == 0.0:
            limits.append(b1 / 3.0)      # the end window [0, 2w] and the next one must not overlap
        elif b1 == math.pi:
            limits.append((math.pi - b0) / 3.0)
        else:
            limits.append(0.5 * (b1 - b0))
    return float(min(limits)) if limits else math.pi / 2


def _interior_rays(cone: ConePartition) -> list:
    return [(b, l, r) for b, l, r in cone.discontinuities() if 0.0 < b < math.pi]


@dataclass
class RunOutcome:
    directory: Path
    faults: list = field(default_factory=list)

    @property
    def status(self) -> int:
        return 1 if self.faults else 0


class _Timer:
    def __init__(self):
        self.stages = {}

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = time.perf_counter() - self.t0
                return False
        return _Ctx()


def _digest(directory: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        if path.name in VOLATILE:
            continue
        h.update(str(path.relative_to(directory)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def run_pipeline(config_path, out_root=None, resume: bool = False) -> RunOutcome:
    cfg = load_config(config_path)
    root = output_root(out_root)
    out = root / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    config_text = cfg.to_yaml()
    config_hash = hashlib.sha256(config_text.encode()).hexdigest()
    (out / "config.resolved.yaml").write_text(config_text)
    timer = _Timer()
    outcome = RunOutcome(out)

    p = cfg.potential()
    c1, c2, _ = hessian_bounds(p)
    with timer.stage("potential"):
        report = validate_hypotheses(p)
    _dump(out / "potential.json", {"spec": p.spec_dict(), "validation": report.to_dict(), "c1": c1, "c2": c2})

    met = cfg.section("metric")
    n = p.n_wells
    with timer.stage("sigma_cross_oracle"):
        ex = extrapolated_sigma_matrix(p, int(met["resolution"]))
        metric_sigma = ex.extrapolated if met["refine"] else ex.fine
        profiles_1d = {}
        sigma_1d = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                pr = solve_connection(p, i, j, step=float(met["profile_step"]), n_seeds=1)
                profiles_1d[(i, j)] = pr
                sigma_1d[i, j] = sigma_1d[j, i] = pr.energy
    rel = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    rel[off] = np.abs(sigma_1d[off] - metric_sigma[off]) / metric_sigma[off]
    _dump(out / "sigma.json", {
        "connection_sigma": sigma_1d, "metric_sigma": metric_sigma, "metric_coarse": ex.coarse,
        "metric_fine": ex.fine, "relative_difference": rel, "max_relative_difference": float(rel[off].max()),
        "profile_step": met["profile_step"], "lattice_resolution": met["resolution"],
        "hypothesis_h3": check_hypothesis_h3(sigma_1d).to_dict(),
    })

    diag = cfg.section("diagnostics")
    with timer.stage("constrained_energy"):
        deltas = [float(d) for d in diag["constrained_deltas"]]
        pr01 = profiles_1d[(0, 1)]
        results = [constrained_energy(p, 0, 1, d, step=float(diag["constrained_step"]), profile=pr01)
                   for d in deltas]
        c, r2 = fit_quadratic_deficit(deltas, [r.value for r in results], pr01.energy)
        lat = MetricLattice(p, int(met["resolution"]))
        ends = [metric_distance(lat, r.endpoints[0], r.endpoints[1])[0] for r in results]
    _dump(out / "constrained.json", {
        "sigma": pr01.energy, "deltas": deltas, "values": [r.value for r in results],
        "intervals": [list(r.interval) for r in results], "coefficient": c, "r_squared": r2,
        "endpoint_metric_distance": ends,
    })

    with timer.stage("cones"):
        cls = classify_minimal_cones(sigma_1d, np.pi / 360)
        ref_sigma = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.2], [1.0, 1.2, 0.0]])
        ref = classify_minimal_cones(ref_sigma, np.pi / 360)
        ref_angles = young_angles(1.0, 1.0, 1.2)
    _dump(out / "cones.json", {
        "sigma": sigma_1d, "angular_step": cls.angular_step, "examined": cls.examined,
        "min_gap": cls.min_gap, "gap_bound": cls.gap_bound, "gap_law_holds": cls.gap_law_holds,
        "kinds": _kind_counts(cls), "best": [r.to_dict() for r in cls.minimal[:10]],
        "reference": {"sigma": ref_sigma, "min_gap": ref.min_gap, "gap_bound": ref.gap_bound,
                      "young_angles": ref_angles.to_dict(), "kinds": _kind_counts(ref)},
    })

    cone = cfg.cone(sigma_1d)
    sigma_cont = float(sigma_1d[0, 1])
    _dump(out / "slicing.json", {
        "young_gap": _slicing(2 * math.pi / 3, cfg.radii, sigma_cont),
        "cone_gap": _slicing(cone.gap, cfg.radii, sigma_cont) if cone.kind() == "triple_junction" else None,
        "sigma": sigma_cont,
    })

    h = cfg.h
    Rmax = max(cfg.radii)
    pairs = {(l, r) for _, l, r in cone.discontinuities()} | {(0, 1)}
    with timer.stage("grid_profiles"):
        grid_profiles = {pair: profile_on_grid(p, pair[0], pair[1], h, Rmax, tol=1e-12) for pair in sorted(pairs)}
    transitions = {pair: ProfileTransition(pr) for pair, pr in grid_profiles.items()}
    width = min(pr.transition_width() for pr in grid_profiles.values())
    sigma_h = {f"{i}-{j}": pr.energy for (i, j), pr in grid_profiles.items()}
    decay_length = 1.0 / math.sqrt(c1)
    bnd = cfg.section("boundary")
    flat_width = decay_length if bnd["flat_width"] == "auto" else float(bnd["flat_width"])
    smoothing = max_smoothing_angle(cone) if bnd["smoothing_angle"] == "max" else math.radians(
        float(bnd["smoothing_angle"]))
    run_meta = {
        "config_name": cfg.name, "config_sha256": config_hash, "version": __version__,
        "cone": cone.to_dict(), "kind": cone.kind(), "grid_sigma": sigma_h, "sigma": sigma_cont,
        "transition_width": width, "decay_length": decay_length, "flat_width": flat_width,
        "smoothing_angle": smoothing, "h": h, "radii": cfg.radii,
    }
    _dump(out / "run.json", run_meta)

    per_r = {}
    for R in cfg.radii:
        rdir = out / f"R_{R:g}"
        rdir.mkdir(exist_ok=True)
        try:
            with timer.stage(f"R_{R:g}"):
                per_r[R] = _run_radius(cfg, p, cone, R, rdir, transitions, grid_profiles, sigma_1d, width,
                                       decay_length, flat_width, smoothing, config_hash, resume)
        except (SolverFault, ValueError) as exc:
            logger.error("R = %g failed: %s", R, exc)
            outcome.faults.append({"R": R, "fault": type(exc).__name__, "message": str(exc)})
            _dump(rdir / "fault.json", outcome.faults[-1])

    # sub-disk energies of the largest converged field
    if per_r:
        Rbig = max(per_r)
        fbig = per_r[Rbig]["field"]
        radii_e = [float(r) for r in diag["energy_radii"] if r <= Rbig]
        J = [energy(fbig, Disk(r)).total for r in radii_e]
        _dump(out / "energy_ladder.json", {"source_R": Rbig, "radii": radii_e, "energies": J,
                                           "sigma_grid": grid_profiles[(0, 1)].energy if cone.kind() != "triple_junction"
                                           else _mean_interface_sigma(grid_profiles, cone)})

    _write_summary(out, cfg, run_meta, per_r, outcome.faults)
    (out / "plot_results.py").write_text(PLOT_SCRIPT)
    _dump(out / "timings.json", timer.stages)
    digest = _digest(out)
    runs_path = out / "runs.json"
    history = json.loads(runs_path.read_text()) if runs_path.exists() else []
    history.append({"config_sha256": config_hash, "digest": digest, "faults": len(outcome.faults)})
    _dump(runs_path, history)
    return outcome


def _mean_interface_sigma(grid_profiles, cone) -> float:
    vals = [grid_profiles[(l, r)].energy for _, l, r in _interior_rays(cone)]
    return float(np.mean(vals))


def _kind_counts(cls) -> dict:
    out = {}
    for r in cls.minimal:
        out[r.kind] = out.get(r.kind, 0) + 1
    return out


def _slicing(gap, radii, sigma) -> dict:
    ys, vals = [], []
    for R in radii:
        y, v = minimize_slicing(gap, R, sigma)
        ys.append(y)
        vals.append(v)
    return {"gap": gap, "R": list(radii), "y_star": ys, "value": vals}


def _sharp_interface(cone: ConePartition, R: float, sigma) -> SharpInterface:
    if cone.kind() == "triple_junction":
        return gamma0(cone.alpha1, cone.alpha2, R, sigma)
    segs = [((0.0, 0.0), tuple(map(float, R * unit(b))), (l, r), float(sigma[l, r])) for b, l, r in _interior_rays(cone)]
    return SharpInterface(segs, [], True)


def _run_radius(cfg: ExperimentConfig, p, cone, R, rdir: Path, transitions, grid_profiles, sigma, width,
                decay_length, flat_width, smoothing, config_hash, resume) -> dict:
    h = cfg.h
    sol = cfg.section("solver")
    diag = cfg.section("diagnostics")
    grid = build_grid(R, h)
    ckpt = rdir / "field.csv"
    field_ = None
    if resume and ckpt.exists():
        meta = json.loads(ckpt.with_suffix(".json").read_text())
        if meta.get("config_sha256") == config_hash:
            field_ = load_field(ckpt)
            logger.info("R = %g: reusing checkpoint", R)
    if field_ is None:
        bd = build_arc_boundary_data(cone, smoothing, grid, p.wells, transitions, flat_width=flat_width)
        f0 = initial_field(bd, p, transitions, 0.5 * width)
        schedule = Schedule(tol=float(sol["tol"]), max_iter=int(sol["max_iter"]), newton=bool(sol["newton"]),
                            seed=int(sol["seed"]))
        field_, log = minimize(f0, schedule)
        _dump(rdir / "solver.json", log.to_dict())
        bd.to_csv_bundle(rdir / "boundary")
        save_field(field_, ckpt, {"config_sha256": config_hash, "R": R})

    res: dict = {"field": field_}
    # radial averages
    radii = np.geomspace(R / 8.0, R, int(diag["radial_samples"]))
    table = radial_profiles(field_, radii)
    (rdir / "radial_profiles.csv").write_text(table.to_csv())
    fit = loglog_fit(radii, table.equipartition_defect)
    # Pohozaev balance
    poh = [pohozaev_check(field_, a, b) for a, b in default_annuli(R, int(diag["pohozaev_annuli"]))]
    (rdir / "pohozaev.csv").write_text(_rows_csv([q.to_dict() for q in poh]))
    # interface angles on consecutive annuli
    fr = sorted(float(x) for x in diag["angle_radii"])
    rays = _interior_rays(cone)
    angles = []
    for a, b in zip(fr[:-1], fr[1:]):
        tr = interface_angles(field_, (a * R, b * R), float(diag["delta"]), expected=len(rays))
        angles.append({"annulus": [a * R, b * R], "rays": tr.rays, "lines": tr.lines,
                       "angle_between_rays": tr.angle_between_rays(), "angle_between_lines": tr.angle_between_lines(),
                       "resolved": tr.resolved})
        (rdir / f"angles_{a:g}_{b:g}.csv").write_text(tr.to_csv())
    # diffuse interface against the sharp network
    sharp = _sharp_interface(cone, R, sigma)
    (rdir / "sharp_interface.json").write_text(sharp.to_json())
    di = diffuse_interface(field_, float(diag["gamma"]), sharp, [R * x for x in fr])
    (rdir / "diffuse_interface.csv").write_text(di.to_csv())
    # cross sections along each interface ray
    fits = []
    angles_sorted = [0.0] + [b for b, _, _ in rays] + [math.pi]
    stations = sorted({float(x) for x in diag["stations"]} | {float(f) * R for f in diag["station_fractions"]})
    for k, (beta, left, right) in enumerate(rays):
        prof = grid_profiles[(left, right)] if (left, right) in grid_profiles else grid_profiles[(right, left)].reversed()
        openings = section_bounds(beta, (angles_sorted[k], angles_sorted[k + 2]))
        ref = section_reference(prof, p, h)
        for x in stations:
            if x >= R:
                continue
            pf = fit_translation(field_, beta, x, prof, openings)
            row = pf.to_dict()
            row.update({"ray": beta, "left": left, "right": right, "sigma_reference": ref,
                        "G_defect": abs(pf.G - ref)})
            fits.append(row)
    (rdir / "profile_fits.csv").write_text(_rows_csv(fits))
    # decay away from the interfaces
    dec = decay_fit(field_, sharp, 5.0 * decay_length)
    # maximum principle in the bulk of each phase
    mp = []
    for s, e, ph in cone.phases():
        margin = min(0.5 * (e - s), 3.0 * width / (0.25 * R))
        if e - s <= 2 * margin:
            continue
        region = Sector(s + margin, e - margin, 0.25 * R, 0.75 * R)
        mp.append({"phase": ph, **max_principle_check(field_, ph, region, 0.1).to_dict()})
    rr = pde_residual(field_)
    probe = local_minimality_probe(field_, trials=int(diag["probe_trials"]), seed=int(sol["seed"]))
    E = energy(field_)
    summary = {
        "R": R, "h": h, "energy": E.total, "dirichlet": E.dirichlet_part, "potential": E.potential_part,
        "solver": field_.meta.get("solver", {}),
        "equipartition_fit": {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
                              "radii": [float(radii[0]), float(radii[-1])]},
        "pohozaev": [q.to_dict() for q in poh],
        "angles": angles,
        "decay": dec.to_dict(),
        "max_principle": mp,
        "pde_residual": {"sup": rr.sup, "l2": rr.l2, "nodes": rr.nodes},
        "probe": {"trials": probe.trials, "violations": probe.violations, "worst_margin": probe.worst_margin},
        "diffuse_interface": {"gamma": di.gamma, "nodes": di.count, "radii": di.radii, "widths": di.widths},
        "profile_fits": fits,
    }
    _dump(rdir / "diagnostics.json", summary)
    res["summary"] = summary
    return res


def _rows_csv(rows: list) -> str:
    if not rows:
        return ""
    keys = list(rows[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_cell(r[k]) for k in keys])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def _write_summary(out: Path, cfg, meta, per_r, faults) -> None:
    lines = [f"experiment: {cfg.name}", f"cone: {meta['cone']}", f"sigma (connection): {meta['sigma']:.10f}",
             f"grid sigma: {meta['grid_sigma']}", f"transition width: {meta['transition_width']:.4f}", ""]
    for R, res in sorted(per_r.items()):
        s = res["summary"]
        lines.append(f"R = {R:g}: energy {s['energy']:.10f}, solver residual {s['solver'].get('residual', float('nan')):.3e}")
        for a in s["angles"]:
            deg = [round(math.degrees(x), 4) for x in a["rays"]]
            lines.append(f"  interface angles on annulus {a['annulus']}: {deg}"
                         + (f", opening {math.degrees(a['angle_between_rays']):.4f} deg"
                            if a["angle_between_rays"] is not None else ""))
        ef = s["equipartition_fit"]
        lines.append(f"  equipartition defect growth exponent {ef['slope']:.4f} (R^2 {ef['r_squared']:.4f})")
        lines.append(f"  worst Pohozaev margin {min(q['margin'] for q in s['pohozaev']):.4e}")
        lines.append(f"  minimality probe violations {s['probe']['violations']}/{2 * s['probe']['trials']}")
    for f in faults:
        lines.append(f"R = {f['R']:g}: FAULT {f['fault']}: {f['message']}")
    if meta["kind"] == "triple_junction":
        opening = None
        for R, res in sorted(per_r.items()):
            a = _annulus_entry(res["summary"]["angles"], R)
            if a and a["angle_between_rays"] is not None:
                opening = math.degrees(a["angle_between_rays"])
        if opening is not None:
            lines.append(f"Young angle verdict: measured opening {opening:.4f} deg vs 120 deg: "
                         + ("pass" if abs(opening - 120.0) <= 3.0 else "fail"))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _dump(out / "summary.json", {"meta": meta, "faults": faults,
                                 "radii": {f"{R:g}": res["summary"] for R, res in sorted(per_r.items())}})


def _annulus_entry(angles, R, lo=0.5, hi=0.75):
    for a in angles:
        if abs(a["annulus"][0] - lo * R) < 1e-9 and abs(a["annulus"][1] - hi * R) < 1e-9:
            return a
    return None


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    number: int
    key: str
    status: str          # pass, fail, missing, external
    value: str
    threshold: str
    source: str

    def row(self) -> list:
        return [str(self.number), self.key, self.status, self.value, self.threshold, self.source]


CRITERIA = [
    (1, "sigma_cross_oracle"),
    (2, "young_law_angles"),
    (3, "sharp_energy_bounds"),
    (4, "equipartition_growth"),
    (5, "slicing_formula"),
    (6, "cone_classification"),
    (7, "heteroclinic_convergence"),
    (8, "pohozaev_margin"),
    (9, "constrained_energy_trend"),
    (10, "cross_section_balance"),
    (11, "determinism"),
    (12, "invariant_suites"),
]


class MissingArtifact(Exception):
    pass


def _load(path: Path):
    if not path.exists():
        raise MissingArtifact(str(path))
    return json.loads(path.read_text())


def _runs(root: Path) -> dict:
    out = {}
    if not root.exists():
        return out
    for d in sorted(root.iterdir()):
        if (d / "run.json").exists():
            out[d.name] = (d, json.loads((d / "run.json").read_text()))
    return out


def _pick(runs: dict, kind: str):
    for name, (d, meta) in runs.items():
        if meta["kind"] == kind:
            return d, meta
    raise MissingArtifact(f"no run of kind {kind!r} under the output root")


def _g(x: float) -> str:
    return f"{x:.6g}"


def _c1(runs):
    d, _ = _any(runs)
    s = _load(d / "sigma.json")
    v = s["max_relative_difference"]
    return v < 0.02, _g(v), "< 0.02", d.name


def _any(runs):
    tj = [v for v in runs.values() if v[1]["kind"] == "triple_junction"]
    if tj:
        return tj[0]
    if runs:
        return next(iter(runs.values()))
    raise MissingArtifact("no run directories under the output root")


def _radius_dirs(d: Path, meta) -> list:
    out = []
    for R in meta["radii"]:
        out.append((R, d / f"R_{R:g}" / "diagnostics.json"))
    return out


def _c2(runs):
    d, meta = _pick(runs, "triple_junction")
    R = 40.0 if 40.0 in meta["radii"] else min(meta["radii"])
    s = _load(d / f"R_{R:g}" / "diagnostics.json")
    a = _annulus_entry(s["angles"], R)
    if a is None or a["angle_between_rays"] is None:
        return False, "unresolved", "120 +- 3 deg", d.name
    cones = _load(d / "cones.json")
    expected = math.degrees(young_gap(np.asarray(cones["sigma"]), 2))
    deg = math.degrees(a["angle_between_rays"])
    return abs(deg - expected) <= 3.0, f"{deg:.4f}", f"{expected:.4f} +- 3 deg", f"{d.name}/R_{R:g}"


def _c3(runs):
    d, meta = _pick(runs, "triple_junction")
    e = _load(d / "energy_ladder.json")
    sig = e["sigma_grid"]
    J = dict(zip(e["radii"], e["energies"]))
    ladder = [r for r in (10.0, 20.0, 40.0) if r in J and 2 * r in J]
    if len(ladder) < 3:
        raise MissingArtifact(f"{d / 'energy_ladder.json'} lacks the radii 10, 20, 40, 80")
    ratios = [(J[2 * r] - J[r]) / (2 * sig * r) for r in ladder]
    offsets = [J[r] - 2 * sig * r for r in ladder]
    spread = max(offsets) - min(offsets)
    ok = all(abs(q - 1) <= 0.05 for q in ratios) and spread <= 0.1 * sig * min(ladder)
    return ok, "ratios " + " ".join(_g(q) for q in ratios) + f"; spread {_g(spread)}", \
        f"|ratio-1| <= 0.05; spread <= {_g(0.1 * sig * min(ladder))}", d.name


def _c4(runs):
    d, meta = _pick(runs, "triple_junction")
    worst_slope, worst_r2, ok = -np.inf, np.inf, True
    for R, path in _radius_dirs(d, meta):
        f = _load(path)["equipartition_fit"]
        worst_slope = max(worst_slope, f["slope"])
        worst_r2 = min(worst_r2, f["r_squared"])
        ok &= f["slope"] <= 0.9 and f["r_squared"] >= 0.9
    return ok, f"max slope {_g(worst_slope)}; min R^2 {_g(worst_r2)}", "slope <= 0.9, R^2 >= 0.9", d.name


def _c5(runs):
    d, _ = _any(runs)
    s = _load(d / "slicing.json")
    sig = s["sigma"]
    y = s["young_gap"]
    errs = [abs(v - 2 * sig * R) for R, v in zip(y["R"], y["value"])]
    ok = all(ys == 0.0 for ys in y["y_star"]) and all(e <= 1e-10 for e in errs)
    return ok, f"y* {y['y_star']}; max error {_g(max(errs))}", "y* = 0, |value - 2 sigma R| <= 1e-10", d.name


def _c6(runs):
    d, _ = _any(runs)
    c = _load(d / "cones.json")
    step = c["angular_step"]
    ok_equal = c["min_gap"] is not None and c["min_gap"] >= 2 * math.pi / 3 - step - 1e-12
    ref = c["reference"]
    theta3 = ref["young_angles"]["theta3"]
    ok_ref = ref["min_gap"] is not None and abs(ref["min_gap"] - theta3) <= step + 1e-12
    val = f"equal min gap {math.degrees(c['min_gap']):.4f} deg; reference min gap {math.degrees(ref['min_gap']):.4f} " \
          f"vs {math.degrees(theta3):.4f} deg"
    return ok_equal and ok_ref, val, "gap >= 120 - 0.5 deg; |gap - theta3| <= 0.5 deg", d.name


def _fits_at(path: Path, stations):
    s = _load(path)
    rows = {round(f["station"], 9): f for f in s["profile_fits"]}
    missing = [x for x in stations if round(x, 9) not in rows]
    if missing:
        raise MissingArtifact(f"{path} has no profile fits at stations {missing}")
    return [rows[round(x, 9)] for x in stations]


def _c7(runs):
    d, meta = _pick(runs, "two_phase")
    R = 40.0 if 40.0 in meta["radii"] else max(meta["radii"])
    fits = _fits_at(d / f"R_{R:g}" / "diagnostics.json", [10.0, 20.0, 30.0])
    d0 = [f["d0"] for f in fits]
    sig = meta["sigma"]
    hs = [f["shift"] for f in fits]
    dec = all(b < a for a, b in zip(d0[:-1], d0[1:]))
    small = d0[-1] < 0.05 * math.sqrt(sig)
    steady = hs[1] is not None and hs[2] is not None and abs(hs[2] - hs[1]) < 0.5 * meta["h"]
    shift_text = "none" if None in hs[1:] else _g(abs(hs[2] - hs[1]))
    return dec and small and steady, "d0 " + " ".join(_g(x) for x in d0) + f"; shift change {shift_text}", \
        f"strictly decreasing, d0(30) < {_g(0.05 * math.sqrt(sig))}, shift change < {_g(0.5 * meta['h'])}", \
        f"{d.name}/R_{R:g}"


def _c8(runs):
    worst, ok, names = np.inf, True, []
    for name, (d, meta) in runs.items():
        limit = -10 * meta["h"] * meta["sigma"]
        for R, path in _radius_dirs(d, meta):
            if not path.exists():
                continue
            for q in _load(path)["pohozaev"]:
                worst = min(worst, q["margin"] - limit)
                ok &= q["margin"] >= limit
            names.append(f"{name}/R_{R:g}")
    if not names:
        raise MissingArtifact("no converged fields")
    return ok, f"smallest margin above limit {_g(worst)}", "margin >= -10 h sigma", ";".join(names)


def _c9(runs):
    d, _ = _any(runs)
    c = _load(d / "constrained.json")
    ok = c["r_squared"] >= 0.95 and c["coefficient"] > 0
    return ok, f"c {_g(c['coefficient'])}; R^2 {_g(c['r_squared'])}", "c > 0, R^2 >= 0.95", d.name


def _c10(runs):
    d, meta = _pick(runs, "two_phase")
    R = 40.0 if 40.0 in meta["radii"] else max(meta["radii"])
    fits = _fits_at(d / f"R_{R:g}" / "diagnostics.json", [R / 4, R / 2, 3 * R / 4])
    G = [f["G_defect"] for f in fits]
    H = [abs(f["H"]) for f in fits]
    ok = all(b < a for a, b in zip(G[:-1], G[1:])) and all(b < a for a, b in zip(H[:-1], H[1:]))
    return ok, "|G - sigma| " + " ".join(_g(x) for x in G) + "; |H| " + " ".join(_g(x) for x in H), \
        "both strictly decreasing", f"{d.name}/R_{R:g}"


def _c11(runs):
    checked = []
    ok = True
    for name, (d, meta) in runs.items():
        hist = _load(d / "runs.json")
        same = [r for r in hist if r["config_sha256"] == meta["config_sha256"]]
        if len(same) >= 2:
            digests = {r["digest"] for r in same[-2:]}
            ok &= len(digests) == 1
            checked.append(name)
    if not checked:
        raise MissingArtifact("no configuration has been run twice (runs.json holds a single entry)")
    return ok, "identical artifact digests" if ok else "digests differ", "last two runs byte-identical", \
        ";".join(checked)


EVALUATORS = {1: _c1, 2: _c2, 3: _c3, 4: _c4, 5: _c5, 6: _c6, 7: _c7, 8: _c8, 9: _c9, 10: _c10, 11: _c11}


def _matches(pattern: str, number: int, key: str) -> bool:
    if pattern in ("*", ""):
        return True
    if pattern == str(number):
        return True
    return fnmatch.fnmatchcase(key, pattern) or key.startswith(pattern)


def verify(root=None, pattern: str = "*") -> list:
    root = output_root(root)
    runs = _runs(root)
    out = []
    for number, key in CRITERIA:
        if not _matches(pattern, number, key):
            continue
        if number == 12:
            out.append(Verdict(number, key, "external", "", "property tests", "pytest tests/"))
            continue
        try:
            ok, value, threshold, source = EVALUATORS[number](runs)
            out.append(Verdict(number, key, "pass" if ok else "fail", value, threshold, source))
        except MissingArtifact as exc:
            out.append(Verdict(number, key, "missing", "", "", str(exc)))
    return out


def verdict_table(verdicts: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "key", "status", "value", "threshold", "source"])
    for v in verdicts:
        w.writerow(v.row())
    return buf.getvalue()


def verify_status(verdicts: list) -> int:
    if any(v.status == "missing" for v in verdicts):
        return 1
    if any(v.status == "fail" for v in verdicts):
        return 2
    return 0


PLOT_SCRIPT = '''"""Render the run's CSV tables; needs matplotlib (not a dependency of the package)."""
import csv
import glob
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) if r[k] not in ("", "true", "false") else r[k] for r in rows] for k in rows[0]} if rows else {}


for rdir in sorted(glob.glob(os.path.join(here, "R_*"))):
    tag = os.path.basename(rdir)
    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    rp = read(os.path.join(rdir, "radial_profiles.csv"))
    axes[0].plot(rp["radius"], rp["potential_average"], label="potential average")
    axes[0].plot(rp["radius"], rp["dirichlet_average"], label="Dirichlet average")
    axes[0].set_xlabel("r")
    axes[0].legend()
    for path in sorted(glob.glob(os.path.join(rdir, "angles_*.csv"))):
        tab = read(path)
        for key in [k for k in tab if k.startswith("interface_angle")]:
            vals = [v for v in tab[key] if v != ""]
            axes[1].plot(tab["radius"][:len(vals)], vals, ".", label=os.path.basename(path) + " " + key[-1])
    axes[1].set_xlabel("r")
    axes[1].set_ylabel("interface angle")
    fits = read(os.path.join(rdir, "profile_fits.csv"))
    if fits:
        axes[2].semilogy(fits["station"], fits["d0"], "o-", label="d0")
        axes[2].semilogy(fits["station"], fits["d1"], "s--", label="d1")
        axes[2].set_xlabel("station")
        axes[2].legend()
    fig.suptitle(tag)
    fig.tight_layout()
    fig.savefig(os.path.join(here, tag + ".png"), dpi=120)
    if "--show" in sys.argv:
        plt.show()
'''
