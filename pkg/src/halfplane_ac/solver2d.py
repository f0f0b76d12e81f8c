"""Discrete energy, minimization and rescaling of fields on the half disk.

Discrete energy
---------------
For grid spacing h the field energy is

    E(u) = sum_edges c_e |u_p - u_q|^2 / 2 + h^2 sum_nodes m_k W(u_k)

over horizontal and vertical edges between non-exterior nodes.  Edges along
the flat boundary and flat nodes carry weight 1/2 (trapezoid rule in y);
all others carry 1.  At interior nodes the gradient divided by h^2 is the
five-point residual -Lap_h u + grad W(u).  Each node owns its potential term
plus half of every incident edge term, so energies of disjoint regions add
up exactly to the total.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .descent import minimize_bb
from .domain import ARC, EXTERIOR, FLAT, INTERIOR, BoundaryData, ConePartition, HalfDiskGrid, _lookup
from .potential import MultiWellPotential, hessian_bounds

logger = logging.getLogger(__name__)


class SolverFault(RuntimeError):
    pass


class BudgetExhausted(SolverFault):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"iteration budget of {iterations} exhausted (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class NonFiniteField(SolverFault):
    def __init__(self, node: tuple, position: tuple):
        super().__init__(f"non-finite value at node {node} (x={position[0]:g}, y={position[1]:g})")
        self.node = node
        self.position = position


@dataclass
class HalfDiskField:
    grid: HalfDiskGrid
    values: np.ndarray               # (nx, ny, 2); exterior nodes hold zeros
    potential: MultiWellPotential
    meta: dict = field(default_factory=dict)

    def copy(self) -> "HalfDiskField":
        return HalfDiskField(self.grid, self.values.copy(), self.potential, dict(self.meta))

    @property
    def frozen(self) -> np.ndarray:
        return self.grid.boundary


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Disk:
    r: float

    def contains(self, X, Y):
        return np.hypot(X, Y) <= self.r


@dataclass(frozen=True)
class Annulus:
    r1: float
    r2: float

    def contains(self, X, Y):
        r = np.hypot(X, Y)
        return (r > self.r1) & (r <= self.r2)


@dataclass(frozen=True)
class Sector:
    theta1: float
    theta2: float
    r1: float = 0.0
    r2: float = np.inf

    def contains(self, X, Y):
        r = np.hypot(X, Y)
        t = np.arctan2(Y, X)
        return (t >= self.theta1) & (t < self.theta2) & (r > self.r1) & (r <= self.r2)


@dataclass(frozen=True)
class Quadrilateral:
    vertices: tuple      # four (x, y) pairs in order

    def contains(self, X, Y):
        v = np.asarray(self.vertices, dtype=float)
        inside = np.zeros(np.broadcast(X, Y).shape, dtype=bool)
        X = np.broadcast_to(X, inside.shape)
        Y = np.broadcast_to(Y, inside.shape)
        n = len(v)
        for k in range(n):
            x0, y0 = v[k]
            x1, y1 = v[(k + 1) % n]
            cond = (y0 > Y) != (y1 > Y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x0 + (Y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= cond & (X < xc)
        return inside


@dataclass
class EnergyBreakdown:
    dirichlet_part: float
    potential_part: float
    nodes: int
    region: str
    empty: bool = False

    @property
    def total(self) -> float:
        return self.dirichlet_part + self.potential_part


# ---------------------------------------------------------------------------
# energy bookkeeping


def _edge_weights(grid: HalfDiskGrid):
    act = grid.active
    hx = act[1:, :] & act[:-1, :]
    hw = hx.astype(float)
    hw[:, 0] *= 0.5
    vw = (act[:, 1:] & act[:, :-1]).astype(float)
    m = act.astype(float)
    m[:, 0] *= 0.5
    return hw, vw, m


def node_energies(field: HalfDiskField) -> tuple[np.ndarray, np.ndarray]:
    """Per-node Dirichlet and potential shares; they sum to the total discrete energy."""
    g = field.grid
    u = field.values
    hw, vw, m = _edge_weights(g)
    eh = 0.5 * hw * np.sum((u[1:, :] - u[:-1, :]) ** 2, axis=-1)
    ev = 0.5 * vw * np.sum((u[:, 1:] - u[:, :-1]) ** 2, axis=-1)
    dir_k = np.zeros(g.shape)
    dir_k[1:, :] += 0.5 * eh
    dir_k[:-1, :] += 0.5 * eh
    dir_k[:, 1:] += 0.5 * ev
    dir_k[:, :-1] += 0.5 * ev
    pot_k = g.h ** 2 * m * field.potential.evaluate(u)
    pot_k[~g.active] = 0.0
    return dir_k, pot_k


def total_energy(field: HalfDiskField) -> float:
    d, p = node_energies(field)
    return float(d.sum() + p.sum())


def energy(field: HalfDiskField, region=None) -> EnergyBreakdown:
    """Energy of the nodes lying in ``region`` (all nodes when None)."""
    g = field.grid
    d, p = node_energies(field)
    mask = g.active.copy()
    name = "all"
    if region is not None:
        mask &= region.contains(g.X, g.Y)
        name = repr(region)
    n = int(mask.sum())
    if n == 0:
        logger.warning("energy requested on an empty region %s", name)
        return EnergyBreakdown(0.0, 0.0, 0, name, empty=True)
    return EnergyBreakdown(float(np.sum(d[mask])), float(np.sum(p[mask])), n, name)


def node_gradient(field: HalfDiskField) -> np.ndarray:
    """Centered differences, one-sided where a neighbor is exterior or off-grid; shape (nx, ny, 2, 2)."""
    g = field.grid
    u = field.values
    act = g.active
    h = g.h
    out = np.zeros(g.shape + (2, 2))
    for axis in (0, 1):
        fwd = np.zeros(g.shape, dtype=bool)
        bwd = np.zeros(g.shape, dtype=bool)
        du_f = np.zeros(g.shape + (2,))
        du_b = np.zeros(g.shape + (2,))
        sl_a = [slice(None)] * 2
        sl_b = [slice(None)] * 2
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        sa, sb = tuple(sl_a), tuple(sl_b)
        both = act[sa] & act[sb]
        diff = (u[sb] - u[sa]) / h
        fwd[sa] = both
        du_f[sa] = diff
        bwd[sb] = both
        du_b[sb] = diff
        cen = fwd & bwd
        val = np.where(cen[..., None], 0.5 * (du_f + du_b),
                       np.where(fwd[..., None], du_f, np.where(bwd[..., None], du_b, 0.0)))
        out[..., :, axis] = val
    out[~act] = 0.0
    return out


# ---------------------------------------------------------------------------
# linear algebra on interior unknowns


class InteriorSystem:
    """Index map, graph Laplacian and boundary coupling for the interior unknowns."""

    def __init__(self, grid: HalfDiskGrid):
        self.grid = grid
        mask = grid.interior
        self.I, self.J = np.nonzero(mask)
        self.n = len(self.I)
        ids = -np.ones(grid.shape, dtype=np.int64)
        ids[self.I, self.J] = np.arange(self.n)
        self.ids = ids
        rows, cols, vals = [np.arange(self.n)], [np.arange(self.n)], [np.full(self.n, 4.0)]
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = ids[self.I + di, self.J + dj]
            ok = nb >= 0
            rows.append(np.arange(self.n)[ok])
            cols.append(nb[ok])
            vals.append(-np.ones(int(ok.sum())))
        lap = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(self.n, self.n))
        self.A = sp.kron(lap, sp.eye(2), format="csr")   # raw (unscaled) graph Laplacian

    def gather(self, values: np.ndarray) -> np.ndarray:
        return values[self.I, self.J].ravel()

    def scatter(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = values.copy()
        out[self.I, self.J] = x.reshape(-1, 2)
        return out

    def raw_gradient(self, values: np.ndarray, p: MultiWellPotential) -> np.ndarray:
        u = values
        lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1])
        full = np.zeros_like(u)
        full[1:-1, 1:-1] = -lap
        g = full[self.I, self.J] + self.grid.h ** 2 * p.gradient(u[self.I, self.J])
        return g.ravel()

    def hessian(self, values: np.ndarray, p: MultiWellPotential) -> sp.csr_matrix:
        blocks = p.hessian(values[self.I, self.J]) * self.grid.h ** 2
        m = self.n
        rows = np.repeat(np.arange(2 * m).reshape(m, 2), 2, axis=1).ravel()
        cols = np.tile(np.arange(2 * m).reshape(m, 2), (1, 2)).ravel()
        hw = sp.csr_matrix((blocks.reshape(-1), (rows, cols)), shape=(2 * m, 2 * m))
        return (self.A + hw).tocsr()


@dataclass
class Schedule:
    tol: float = 1e-6
    max_iter: int = 2000
    dt: Optional[float] = None           # semi-implicit step; default 1/c2
    newton: bool = True
    newton_threshold: float = np.inf
    seed: int = 0


@dataclass
class IterationLog:
    energies: list
    residuals: list
    kinds: list
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {"energies": self.energies, "residuals": self.residuals, "kinds": self.kinds,
                "iterations": self.iterations, "converged": self.converged}


def _first_bad(values: np.ndarray, grid: HalfDiskGrid):
    bad = ~np.all(np.isfinite(values), axis=-1) & grid.active
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise NonFiniteField((i, j), (float(grid.xs[i]), float(grid.ys[j])))


def minimize(field: HalfDiskField, schedule: Optional[Schedule] = None,
             system: Optional[InteriorSystem] = None) -> tuple[HalfDiskField, IterationLog]:
    """Descend the discrete energy over interior nodes; boundary values are never written.

    Gradient steps use the semi-implicit flow preconditioner I/dt - Lap_h with
    Barzilai-Borwein step lengths; guarded Newton steps are taken whenever
    they pass the Armijo test.  Convergence is measured by the sup-norm of the
    per-area gradient -Lap_h u + grad W(u) over interior nodes.
    """
    sch = schedule or Schedule()
    grid = field.grid
    p = field.potential
    _first_bad(field.values, grid)
    sysm = system or InteriorSystem(grid)
    h2 = grid.h ** 2
    c2 = max(hessian_bounds(p)[1], 1e-12)
    dt = sch.dt if sch.dt is not None else 1.0 / c2
    P = (sysm.A + (h2 / dt) * sp.eye(2 * sysm.n)).tocsc()
    Plu = spla.splu(P)
    base = field.values.copy()

    def energy_fn(x):
        return total_energy(HalfDiskField(grid, sysm.scatter(base, x), p))

    def grad_fn(x):
        return sysm.raw_gradient(sysm.scatter(base, x), p)

    def residual(x, g):
        return float(np.abs(g).max() / h2) if g.size else 0.0

    def newton(x, g):
        H = sysm.hessian(sysm.scatter(base, x), p)
        try:
            return spla.spsolve(H.tocsc(), -g)
        except Exception:  # singular Hessian: let the gradient step take over
            return None

    def check(x):
        if not np.all(np.isfinite(x)):
            _first_bad(sysm.scatter(base, x), grid)

    res = minimize_bb(energy_fn, grad_fn, sysm.gather(base), residual=residual, tol=sch.tol,
                      max_iter=sch.max_iter, precond=Plu.solve, precond_apply=lambda v: P @ v,
                      newton=newton if sch.newton else None, newton_threshold=sch.newton_threshold,
                      check_finite=check)
    out = HalfDiskField(grid, sysm.scatter(base, res.x), p, dict(field.meta))
    log = IterationLog([h[0] for h in res.history], [h[1] for h in res.history], [h[2] for h in res.history],
                       res.iterations, res.converged)
    out.meta["solver"] = {"iterations": res.iterations, "residual": res.residual, "energy": res.energy,
                          "converged": res.converged}
    if not res.converged:
        raise BudgetExhausted(res.iterations, res.residual)
    return out, log


# ---------------------------------------------------------------------------
# field construction


def field_from_boundary(boundary: BoundaryData, p: MultiWellPotential, interior_values=None) -> HalfDiskField:
    g = boundary.grid
    vals = np.zeros(g.shape + (2,))
    if interior_values is not None:
        vals[g.interior] = np.asarray(interior_values)[g.interior]
    vals[g.boundary] = boundary.values[g.boundary]
    return HalfDiskField(g, vals, p, {"cone": boundary.cone.to_dict()})


def cone_map(grid: HalfDiskGrid, cone: ConePartition, wells) -> np.ndarray:
    wells = np.asarray(wells, dtype=float)
    ph = cone.phase_at(grid.angle)
    vals = wells[np.clip(ph, 0, None)]
    vals[~grid.active] = 0.0
    return vals


def initial_field(boundary: BoundaryData, p: MultiWellPotential, transitions, width: float) -> HalfDiskField:
    """Cone map with a connection profile laid across each interior ray within 3 widths."""
    g = boundary.grid
    cone = boundary.cone
    vals = cone_map(g, cone, p.wells)
    X, Y = g.X, g.Y
    best = np.full(g.shape, np.inf)
    for beta, left, right in cone.discontinuities():
        if beta <= 0.0 or beta >= np.pi:
            continue
        e = np.array([np.cos(beta), np.sin(beta)])
        along = X * e[0] + Y * e[1]
        s = -X * e[1] + Y * e[0]
        near = g.interior & (along > 0) & (np.abs(s) < 3.0 * width) & (np.abs(s) < best)
        if not near.any():
            continue
        tr = _lookup(transitions, left, right)
        vals[near] = tr(s[near], 3.0 * width)
        best[near] = np.abs(s[near])
    return field_from_boundary(boundary, p, vals)


# ---------------------------------------------------------------------------
# residuals, probes, rescaling


@dataclass
class ResidualReport:
    sup: float
    l2: float
    nodes: int
    per_node: np.ndarray = field(repr=False)


def pde_residual(field: HalfDiskField, margin: float = 3.0) -> ResidualReport:
    """Five-point residual Lap_h u - grad W(u) at interior nodes at least margin*h from the boundary."""
    g = field.grid
    u = field.values
    h = g.h
    lap = np.zeros_like(u)
    lap[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1]) / h ** 2
    r = lap - field.potential.gradient(u)
    keep = g.interior & (g.radius <= g.R - margin * h) & (g.Y >= margin * h - 1e-12)
    mag = np.linalg.norm(r, axis=-1)
    mag[~keep] = 0.0
    n = int(keep.sum())
    sup = float(mag.max()) if n else 0.0
    l2 = float(np.sqrt(np.sum(mag ** 2) * h * h))
    return ResidualReport(sup, l2, n, mag)


@dataclass
class ProbeReport:
    trials: int
    violations: int
    worst_margin: float
    margins: list

    @property
    def passed(self) -> bool:
        return self.violations == 0


def local_minimality_probe(field: HalfDiskField, trials: int = 50, support_radius: float = 2.0,
                           amplitudes=(0.5, 1.0), seed: int = 0, slack: Optional[float] = None) -> ProbeReport:
    """Energy change under random compactly supported bumps; a negative change beyond slack is a violation.

    Bump amplitudes are fractions of the smallest inter-well distance.
    """
    g = field.grid
    rng = np.random.default_rng(seed)
    E0 = total_energy(field)
    if slack is None:
        slack = 1e-9 * max(abs(E0), 1.0)
    scale = field.potential.min_well_distance()
    margins = []
    reach = support_radius + 2 * g.h
    for _ in range(trials):
        for _ in range(1000):
            c = np.array([rng.uniform(-g.R, g.R), rng.uniform(0, g.R)])
            if c[1] >= reach and np.hypot(*c) <= g.R - reach:
                break
        else:
            raise ValueError("support radius too large for the grid")
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        d2 = ((g.X - c[0]) ** 2 + (g.Y - c[1]) ** 2) / support_radius ** 2
        bump = np.where(d2 < 1.0, (1.0 - d2) ** 2, 0.0)
        bump[~g.interior] = 0.0
        for a in amplitudes:
            trial = field.copy()
            trial.values = field.values + a * scale * bump[..., None] * direction
            margins.append(total_energy(trial) - E0)
    margins = np.array(margins)
    return ProbeReport(trials=trials, violations=int(np.sum(margins < -slack)),
                       worst_margin=float(margins.min()), margins=margins.tolist())


def _filled(field: HalfDiskField) -> np.ndarray:
    """Values with exterior nodes replaced by their nearest active neighbor (for interpolation)."""
    g = field.grid
    idx = ndimage.distance_transform_edt(~g.active, return_distances=False, return_indices=True)
    return field.values[idx[0], idx[1]]


def sample(field: HalfDiskField, pts: np.ndarray, filled: Optional[np.ndarray] = None) -> np.ndarray:
    """Bilinear interpolation of the field at arbitrary points, shape (..., 2)."""
    g = field.grid
    vals = _filled(field) if filled is None else filled
    pts = np.asarray(pts, dtype=float)
    fi = (pts[..., 0] - g.xs[0]) / g.h
    fj = (pts[..., 1] - g.ys[0]) / g.h
    coords = np.stack([fi.ravel(), fj.ravel()])
    out = np.stack([ndimage.map_coordinates(vals[..., c], coords, order=1, mode="nearest")
                    for c in range(2)], axis=-1)
    return out.reshape(pts.shape[:-1] + (2,))


def blow_down(field: HalfDiskField, r: float, target_grid: HalfDiskGrid) -> HalfDiskField:
    """Field z -> u(r z) sampled on ``target_grid``."""
    if r <= 0:
        raise ValueError("scale must be positive")
    if r * target_grid.R > field.grid.R * (1 + 1e-12):
        raise ValueError(f"blow-down at scale {r:g} needs radius {r * target_grid.R:g} > {field.grid.R:g}")
    pts = np.stack([target_grid.X * r, target_grid.Y * r], axis=-1)
    vals = sample(field, pts)
    vals[~target_grid.active] = 0.0
    return HalfDiskField(target_grid, vals, field.potential, {"blow_down_scale": r})


# ---------------------------------------------------------------------------
# checkpoints


def save_field(field: HalfDiskField, path, extra: Optional[dict] = None) -> None:
    path = Path(path)
    g = field.grid
    buf = io.StringIO()
    buf.write("x,y,u1,u2\n")
    I, J = np.nonzero(g.active)
    for i, j in zip(I, J):
        u = field.values[i, j]
        buf.write(f"{g.xs[i]:.17g},{g.ys[j]:.17g},{u[0]:.17g},{u[1]:.17g}\n")
    path.write_text(buf.getvalue())
    meta = {"grid": g.to_dict(), "potential": field.potential.spec_dict(), "meta": field.meta}
    if extra:
        meta.update(extra)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


def load_field(path) -> HalfDiskField:
    from .domain import build_grid
    from .potential import make_product_potential

    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    g = build_grid(meta["grid"]["R"], meta["grid"]["h"])
    ps = meta["potential"]
    p = make_product_potential(ps["wells"], coercivity_radius=ps["coercivity_radius"], scale=ps["scale"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = np.zeros(g.shape + (2,))
    i = np.rint((data[:, 0] - g.xs[0]) / g.h).astype(int)
    j = np.rint((data[:, 1] - g.ys[0]) / g.h).astype(int)
    vals[i, j] = data[:, 2:4]
    return HalfDiskField(g, vals, p, meta.get("meta", {}))
