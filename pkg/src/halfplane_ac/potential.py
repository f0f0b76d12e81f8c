"""Multi-well potentials on the phase plane.

The reference family is the product of squared distances to the wells,

    W(u) = scale * prod_i |u - a_i|^2,

which is nonnegative, vanishes exactly at the wells, has nondegenerate
quadratic wells and is coercive.  Evaluation goes through a canonically
sorted copy of the zero list so that permuting the wells gives bitwise
identical values.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) array of points, got shape {arr.shape}")
    return arr


class MultiWellPotential:
    """Product potential with registered wells and optional extra zero factors.

    ``extra_zeros`` are factors of the product that are *not* declared as
    wells.  They exist so that validation can be exercised on potentials
    whose zero set is larger than the advertised one.
    """

    family = "product"

    def __init__(self, wells, coercivity_radius: Optional[float] = None,
                 scale: float = 1.0, extra_zeros=()):
        self.wells = _as_points(wells)
        self.scale = float(scale)
        extra = np.asarray(extra_zeros, dtype=float).reshape(-1, 2)
        self.extra_zeros = extra
        zeros = np.vstack([self.wells, extra])
        order = np.lexsort((zeros[:, 1], zeros[:, 0]))
        self._zeros = zeros[order]
        if coercivity_radius is None:
            coercivity_radius = 2.0 * float(np.max(np.hypot(*zeros.T))) + 1.0
        self.coercivity_radius = float(coercivity_radius)

    @property
    def n_wells(self) -> int:
        return len(self.wells)

    def well_distances(self) -> np.ndarray:
        diff = self.wells[:, None, :] - self.wells[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def min_well_distance(self) -> float:
        d = self.well_distances()
        return float(d[~np.eye(len(d), dtype=bool)].min())

    def max_well_distance(self) -> float:
        return float(self.well_distances().max())

    def _sq(self, u: np.ndarray) -> list[np.ndarray]:
        return [(u[..., 0] - a[0]) ** 2 + (u[..., 1] - a[1]) ** 2 for a in self._zeros]

    def __call__(self, u) -> np.ndarray:
        return self.evaluate(u)

    def evaluate(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape[:-1], self.scale)
        for d in self._sq(u):
            out = out * d
        return out

    def sqrt_value(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape[:-1], np.sqrt(self.scale))
        for d in self._sq(u):
            out = out * np.sqrt(d)
        return out

    def gradient(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        sq = self._sq(u)
        grad = np.zeros(u.shape)
        for k, a in enumerate(self._zeros):
            others = np.full(u.shape[:-1], self.scale)
            for m, d in enumerate(sq):
                if m != k:
                    others = others * d
            grad += 2.0 * (u - a) * others[..., None]
        return grad

    def hessian(self, u) -> np.ndarray:
        """Analytic Hessian, shape ``u.shape + (2,)``."""
        u = np.asarray(u, dtype=float)
        sq = self._sq(u)
        n = len(self._zeros)
        hess = np.zeros(u.shape + (2,))
        eye = np.eye(2)
        for k in range(n):
            others = np.full(u.shape[:-1], self.scale)
            for m in range(n):
                if m != k:
                    others = others * sq[m]
            hess += 2.0 * others[..., None, None] * eye
            dk = u - self._zeros[k]
            for m in range(n):
                if m == k:
                    continue
                rest = np.full(u.shape[:-1], self.scale)
                for q in range(n):
                    if q not in (k, m):
                        rest = rest * sq[q]
                dm = u - self._zeros[m]
                hess += 4.0 * rest[..., None, None] * dk[..., :, None] * dm[..., None, :]
        return hess

    def spec_dict(self) -> dict:
        return {
            "family": self.family,
            "wells": self.wells.tolist(),
            "scale": self.scale,
            "coercivity_radius": self.coercivity_radius,
        }


def make_product_potential(wells: Sequence[Sequence[float]], coercivity_radius: Optional[float] = None,
                           scale: float = 1.0, extra_zeros=()) -> MultiWellPotential:
    pts = _as_points(wells)
    if len(pts) < 2:
        raise ValueError("need at least two wells")
    dup = [(i, j) for i in range(len(pts)) for j in range(i + 1, len(pts))
           if np.allclose(pts[i], pts[j], rtol=0.0, atol=1e-12)]
    if dup:
        names = ", ".join(f"a{i + 1}=a{j + 1}" for i, j in dup)
        raise ValueError(f"duplicate wells: {names}")
    if scale <= 0:
        raise ValueError("scale must be positive")
    return MultiWellPotential(pts, coercivity_radius=coercivity_radius, scale=scale,
                              extra_zeros=extra_zeros)


def equilateral_wells(radius: float = 1.0) -> np.ndarray:
    """Third roots of unity scaled by ``radius``; a1 sits on the positive axis."""
    ang = 2.0 * np.pi * np.arange(3) / 3.0
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def fd_hessian(p: MultiWellPotential, u, step: float) -> np.ndarray:
    """Centered second differences of ``p.evaluate`` at a single point."""
    u = np.asarray(u, dtype=float)
    hess = np.empty((2, 2))
    e = np.eye(2) * step
    for i in range(2):
        for j in range(2):
            f = (p.evaluate(u + e[i] + e[j]) - p.evaluate(u + e[i] - e[j])
                 - p.evaluate(u - e[i] + e[j]) + p.evaluate(u - e[i] - e[j]))
            hess[i, j] = f / (4.0 * step * step)
    return 0.5 * (hess + hess.T)


def fd_gradient(p: MultiWellPotential, u, step: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    g = np.empty(u.shape)
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        g[..., i] = (p.evaluate(u + e) - p.evaluate(u - e)) / (2.0 * step)
    return g


@dataclass
class SamplingConfig:
    box: float = 3.0
    samples: int = 10_000
    ring_samples: int = 2_000
    coercivity_outer_factor: float = 4.0
    zero_threshold: float = 1e-8      # the smallness constant delta_W
    hessian_step_factor: float = 1e-4
    seed: int = 0


@dataclass
class ValidationReport:
    clauses: dict = field(default_factory=dict)
    c1: float = float("nan")
    c2: float = float("nan")
    violations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def to_dict(self) -> dict:
        return {
            "clauses": dict(self.clauses),
            "c1": self.c1,
            "c2": self.c2,
            "violations": {k: np.asarray(v).tolist() for k, v in self.violations.items()},
            "passed": self.passed,
        }


def hessian_bounds(p: MultiWellPotential, step_factor: float = 1e-4) -> tuple[float, float, list]:
    step = step_factor * p.min_well_distance()
    eigs = []
    for a in p.wells:
        eigs.append(np.linalg.eigvalsh(fd_hessian(p, a, step)))
    flat = np.concatenate(eigs)
    return float(flat.min()), float(flat.max()), eigs


def validate_hypotheses(p: MultiWellPotential, config: Optional[SamplingConfig] = None) -> ValidationReport:
    """Sample-based check of nonnegativity, zero set, coercivity and Hessian bounds."""
    cfg = config or SamplingConfig()
    rng = np.random.default_rng(cfg.seed)
    report = ValidationReport()

    pts = rng.uniform(-cfg.box, cfg.box, size=(cfg.samples, 2))
    pts = np.vstack([pts, p.wells])
    vals = p.evaluate(pts)
    neg = pts[vals < 0]
    report.clauses["nonnegative"] = neg.size == 0
    report.violations["nonnegative"] = neg

    # zero set: local minimization from the lowest samples must land on a well
    from scipy.optimize import minimize

    M = p.coercivity_radius
    outer = cfg.coercivity_outer_factor * M
    far = rng.uniform(-outer, outer, size=(cfg.samples, 2))
    cloud = np.vstack([pts, far])
    cvals = p.evaluate(cloud)
    starts = cloud[np.argsort(cvals)[: max(20, 4 * p.n_wells)]]
    spurious = []
    for s in starts:
        res = minimize(lambda x: float(p.evaluate(x)), s, jac=lambda x: p.gradient(x),
                       method="BFGS", options={"gtol": 1e-14, "maxiter": 500})
        if res.fun < cfg.zero_threshold:
            dist = np.hypot(*(p.wells - res.x).T).min()
            if dist > 1e-3 * p.min_well_distance():
                spurious.append(res.x)
    at_wells = p.evaluate(p.wells)
    report.clauses["zero_set"] = not spurious and bool(np.all(at_wells <= cfg.zero_threshold))
    report.violations["zero_set"] = np.array(spurious).reshape(-1, 2)

    # coercivity: a ring at 1.5 M plus random samples in the annulus M < |u| < outer
    ang = np.linspace(0.0, 2.0 * np.pi, cfg.ring_samples, endpoint=False)
    ring = 1.5 * M * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rad = np.hypot(*cloud.T)
    cpts = np.vstack([ring, cloud[rad > M]])
    radial = np.einsum("ij,ij->i", p.gradient(cpts), cpts)
    bad = cpts[radial <= 0]
    report.clauses["coercive"] = bad.size == 0
    report.violations["coercive"] = bad

    c1, c2, eigs = hessian_bounds(p, cfg.hessian_step_factor)
    report.c1, report.c2 = c1, c2
    degenerate = np.array([e.min() <= 0 or not np.all(np.isfinite(e)) for e in eigs])
    report.clauses["hessian_bounds"] = not degenerate.any()
    report.violations["hessian_bounds"] = p.wells[degenerate]
    if not report.passed:
        failed = [k for k, v in report.clauses.items() if not v]
        logger.warning("hypothesis clauses failed: %s", failed)
    return report
