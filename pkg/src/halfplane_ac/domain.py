"""Masked Cartesian half-disk grids, flat boundary data and cone-shaped arc data.

Wells are addressed by 0-based index: well 0 is preferred on the positive
x-axis, well 1 on the negative x-axis, and indices >= 2 can occupy the
middle sector of a cone.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .potential import MultiWellPotential

logger = logging.getLogger(__name__)

EXTERIOR, INTERIOR, FLAT, ARC = 0, 1, 2, 3
NODE_NAMES = {EXTERIOR: "exterior", INTERIOR: "interior", FLAT: "flat", ARC: "arc"}


@dataclass
class HalfDiskGrid:
    R: float
    h: float
    xs: np.ndarray
    ys: np.ndarray
    types: np.ndarray      # (nx, ny) int8 node classification

    @property
    def shape(self) -> tuple:
        return self.types.shape

    @property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.xs[:, None], self.shape)

    @property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.ys[None, :], self.shape)

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.X, self.Y)

    @property
    def angle(self) -> np.ndarray:
        return np.arctan2(self.Y, self.X)

    @property
    def interior(self) -> np.ndarray:
        return self.types == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return (self.types == FLAT) | (self.types == ARC)

    @property
    def active(self) -> np.ndarray:
        return self.types != EXTERIOR

    def counts(self) -> dict:
        return {NODE_NAMES[k]: int(np.sum(self.types == k)) for k in NODE_NAMES}

    def index_of_x(self, x: float) -> int:
        return int(np.rint((x - self.xs[0]) / self.h))

    def to_dict(self) -> dict:
        return {"R": self.R, "h": self.h, "nx": len(self.xs), "ny": len(self.ys), "counts": self.counts()}


def build_grid(R: float, h: float) -> HalfDiskGrid:
    """Grid on [-R, R] x [0, R] with nodes classified as interior, flat, arc or exterior.

    Interior nodes satisfy |z| < R - h and y > 0, so each of their four
    neighbors is interior or boundary.  Arc nodes fill R - h <= |z| <= R.
    """
    if R <= 0 or h <= 0:
        raise ValueError("R and h must be positive")
    if h > R / 20.0 * (1 + 1e-12):
        raise ValueError(f"grid rule violated: h={h:g} exceeds R/20={R / 20:g}")
    n = int(np.floor(R / h + 1e-9))
    xs = h * np.arange(-n, n + 1)
    ys = h * np.arange(0, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    r = np.hypot(X, Y)
    types = np.full(X.shape, EXTERIOR, dtype=np.int8)
    types[(Y > 0) & (r < R - h)] = INTERIOR
    types[(Y > 0) & (r >= R - h) & (r <= R)] = ARC
    types[(Y == 0) & (np.abs(X) <= R)] = FLAT
    return HalfDiskGrid(R=float(R), h=float(h), xs=xs, ys=ys, types=types)


@dataclass
class FlatBoundaryData:
    """u0(x) = (a1 + a2)/2 + (a1 - a2)/2 * tanh(x / w)."""
    a1: np.ndarray
    a2: np.ndarray
    w: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.tanh(x / self.w)[..., None]
        return 0.5 * (self.a1 + self.a2) + 0.5 * (self.a1 - self.a2) * t

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = (1.0 / np.cosh(x / self.w) ** 2 / self.w)[..., None]
        return 0.5 * (self.a1 - self.a2) * s

    def energy_sum(self, p: MultiWellPotential, R: float, h: float) -> float:
        x = h * np.arange(-int(R / h), int(R / h) + 1)
        d = self.derivative(x)
        return float(np.sum(0.5 * np.sum(d ** 2, axis=-1) + p.evaluate(self(x))) * h)

    def moment_sum(self, R: float, h: float) -> float:
        x = h * np.arange(-int(R / h), int(R / h) + 1)
        return float(np.sum(np.abs(x) * np.linalg.norm(self.derivative(x), axis=-1)) * h)


def build_flat_boundary_data(wells, w: float) -> FlatBoundaryData:
    if w <= 0:
        raise ValueError("decay width w must be positive")
    wells = np.asarray(wells, dtype=float)
    return FlatBoundaryData(a1=wells[0].copy(), a2=wells[1].copy(), w=float(w))


@dataclass(frozen=True)
class ConePartition:
    """Homogeneous partition of the half plane by two rays.

    Well 0 on (0, alpha1), ``middle`` on (alpha1, alpha2), well 1 on (alpha2, pi).
    """
    alpha1: float
    alpha2: float
    middle: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.alpha1 <= self.alpha2 <= np.pi + 1e-15):
            raise ValueError(f"need 0 <= alpha1 <= alpha2 <= pi, got ({self.alpha1}, {self.alpha2})")
        if self.alpha1 < self.alpha2 and self.middle is None:
            raise ValueError("a cone with alpha1 < alpha2 needs a middle phase")

    @property
    def gap(self) -> float:
        return self.alpha2 - self.alpha1

    def kind(self) -> str:
        a1, a2 = self.alpha1, self.alpha2
        if (a1 == a2 and a1 in (0.0, np.pi)) or (a1 == 0.0 and a2 == np.pi):
            return "constant"
        if a2 == np.pi or a1 == 0.0 or a1 == a2:
            return "two_phase"
        return "triple_junction"

    def phases(self) -> list:
        """(start, end, phase) arcs covering [0, pi], empty arcs dropped."""
        arcs = [(0.0, self.alpha1, 0), (self.alpha1, self.alpha2, self.middle), (self.alpha2, np.pi, 1)]
        return [a for a in arcs if a[1] > a[0]]

    def phase_at(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.where(theta < self.alpha1, 0, np.where(theta < self.alpha2, -1 if self.middle is None else self.middle, 1))
        return out

    def reflected(self) -> "ConePartition":
        return ConePartition(np.pi - self.alpha2, np.pi - self.alpha1, self.middle)

    def discontinuities(self) -> list:
        """(angle, left phase, right phase) for every jump along the closed arc, ends included."""
        arcs = self.phases()
        out = []
        if arcs[0][2] != 0:
            out.append((0.0, 0, arcs[0][2]))
        for (s0, e0, p0), (s1, e1, p1) in zip(arcs[:-1], arcs[1:]):
            if p0 != p1:
                out.append((e0, p0, p1))
        if arcs[-1][2] != 1:
            out.append((np.pi, arcs[-1][2], 1))
        return out

    def to_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "middle": self.middle, "kind": self.kind()}


# ---------------------------------------------------------------------------
# transitions across arc discontinuities


class ProfileTransition:
    """U(s) of a connection, corrected linearly so that s = -T and s = T hit the wells exactly."""

    def __init__(self, profile):
        self.profile = profile

    def __call__(self, s: np.ndarray, T: float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        pr = self.profile
        u = pr(s)
        lo = pr(np.array([-T]))[0] - pr.left
        hi = pr(np.array([T]))[0] - pr.right
        t = np.clip((s + T) / (2.0 * T), 0.0, 1.0)[..., None]
        u = u - (1.0 - t) * lo - t * hi
        u = np.where((s <= -T)[..., None], pr.left, u)
        return np.where((s >= T)[..., None], pr.right, u)

    def reversed(self) -> "ProfileTransition":
        return ProfileTransition(self.profile.reversed())


class GeodesicTransition:
    """Phase-plane polyline traversed at uniform metric speed across the window."""

    def __init__(self, polyline: np.ndarray, p: MultiWellPotential):
        poly = np.asarray(polyline, dtype=float)
        mids = 0.5 * (poly[1:] + poly[:-1])
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1) * np.sqrt(2.0 * p.evaluate(mids))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.poly = poly
        self.frac = cum / cum[-1] if cum[-1] > 0 else np.linspace(0.0, 1.0, len(poly))
        self._p = p

    def __call__(self, s: np.ndarray, T: float) -> np.ndarray:
        f = np.clip((np.asarray(s, dtype=float) + T) / (2.0 * T), 0.0, 1.0)
        return np.stack([np.interp(f, self.frac, self.poly[:, c]) for c in range(2)], axis=-1)

    def reversed(self) -> "GeodesicTransition":
        return GeodesicTransition(self.poly[::-1].copy(), self._p)


def _lookup(transitions: Mapping, i: int, j: int):
    if (i, j) in transitions:
        return transitions[(i, j)]
    if (j, i) in transitions:
        return transitions[(j, i)].reversed()
    raise KeyError(f"no transition between wells {i} and {j}")


@dataclass
class BoundaryData:
    grid: HalfDiskGrid
    values: np.ndarray     # (nx, ny, 2); meaningful on flat and arc nodes
    cone: ConePartition
    smoothing_angle: float
    flat: FlatBoundaryData
    windows: list = field(default_factory=list)

    def to_csv_bundle(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        g = self.grid
        mask = g.active
        buf = io.StringIO()
        buf.write("x,y,type,u1,u2\n")
        for (i, j) in zip(*np.nonzero(mask)):
            u = self.values[i, j] if g.boundary[i, j] else (np.nan, np.nan)
            buf.write(f"{g.xs[i]:.17g},{g.ys[j]:.17g},{NODE_NAMES[int(g.types[i, j])]},{u[0]:.17g},{u[1]:.17g}\n")
        (d / "nodes.csv").write_text(buf.getvalue())
        meta = {"grid": g.to_dict(), "cone": self.cone.to_dict(), "smoothing_angle": self.smoothing_angle,
                "flat_width": self.flat.w, "windows": self.windows}
        (d / "boundary.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def build_arc_boundary_data(cone: ConePartition, smoothing_angle: Optional[float], grid: HalfDiskGrid,
                            wells, transitions: Mapping, flat: Optional[FlatBoundaryData] = None,
                            flat_width: float = 0.5) -> BoundaryData:
    """Dirichlet values on flat and arc nodes for a cone.

    Each jump of the cone at angle beta gets a window [beta - w, beta + w]
    (shifted inward at the ends 0 and pi) across which the value follows the
    transition for that pair of wells, evaluated at the signed distance
    |z| sin(theta - beta) to the jump ray.
    """
    wells = np.asarray(wells, dtype=float)
    if smoothing_angle is None:
        smoothing_angle = 4.0 * grid.h / grid.R
    w = float(smoothing_angle)
    if w <= 0:
        raise ValueError("smoothing_angle must be positive")
    windows = []
    for beta, left, right in cone.discontinuities():
        center = beta
        if beta == 0.0:
            center = w
        elif beta == np.pi:
            center = np.pi - w
        windows.append((center, left, right))
    spans = sorted((c - w, c + w) for c, _, _ in windows)
    for lo, hi in spans:
        if lo < -1e-12 or hi > np.pi + 1e-12:
            raise ValueError(f"window [{lo:.4f}, {hi:.4f}] leaves [0, pi]; reduce smoothing_angle")
    for (lo0, hi0), (lo1, hi1) in zip(spans[:-1], spans[1:]):
        if hi0 > lo1:
            raise ValueError(f"transition windows overlap: [{lo0:.4f}, {hi0:.4f}] and [{lo1:.4f}, {hi1:.4f}]")

    if flat is None:
        flat = build_flat_boundary_data(wells, flat_width)
    values = np.zeros(grid.shape + (2,))
    fl = grid.types == FLAT
    values[fl] = flat(grid.X[fl])
    arc = grid.types == ARC
    theta = grid.angle[arc]
    rad = grid.radius[arc]
    ph = cone.phase_at(theta)
    vals = wells[np.clip(ph, 0, None)]
    for center, left, right in windows:
        inside = np.abs(theta - center) <= w
        if not np.any(inside):
            continue
        tr = _lookup(transitions, left, right)
        T = grid.R * np.sin(w)
        s = rad[inside] * np.sin(theta[inside] - center)
        vals[inside] = tr(s, T)
    values[arc] = vals
    return BoundaryData(grid=grid, values=values, cone=cone, smoothing_angle=w, flat=flat,
                        windows=[[float(c), int(l), int(r)] for c, l, r in windows])


def reflect_values(values: np.ndarray) -> np.ndarray:
    """Mirror a node array across the y-axis (x -> -x)."""
    return values[::-1].copy()
