"""Read-only measurements on converged half-disk fields.

Radial averages, the Pohozaev balance, diffuse-interface sets, interface
angles, cross-section fits against the 1D connection, directional energies,
maximum-principle checks and exponential decay fits.  Nothing here modifies a
field.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar

from .heteroclinic import HeteroclinicProfile
from .partition import SharpInterface, unit
from .solver2d import Disk, HalfDiskField, energy, node_gradient, sample, _filled

logger = logging.getLogger(__name__)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12e}"


def _well_gaps(p, u) -> np.ndarray:
    """|u - a_i| for every well, stacked on the last axis."""
    return np.linalg.norm(np.asarray(u, dtype=float)[..., None, :] - p.wells, axis=-1)


# ---------------------------------------------------------------------------
# radial profiles


@dataclass
class RadialProfileTable:
    radii: np.ndarray
    potential_avg: np.ndarray      # (1/r) * int_{B_r^+} W
    dirichlet_avg: np.ndarray      # (1/r) * int_{B_r^+} |grad u|^2 / 2
    equipartition_defect: np.ndarray
    radial_energy: np.ndarray      # int |d_r u|^2 over the annulus ending at each radius

    def to_csv(self) -> str:
        rows = zip(self.radii, self.potential_avg, self.dirichlet_avg, self.equipartition_defect, self.radial_energy)
        return _csv(["radius", "potential_average", "dirichlet_average", "equipartition_defect",
                     "radial_derivative_energy"], rows)


def _cell_weights(field: HalfDiskField) -> np.ndarray:
    g = field.grid
    m = g.active.astype(float) * g.h ** 2
    m[:, 0] *= 0.5
    return m


def _cumulative_by_radius(values: np.ndarray, radius: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Sums of ``values`` over {radius <= r}; monotone in r whenever values are nonnegative."""
    order = np.argsort(radius, kind="stable")
    rs = radius[order]
    cum = np.concatenate([[0.0], np.cumsum(values[order])])
    idx = np.searchsorted(rs, radii, side="right")
    return cum[idx]


def radial_profiles(field: HalfDiskField, radii) -> RadialProfileTable:
    radii = np.asarray(radii, dtype=float)
    g = field.grid
    if np.any(radii <= 0) or np.any(radii > g.R + 1e-12):
        raise ValueError("radii must lie in (0, R]")
    Wav, Nav = [], []
    for r in radii:
        b = energy(field, Disk(r))
        Wav.append(b.potential_part / r)
        Nav.append(b.dirichlet_part / r)
    act = g.active
    grad = node_gradient(field)
    gnorm = np.sqrt(np.sum(grad ** 2, axis=(-2, -1)))
    sw = field.potential.sqrt_value(field.values)
    wts = _cell_weights(field)
    dens = np.where(act, (sw - gnorm / np.sqrt(2.0)) ** 2 * wts, 0.0)
    E = _cumulative_by_radius(dens[act], g.radius[act], radii)
    with np.errstate(invalid="ignore", divide="ignore"):
        er = np.stack([g.X, g.Y], axis=-1) / np.maximum(g.radius, 1e-300)[..., None]
    dr = np.einsum("...ca,...a->...c", grad, er)
    rad_d = np.where(act, np.sum(dr ** 2, axis=-1) * wts, 0.0)
    cum = _cumulative_by_radius(rad_d[act], g.radius[act], radii)
    ann = np.diff(np.concatenate([[0.0], cum]))
    return RadialProfileTable(radii, np.array(Wav), np.array(Nav), E, ann)


@dataclass
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float


def loglog_fit(x, y) -> LogLogFit:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(slope), float(icpt), r2)


# ---------------------------------------------------------------------------
# Pohozaev balance


def _circle(field: HalfDiskField, r: float, filled=None, grad_filled=None, n: Optional[int] = None):
    g = field.grid
    if n is None:
        n = max(64, int(np.ceil(np.pi * r / (0.25 * g.h))))
    th = (np.arange(n) + 0.5) * np.pi / n
    pts = r * unit(th)
    u = sample(field, pts, filled)
    J = np.stack([_sample_channel(grad_filled, field, pts, c) for c in range(4)], axis=-1).reshape(n, 2, 2)
    return th, u, J


def _sample_channel(arr, field, pts, c):
    g = field.grid
    fi = (pts[..., 0] - g.xs[0]) / g.h
    fj = (pts[..., 1] - g.ys[0]) / g.h
    return ndimage.map_coordinates(arr[..., c], np.stack([fi.ravel(), fj.ravel()]), order=1, mode="nearest")


def _filled_gradient(field: HalfDiskField) -> np.ndarray:
    g = field.grid
    grad = node_gradient(field).reshape(g.shape + (4,))
    idx = ndimage.distance_transform_edt(~g.active, return_distances=False, return_indices=True)
    return grad[idx[0], idx[1]]


@dataclass
class PohozaevReport:
    r1: float
    r2: float
    lhs: float
    rhs: float
    boundary_term: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "lhs": self.lhs, "rhs": self.rhs,
                "flat_boundary_term": self.boundary_term, "margin": self.margin}


def pohozaev_check(field: HalfDiskField, r1: float, r2: float, n_radii: Optional[int] = None) -> PohozaevReport:
    """Compare the change of the averaged potential with the integrated stress balance.

    lhs = Wbar(r2) - Wbar(r1) with Wbar(r) = (1/r) int_{B_r^+} W(u);
    rhs = int_{r1}^{r2} [ (1/2r) int_{arc} (|d_r u|^2/2 - |d_T u|^2/2 + W)
                          - (1/2r^2) int_{-r}^{r} |z_1| |d_1 u| |d_2 u| dz_1 ] dr.
    For a solution the difference is nonnegative up to quadrature error.
    """
    g = field.grid
    if not 0 < r1 < r2 <= g.R:
        raise ValueError("need 0 < r1 < r2 <= R")
    p = field.potential
    prof = radial_profiles(field, [r1, r2])
    lhs = float(prof.potential_avg[1] - prof.potential_avg[0])
    filled = _filled(field)
    gf = _filled_gradient(field)
    if n_radii is None:
        n_radii = max(8, int(np.ceil((r2 - r1) / (0.5 * g.h))))
    # Gauss-Legendre in r
    xg, wg = np.polynomial.legendre.leggauss(n_radii)
    rs = 0.5 * (r2 - r1) * xg + 0.5 * (r1 + r2)
    ws = 0.5 * (r2 - r1) * wg
    # flat boundary derivatives, second order one-sided in y
    u = field.values
    d1 = np.gradient(u[:, 0], g.h, axis=0)
    d2 = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * g.h)
    flat_dens = np.abs(g.xs) * np.linalg.norm(d1, axis=-1) * np.linalg.norm(d2, axis=-1)
    flat_ok = g.active[:, 0] & g.active[:, 1] & g.active[:, 2]
    rhs = 0.0
    bterm_total = 0.0
    for r, w in zip(rs, ws):
        th, uu, J = _circle(field, r, filled, gf)
        er = unit(th)
        et = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        dr = np.einsum("nca,na->nc", J, er)
        dt = np.einsum("nca,na->nc", J, et)
        dens = 0.5 * np.sum(dr ** 2, axis=-1) - 0.5 * np.sum(dt ** 2, axis=-1) + p.evaluate(uu)
        arc = float(np.sum(dens) * np.pi * r / len(th))
        sel = flat_ok & (np.abs(g.xs) <= r)
        bterm = float(np.trapezoid(flat_dens[sel], g.xs[sel])) if sel.sum() > 1 else 0.0
        rhs += w * (arc / (2.0 * r) - bterm / (2.0 * r * r))
        bterm_total += w * bterm / (2.0 * r * r)
    return PohozaevReport(r1, r2, lhs, float(rhs), float(bterm_total))


def default_annuli(R: float, count: int = 5) -> list:
    edges = np.linspace(R / 8.0, 3.0 * R / 4.0, count + 1)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


# ---------------------------------------------------------------------------
# diffuse interface


def _segment_distance(points: np.ndarray, interface: SharpInterface) -> np.ndarray:
    best = np.full(points.shape[:-1], np.inf)
    for p, q, _, _ in interface.segments:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        d = q - p
        L2 = float(d @ d)
        t = np.zeros(points.shape[:-1]) if L2 == 0 else np.clip(((points - p) @ d) / L2, 0.0, 1.0)
        proj = p + t[..., None] * d
        best = np.minimum(best, np.linalg.norm(points - proj, axis=-1))
    return best


@dataclass
class DiffuseInterface:
    gamma: float
    mask: np.ndarray = field(repr=False)
    radii: list
    widths: list          # max distance to the sharp interface of diffuse nodes near each radius

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def to_csv(self) -> str:
        return _csv(["radius", "max_distance_to_interface", "relative_width"],
                    [(r, w, None if w is None else w / r) for r, w in zip(self.radii, self.widths)])


def diffuse_interface(field: HalfDiskField, gamma: float, interface: Optional[SharpInterface] = None,
                      radii: Optional[Sequence[float]] = None) -> DiffuseInterface:
    """Nodes where u stays at least gamma away from every well."""
    p = field.potential
    limit = 0.5 * p.min_well_distance()
    if not 0 < gamma < limit:
        raise ValueError(f"gamma must lie in (0, {limit:g})")
    g = field.grid
    dist = _well_gaps(p, field.values).min(axis=-1)
    mask = g.active & (dist >= gamma)
    radii = [] if radii is None else [float(r) for r in radii]
    widths = []
    if interface is not None and radii:
        pts = np.stack([g.X, g.Y], axis=-1)
        dn = _segment_distance(pts, interface)
        for r in radii:
            band = mask & (np.abs(g.radius - r) <= 0.5 * g.h)
            widths.append(float(dn[band].max()) if band.any() else None)
    return DiffuseInterface(gamma, mask, radii, widths)


# ---------------------------------------------------------------------------
# interface angles


@dataclass
class AngleTrack:
    """Interface positions on circles of an annulus.

    ``rays`` are least-squares rays from the origin through the interface
    points (the cone picture); ``lines`` are free straight-line fits, whose
    directions also register a junction displaced from the origin.
    """
    radii: list
    per_radius: list              # interface angles at each radius, ascending
    well_sequences: list          # wells met going counter-clockwise at each radius
    rays: list
    lines: list
    resolved: bool

    @property
    def estimates(self) -> list:
        return list(self.rays)

    def angle_between_rays(self) -> Optional[float]:
        if len(self.rays) < 2:
            return None
        return float(abs(self.rays[1] - self.rays[0]))

    def angle_between_lines(self) -> Optional[float]:
        if len(self.lines) < 2:
            return None
        return float(abs(self.lines[1] - self.lines[0]))

    def to_csv(self) -> str:
        k = max((len(a) for a in self.per_radius), default=0)
        rows = [[r] + list(a) + [None] * (k - len(a)) for r, a in zip(self.radii, self.per_radius)]
        return _csv(["radius"] + [f"interface_angle_{i + 1}" for i in range(k)], rows)


def _principal_direction(P: np.ndarray, centered: bool) -> float:
    c = P.mean(axis=0)
    _, _, vt = np.linalg.svd(P - c if centered else P)
    d = vt[0] if vt[0] @ c >= 0 else -vt[0]
    return float(np.arctan2(d[1], d[0]))


def _arcs_on_circle(field, r, delta, filled, n=None):
    g = field.grid
    if n is None:
        n = max(256, int(np.ceil(np.pi * r / (0.05 * g.h))))
    th = np.linspace(0.0, np.pi, n + 1)
    u = sample(field, r * unit(th), filled)
    d = _well_gaps(field.potential, u)
    near = d <= 0.5 * delta
    lab = np.where(near.any(axis=-1), np.argmin(d, axis=-1), -1)
    arcs = []
    k = 0
    while k <= n:
        if lab[k] < 0:
            k += 1
            continue
        j = k
        while j + 1 <= n and lab[j + 1] == lab[k]:
            j += 1
        arcs.append((float(th[k]), float(th[j]), int(lab[k])))
        k = j + 1
    return arcs


def interface_angles(field: HalfDiskField, annulus: tuple, delta: float, expected: Optional[int] = None,
                     n_radii: int = 9) -> AngleTrack:
    """Arcs where u is within delta/2 of a well on circles in the annulus; interfaces at gap midpoints."""
    p = field.potential
    if not 0 < delta < p.min_well_distance():
        raise ValueError("delta must lie in (0, min well distance)")
    r1, r2 = annulus
    if not 0 < r1 < r2 <= field.grid.R:
        raise ValueError("annulus must lie inside the grid")
    filled = _filled(field)
    radii = list(np.linspace(r1, r2, n_radii))
    per, seqs = [], []
    resolved = True
    for r in radii:
        arcs = _arcs_on_circle(field, r, delta, filled)
        seq = [a[2] for a in arcs]
        angles = []
        for (s0, e0, l0), (s1, e1, l1) in zip(arcs[:-1], arcs[1:]):
            if l0 != l1:
                angles.append(0.5 * (e0 + s1))
        if expected is not None and len(angles) != expected:
            resolved = False
        per.append(angles)
        seqs.append(seq)
    counts = [len(a) for a in per]
    rays, lines = [], []
    if counts:
        k = max(set(counts), key=counts.count)
        for idx in range(k):
            P = np.array([r * unit(a[idx]) for r, a in zip(radii, per) if len(a) == k])
            if len(P) < 2:
                continue
            rays.append(_principal_direction(P, centered=False))
            lines.append(_principal_direction(P, centered=True))
    if not resolved:
        logger.warning("interface not resolved on every circle of annulus %s", annulus)
    return AngleTrack([float(r) for r in radii], per, seqs, rays, lines, resolved)


# ---------------------------------------------------------------------------
# cross-section fits


@dataclass
class ProfileFit:
    station: float
    shift: Optional[float]
    d0: float
    d1: float
    orthogonality: float
    G: float
    H: float
    reliable: bool

    def to_dict(self) -> dict:
        return {"station": self.station, "shift": self.shift, "d0": self.d0, "d1": self.d1,
                "orthogonality_residual": self.orthogonality, "G": self.G, "H": self.H, "reliable": self.reliable}


def section_bounds(alpha: float, neighbors: tuple) -> tuple:
    """Half-openings (below, above) of the sector around the ray at alpha.

    ``neighbors`` are the adjacent ray angles (or 0 and pi); the sector runs
    between the bisectors toward each neighbor.
    """
    lo, hi = neighbors
    return 0.5 * (alpha - lo), 0.5 * (hi - alpha)


@dataclass
class CrossSection:
    y: np.ndarray
    values: np.ndarray
    along: np.ndarray      # derivative along the ray
    across: np.ndarray     # derivative across the ray
    inside: np.ndarray


def cross_section(field: HalfDiskField, alpha: float, x: float, half_openings: tuple, left, right,
                  reach: float, filled=None, grad_filled=None) -> CrossSection:
    """Samples of u on the segment through x e_alpha orthogonal to the ray, at the grid spacing.

    Outside the sector, or outside the grid, the nearest well of that side
    is substituted and the derivatives vanish.
    """
    g = field.grid
    e = unit(alpha)
    eperp = np.array([-e[1], e[0]])
    b_lo, b_hi = half_openings
    y_lo = -x * np.tan(b_lo)
    y_hi = x * np.tan(b_hi)
    k_lo = int(np.floor(min(y_lo, -reach) / g.h))
    k_hi = int(np.ceil(max(y_hi, reach) / g.h))
    y = g.h * np.arange(k_lo, k_hi + 1)
    pts = x * e + y[:, None] * eperp
    r = np.linalg.norm(pts, axis=1)
    in_grid = (r <= g.R - g.h) & (pts[:, 1] >= 0.0)
    inside = (y >= y_lo - 1e-12) & (y <= y_hi + 1e-12) & in_grid
    filled = _filled(field) if filled is None else filled
    gf = _filled_gradient(field) if grad_filled is None else grad_filled
    vals = sample(field, pts, filled)
    J = np.stack([_sample_channel(gf, field, pts, c) for c in range(4)], axis=-1).reshape(len(y), 2, 2)
    along = J @ e
    across = J @ eperp
    side = np.where(y < 0, 0, 1)
    wells = np.stack([np.asarray(left, dtype=float), np.asarray(right, dtype=float)])
    vals = np.where(inside[:, None], vals, wells[side])
    along = np.where(inside[:, None], along, 0.0)
    across = np.where(inside[:, None], across, 0.0)
    return CrossSection(y, vals, along, across, inside)


def fit_translation(field: HalfDiskField, alpha: float, x: float, profile: HeteroclinicProfile,
                    half_openings: tuple, eps: Optional[float] = None, section: Optional[CrossSection] = None,
                    filled=None, grad_filled=None) -> ProfileFit:
    """Best shift h with v(x, y) ~ U(y - h) across the ray at angle alpha, station x.

    The shift minimizes the L2 distance d0 (golden section on a bracket,
    then secant iterations on the orthogonality condition
    <v - U(. - h), U'(. - h)> = 0).  G and H integrate
    |d_y v|^2/2 - |d_x v|^2/2 + W(v) and d_x v . d_y v across the section,
    with x along the ray and y across it.
    """
    if eps is None:
        eps = 0.2 * math.sqrt(profile.energy)
    reach = profile.L + 2.0 * field.grid.h
    sec = section or cross_section(field, alpha, x, half_openings, profile.left, profile.right, reach,
                                   filled, grad_filled)
    y, v = sec.y, sec.values
    dy = float(y[1] - y[0])

    def resid(hh):
        return v - profile(y - hh)

    def d0sq(hh):
        return float(np.sum(resid(hh) ** 2) * dy)

    def ortho(hh):
        return float(np.sum(resid(hh) * profile.derivative(y - hh)) * dy)

    # initial guess from the gauge crossing of the section
    f = np.linalg.norm(v - profile.left, axis=1) - np.linalg.norm(v - profile.right, axis=1)
    s = np.nonzero(np.diff(np.sign(f)))[0]
    if len(s):
        q = s[np.argmin(np.abs(y[s]))]
        h0 = float(y[q] - f[q] * (y[q + 1] - y[q]) / (f[q + 1] - f[q]))
    else:
        h0 = 0.0
    br = minimize_scalar(d0sq, bracket=(h0 - dy, h0 + dy), method="golden", tol=1e-10)
    hh = float(br.x)
    # secant on the orthogonality condition
    h_prev, o_prev = hh + 1e-6, ortho(hh + 1e-6)
    for _ in range(40):
        o = ortho(hh)
        if o == o_prev:
            break
        h_new = hh - o * (hh - h_prev) / (o - o_prev)
        h_prev, o_prev = hh, o
        if not np.isfinite(h_new) or abs(h_new - hh) > dy:
            break
        if d0sq(h_new) > d0sq(hh) * (1 + 1e-12) + 1e-300:
            break
        hh = h_new
        if abs(h_prev - hh) < 1e-15 * max(1.0, abs(hh)):
            break
    r = resid(hh)
    d0 = math.sqrt(max(d0sq(hh), 0.0))
    Uy = np.gradient(profile(y - hh), dy, axis=0)
    vy = np.gradient(v, dy, axis=0)
    d1 = math.sqrt(d0 * d0 + float(np.sum((vy - Uy) ** 2) * dy))
    orth = abs(ortho(hh))
    W = field.potential.evaluate(v)
    G = float(np.sum(0.5 * np.sum(sec.across ** 2, axis=1) - 0.5 * np.sum(sec.along ** 2, axis=1) + W) * dy)
    H = float(np.sum(np.sum(sec.along * sec.across, axis=1)) * dy)
    reliable = d0 <= eps
    return ProfileFit(float(x), hh if reliable else None, d0, d1, orth, G, H, reliable)


def section_reference(profile: HeteroclinicProfile, p, step: float) -> float:
    """The cross-section functional G applied to the connection itself, sampled at ``step``.

    Centered differences of the sampled connection give the value a field
    that is exactly invariant along the ray would produce.
    """
    L = profile.L
    y = step * np.arange(-int(np.ceil(L / step)) - 2, int(np.ceil(L / step)) + 3)
    U = profile(y)
    dU = np.gradient(U, step, axis=0)
    return float(np.sum(0.5 * np.sum(dU ** 2, axis=1) + p.evaluate(U)) * step)


# ---------------------------------------------------------------------------
# sectors, maximum principle, decay


def directional_energy(field: HalfDiskField, sector: tuple, direction) -> float:
    """Sum of |d_e u|^2 over nodes of the sector (theta1, theta2, r1, r2)."""
    t1, t2, r1, r2 = sector
    g = field.grid
    if r2 > g.R + 1e-12:
        raise ValueError("sector leaves the grid")
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    th = g.angle
    sel = g.active & (th >= t1) & (th <= t2) & (g.radius >= r1) & (g.radius <= r2)
    de = node_gradient(field) @ e
    return float(np.sum(np.sum(de ** 2, axis=-1)[sel] * _cell_weights(field)[sel]))


@dataclass
class MaxPrincipleVerdict:
    status: str                  # "pass", "fail" or "not applicable"
    boundary_max: float
    interior_max: float
    radius: float

    def to_dict(self) -> dict:
        return {"status": self.status, "boundary_max": self.boundary_max,
                "interior_max": self.interior_max, "radius": self.radius}


def max_principle_check(field: HalfDiskField, well: int, region, r: float,
                        slack: Optional[float] = None) -> MaxPrincipleVerdict:
    """If |u - a_i| <= r on the discrete boundary of the region, check it inside (up to slack)."""
    g = field.grid
    D = g.active & region.contains(g.X, g.Y)
    pad = np.pad(D, 1, constant_values=False)
    interior = D & pad[2:, 1:-1] & pad[:-2, 1:-1] & pad[1:-1, 2:] & pad[1:-1, :-2]
    bnd = D & ~interior
    dev = np.linalg.norm(field.values - field.potential.wells[well], axis=-1)
    bmax = float(dev[bnd].max()) if bnd.any() else 0.0
    imax = float(dev[interior].max()) if interior.any() else 0.0
    if bmax > r:
        return MaxPrincipleVerdict("not applicable", bmax, imax, r)
    if slack is None:
        slack = g.h * float(np.abs(node_gradient(field)[D]).max()) if D.any() else 0.0
    return MaxPrincipleVerdict("pass" if imax <= r + slack else "fail", bmax, imax, r)


@dataclass
class DecayFit:
    K: float
    k: float
    r_squared: float
    samples: int
    reliable: bool
    degenerate: bool

    def to_dict(self) -> dict:
        return {"K": self.K, "k": self.k, "r_squared": self.r_squared, "samples": self.samples,
                "reliable": self.reliable, "degenerate": self.degenerate}


def decay_fit(field: HalfDiskField, interface: SharpInterface, min_distance: float,
              max_distance: Optional[float] = None, floor: float = 1e-12) -> DecayFit:
    """Least squares of log min_i |u - a_i| against the distance to the sharp interface.

    Nodes closer than ``min_distance`` to the interface or 5h to the domain
    boundary are skipped, as are values at the round-off floor.
    """
    g = field.grid
    pts = np.stack([g.X, g.Y], axis=-1)
    dist = _segment_distance(pts, interface)
    to_bnd = np.minimum(g.R - g.radius, g.Y)
    sel = g.active & (dist >= min_distance) & (to_bnd >= 5 * g.h)
    if max_distance is not None:
        sel &= dist <= max_distance
    dev = _well_gaps(field.potential, field.values).min(axis=-1)
    ok = sel & (dev > floor)
    n = int(ok.sum())
    if n < 10:
        return DecayFit(float("nan"), float("nan"), float("nan"), n, False, True)
    x = dist[ok]
    yv = np.log(dev[ok])
    A = np.vstack([-x, np.ones_like(x)]).T
    (k, logK), *_ = np.linalg.lstsq(A, yv, rcond=None)
    pred = A @ np.array([k, logK])
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum((yv - pred) ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(float(np.exp(logK)), float(k), r2, n, r2 >= 0.8, False)
