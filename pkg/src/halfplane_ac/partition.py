"""Sharp-interface geometry: junction angles, cone energies, Steiner networks in the unit half disk.

Wells are addressed by 0-based index as in :mod:`halfplane_ac.domain`: the
flat boundary carries well 0 on x > 0 and well 1 on x < 0.  A mismatch
between a region and the flat data costs the metric distance between the two
wells per unit length, which for wells is the surface tension sigma.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .domain import ConePartition

logger = logging.getLogger(__name__)


def unit(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


# ---------------------------------------------------------------------------
# junction angles


@dataclass(frozen=True)
class JunctionAngles:
    """Opening angle of each phase at a triple junction; theta_k sits inside phase k."""
    theta1: float
    theta2: float
    theta3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])

    def sine_ratios(self, s12: float, s13: float, s23: float) -> np.ndarray:
        return np.array([np.sin(self.theta1) / s23, np.sin(self.theta2) / s13, np.sin(self.theta3) / s12])

    def to_dict(self) -> dict:
        return {"theta1": self.theta1, "theta2": self.theta2, "theta3": self.theta3}


def young_angles(s12: float, s13: float, s23: float) -> JunctionAngles:
    """Force-balance angles for surface tensions s_ij between phases i and j.

    The three tension vectors close into a triangle with sides s12, s13, s23;
    the opening angle of phase k is pi minus the triangle angle opposite the
    tension of the interface not touching phase k.
    """
    s = {(1, 2): float(s12), (1, 3): float(s13), (2, 3): float(s23)}
    for (i, j), k in (((1, 2), 3), ((1, 3), 2), ((2, 3), 1)):
        others = [v for key, v in s.items() if key != (i, j)]
        if not s[(i, j)] < sum(others):
            raise ValueError(f"triangle inequality fails for triple (1, 2, 3): "
                             f"sigma_{i}{j}={s[(i, j)]:g} >= {others[0]:g} + {others[1]:g}")
    if min(s.values()) <= 0:
        raise ValueError("surface tensions must be positive")

    def opening(opposite, a, b):
        c = (a * a + b * b - opposite * opposite) / (2.0 * a * b)
        return np.pi - float(np.arccos(np.clip(c, -1.0, 1.0)))

    t1 = opening(s[(2, 3)], s[(1, 2)], s[(1, 3)])
    t2 = opening(s[(1, 3)], s[(1, 2)], s[(2, 3)])
    t3 = 2.0 * np.pi - t1 - t2
    return JunctionAngles(t1, t2, t3)


def _sigma3(sigma, middle: int = 2) -> tuple[float, float, float]:
    s = np.asarray(sigma, dtype=float)
    return float(s[0, 1]), float(s[0, middle]), float(s[middle, 1])


def young_gap(sigma, middle: int = 2) -> float:
    """Smallest opening of the middle phase at a boundary junction between wells 0, middle, 1."""
    s01, s0m, sm1 = _sigma3(sigma, middle)
    return young_angles(s01, s0m, sm1).theta3


# ---------------------------------------------------------------------------
# cones


def cone_energy(cone: ConePartition, sigma, boundary_distance=None) -> float:
    """Weighted interface length per unit radius, flat-boundary mismatches included."""
    s = np.asarray(sigma, dtype=float)
    d = s if boundary_distance is None else np.asarray(boundary_distance, dtype=float)
    total = 0.0
    for beta, left, right in cone.discontinuities():
        if beta <= 0.0 or beta >= np.pi:
            total += float(d[left, right])
        else:
            total += float(s[left, right])
    return total


def vertex_stationary(cone: ConePartition, sigma, tol: float = 1e-12) -> bool:
    """First-order test at O: moving the junction into the half plane cannot shorten the network.

    For a two-jump cone the interfaces pull O with forces sigma_0m e(alpha1)
    and sigma_m1 e(alpha2); detaching costs sigma_01 per unit length of the
    new interface back to O.  Single-jump and constant cones pass trivially.
    """
    m = cone.middle
    if not cone.alpha1 < cone.alpha2 or m in (0, 1):
        return True
    s01, s0m, sm1 = _sigma3(sigma, m)
    force = s0m * unit(cone.alpha1) + sm1 * unit(cone.alpha2)
    return bool(np.linalg.norm(force) <= s01 + tol)


@dataclass
class RankedCone:
    cone: ConePartition
    energy: float
    kind: str

    def to_dict(self) -> dict:
        return {"cone": self.cone.to_dict(), "energy": self.energy, "kind": self.kind}


@dataclass
class ConeClassification:
    minimal: list            # RankedCone, ascending energy then angles
    angular_step: float
    examined: int
    min_gap: Optional[float]
    gap_bound: Optional[float]

    @property
    def gap_law_holds(self) -> Optional[bool]:
        if self.min_gap is None:
            return None
        return bool(self.min_gap >= self.gap_bound - self.angular_step - 1e-12)


def classify_minimal_cones(sigma, angular_step: float = np.pi / 180) -> ConeClassification:
    """Scan every cone on an angular grid and keep those passing the stationarity test at O.

    Single-jump and constant cones are always kept.  A two-jump cone with
    middle phase m is kept when the vertex test holds; the smallest gap among
    kept two-jump cones is compared with the Young opening of phase m.
    """
    if angular_step > np.pi / 180 + 1e-15:
        raise ValueError("angular_step must not exceed pi/180")
    s = np.asarray(sigma, dtype=float)
    n = len(s)
    K = int(round(np.pi / angular_step))
    grid = np.arange(K + 1) * (np.pi / K)
    grid[-1] = np.pi
    out = []
    examined = 0
    for a in grid:
        c = ConePartition(float(a), float(a))
        out.append(RankedCone(c, cone_energy(c, s), c.kind()))
        examined += 1
    c = ConePartition(0.0, np.pi, 0)
    out.append(RankedCone(c, cone_energy(c, s), c.kind()))
    c = ConePartition(0.0, np.pi, 1)
    out.append(RankedCone(c, cone_energy(c, s), c.kind()))
    examined += 2
    min_gap = None
    bound = None
    A1, A2 = np.meshgrid(grid, grid, indexing="ij")
    upper = A1 < A2
    for m in range(2, n):
        s01, s0m, sm1 = _sigma3(s, m)
        force = s0m * unit(A1) + sm1 * unit(A2)
        ok = upper & (np.linalg.norm(force, axis=-1) <= s01 + 1e-12)
        examined += int(upper.sum())
        I, J = np.nonzero(ok)
        for i, j in zip(I, J):
            c = ConePartition(float(grid[i]), float(grid[j]), m)
            out.append(RankedCone(c, cone_energy(c, s), c.kind()))
        gaps = (A2 - A1)[ok & (A1 > 0) & (A2 < np.pi)]
        if gaps.size:
            g = float(gaps.min())
            try:
                b = young_gap(s, m)
            except ValueError:
                b = None
            if b is not None and (bound is None or b < bound):
                bound = b
            min_gap = g if min_gap is None else min(min_gap, g)
    out.sort(key=lambda r: (r.energy, r.cone.alpha1, r.cone.alpha2, -1 if r.cone.middle is None else r.cone.middle))
    return ConeClassification(out, angular_step, examined, min_gap, bound)


# ---------------------------------------------------------------------------
# sharp interfaces


@dataclass
class SharpInterface:
    """Straight segments, each labelled by the pair of phases it separates and its tension."""
    segments: list           # (p, q, (i, j), weight) with p, q as 2-tuples
    junctions: list          # interior junction points
    converged: bool = True

    @property
    def total(self) -> float:
        return float(sum(w * np.hypot(q[0] - p[0], q[1] - p[1]) for p, q, _, w in self.segments))

    def incident_directions(self, point, tol: float = 1e-9) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        dirs = []
        for p, q, _, _ in self.segments:
            p, q = np.asarray(p), np.asarray(q)
            if np.linalg.norm(p - point) < tol and np.linalg.norm(q - point) > tol:
                dirs.append(np.arctan2(q[1] - p[1], q[0] - p[0]))
            elif np.linalg.norm(q - point) < tol and np.linalg.norm(p - point) > tol:
                dirs.append(np.arctan2(p[1] - q[1], p[0] - q[0]))
        return np.sort(np.mod(dirs, 2 * np.pi))

    def incident_angles(self, point, tol: float = 1e-9) -> list:
        """Angles between cyclically consecutive segments leaving ``point``."""
        dirs = self.incident_directions(point, tol)
        if len(dirs) < 2:
            return []
        return [float(a) for a in np.diff(np.concatenate([dirs, [dirs[0] + 2 * np.pi]]))]

    def length_with_junctions(self, junctions) -> float:
        """Total after moving each listed junction to a new position (segments follow)."""
        moved = {tuple(old): np.asarray(new, dtype=float) for old, new in zip(self.junctions, junctions)}
        total = 0.0
        for p, q, _, w in self.segments:
            pp = moved.get(tuple(p), np.asarray(p))
            qq = moved.get(tuple(q), np.asarray(q))
            total += w * float(np.linalg.norm(qq - pp))
        return total

    def to_json(self) -> str:
        data = {
            "segments": [{"from": [float(v) for v in p], "to": [float(v) for v in q],
                          "phases": [int(i) for i in pr], "sigma": float(w)} for p, q, pr, w in self.segments],
            "junctions": [[float(v) for v in j] for j in self.junctions],
            "total": self.total,
            "converged": self.converged,
        }
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SharpInterface":
        data = json.loads(text)
        segs = [(tuple(s["from"]), tuple(s["to"]), tuple(s["phases"]), s["sigma"]) for s in data["segments"]]
        return cls(segs, [tuple(j) for j in data["junctions"]], data.get("converged", True))


# ---------------------------------------------------------------------------
# Steiner trees with fixed topology


def _tree_length(X, terminals, edges, weights):
    pts = np.vstack([terminals, X.reshape(-1, 2)]) if X.size else terminals
    return float(sum(w * np.linalg.norm(pts[a] - pts[b]) for (a, b), w in zip(edges, weights)))


def optimize_tree(terminals: np.ndarray, n_junctions: int, edges: Sequence, weights: Sequence,
                  x0: Optional[np.ndarray] = None, tol: float = 1e-12, max_iter: int = 20000):
    """Minimize the weighted length over junction positions (convex in the junctions).

    Node indices below len(terminals) are terminals, the rest junctions.
    A Weiszfeld-type fixed point iteration does most of the work and a
    Nelder-Mead polish handles junctions that collapse onto a terminal.
    Returns (junctions, length, converged).
    """
    terminals = np.asarray(terminals, dtype=float)
    t = len(terminals)
    if n_junctions == 0:
        return np.zeros((0, 2)), _tree_length(np.zeros(0), terminals, edges, weights), True
    X = (np.tile(terminals.mean(axis=0), (n_junctions, 1)) if x0 is None else np.array(x0, dtype=float))
    X = X + 1e-3 * np.arange(1, n_junctions + 1)[:, None]
    converged = False
    prev = np.inf
    for _ in range(max_iter):
        pts = np.vstack([terminals, X])
        num = np.zeros_like(X)
        den = np.zeros(n_junctions)
        for (a, b), w in zip(edges, weights):
            d = max(np.linalg.norm(pts[a] - pts[b]), 1e-14)
            if a >= t:
                num[a - t] += w * pts[b] / d
                den[a - t] += w / d
            if b >= t:
                num[b - t] += w * pts[a] / d
                den[b - t] += w / d
        X = num / den[:, None]
        cur = _tree_length(X, terminals, edges, weights)
        if prev - cur < tol * max(cur, 1.0):
            converged = True
            break
        prev = cur
    res = minimize(lambda x: _tree_length(x, terminals, edges, weights), X.ravel(), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000 * n_junctions})
    if res.fun <= cur:
        X = res.x.reshape(-1, 2)
        cur = float(res.fun)
    return X, cur, converged or bool(res.success)


def _full_binary_trees(leaves: tuple):
    """Planar full binary trees over an ordered tuple of leaves, as nested pairs."""
    if len(leaves) == 1:
        yield leaves[0]
        return
    for k in range(1, len(leaves)):
        for left in _full_binary_trees(leaves[:k]):
            for right in _full_binary_trees(leaves[k:]):
                yield (left, right)


def unrooted_topologies(n: int):
    """Planar trivalent trees with n leaves 0..n-1 on a circle; yields (n_junctions, edges).

    Leaf n-1 serves as the root, joined to a planar binary tree over the
    other leaves; each planar unrooted tree appears exactly once.
    """
    if n == 2:
        yield 0, [(0, 1)]
        return
    for tree in _full_binary_trees(tuple(range(n - 1))):
        edges = []
        counter = [n]

        def build(node):
            if isinstance(node, int):
                return node
            a = build(node[0])
            b = build(node[1])
            me = counter[0]
            counter[0] += 1
            edges.append((me, a))
            edges.append((me, b))
            return me

        top = build(tree)
        edges.append((top, n - 1))
        yield counter[0] - n, edges


def _noncrossing_partitions(items: list):
    """Non-crossing set partitions of a cyclically ordered list into blocks of size >= 2."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for r in range(1, len(rest) + 1):
        for combo in itertools.combinations(range(len(rest)), r):
            block = [first] + [rest[c] for c in combo]
            # the gaps between consecutive block members are partitioned independently
            gaps = []
            prev = -1
            for c in list(combo) + [len(rest)]:
                gaps.append(rest[prev + 1:c])
                prev = c
            for parts in itertools.product(*[list(_noncrossing_partitions(g)) for g in gaps]):
                yield [block] + [b for part in parts for b in part]


@dataclass
class PartitionSearchResult:
    interface: SharpInterface
    value: float
    converged: bool
    candidates: int
    terminals: list
    labels: list

    def to_dict(self) -> dict:
        return {"value": self.value, "converged": self.converged, "candidates": self.candidates,
                "interface": json.loads(self.interface.to_json())}


def _boundary_cycle(arcs):
    """Terminals and boundary pieces going counter-clockwise from (1, 0).

    Returns (points, kinds, labels) where labels[k] is the label of the
    boundary piece from terminal k to terminal k + 1.
    """
    arcs = sorted(arcs)
    if abs(arcs[0][0]) > 1e-12 or abs(arcs[-1][1] - np.pi) > 1e-12:
        raise ValueError("arc labels must cover [0, pi]")
    for (s0, e0, _), (s1, e1, _) in zip(arcs[:-1], arcs[1:]):
        if abs(e0 - s1) > 1e-12:
            raise ValueError("arc labels must be contiguous")
    # merge equal neighbors
    merged = [list(arcs[0])]
    for s0, e0, lab in arcs[1:]:
        if lab == merged[-1][2]:
            merged[-1][1] = e0
        else:
            merged.append([s0, e0, lab])
    pieces = []   # (start point, start kind, label of piece)
    pieces.append(((1.0, 0.0), "corner", merged[0][2]))
    for s0, e0, lab in merged[1:]:
        pieces.append((tuple(unit(s0)), "jump", lab))
    pieces.append(((-1.0, 0.0), "corner", 1))
    pieces.append(((0.0, 0.0), "origin", 0))
    return pieces


def half_disk_partition_search(arcs, sigma, boundary_distance=None,
                               max_terminals: int = 8) -> PartitionSearchResult:
    """Least weighted length network compatible with arc labels on the unit half disk.

    ``arcs`` lists (theta_start, theta_end, well) covering [0, pi].  The
    candidate class consists of straight-segment forests joining the label
    changes on the boundary (arc jumps, O and the corners (+-1, 0) when the
    arc label there differs from the flat data) through trivalent interior
    junctions, such that every face sees a single label on its boundary.
    A matched corner is never an endpoint: any segment ending there would
    separate two faces with the same label.  Segments lying on the flat
    boundary are priced with ``boundary_distance``.
    """
    s = np.asarray(sigma, dtype=float)
    d = s if boundary_distance is None else np.asarray(boundary_distance, dtype=float)
    pieces = _boundary_cycle(arcs)
    n = len(pieces)
    labels = [pc[2] for pc in pieces]
    active = [k for k in range(n) if labels[k - 1] != labels[k]]
    if len(active) > max_terminals:
        raise ValueError(f"{len(active)} terminals exceed max_terminals={max_terminals}")
    m = len(active)
    # boundary piece j runs from terminal active[j] to active[j + 1]
    seg_labels = [labels[k] for k in active]
    pts = np.array([pieces[k][0] for k in active])
    best = None
    count = 0
    for groups in _noncrossing_partitions(list(range(m))):
        face = list(range(m))

        def find(x):
            while face[x] != x:
                face[x] = face[face[x]]
                x = face[x]
            return x

        for g in groups:
            for u_, v_ in zip(g, g[1:] + g[:1]):
                face[find(u_)] = find((v_ - 1) % m)
        if not all(seg_labels[find(j)] == seg_labels[j] for j in range(m)):
            continue
        cand = _forest(groups, pts, seg_labels, find, s, d)
        count += 1
        if best is None or cand.total < best.total - 1e-13:
            best = cand
    if best is None:
        raise ValueError("no admissible network for the given labels")
    return PartitionSearchResult(best, best.total, best.converged, count, [tuple(p) for p in pts], seg_labels)


def _forest(groups, pts, seg_labels, find, s, d) -> SharpInterface:
    m = len(pts)
    segments, junctions = [], []
    converged = True
    for g in groups:
        g = list(g)
        tpts = pts[g]
        best = None
        for nj, edges in unrooted_topologies(len(g)):
            wts, pairs = [], []
            for a, b in edges:
                below = _leaves_below(edges, a, b, len(g))
                fa = seg_labels[find(g[max(below)])]
                fb = seg_labels[find((g[min(below)] - 1) % m)]
                on_axis = a < len(g) and b < len(g) and abs(tpts[a][1]) < 1e-12 and abs(tpts[b][1]) < 1e-12
                wts.append(float(d[fa, fb] if on_axis else s[fa, fb]))
                pairs.append((min(fa, fb), max(fa, fb)))
            X, length, conv = optimize_tree(tpts, nj, edges, wts)
            if best is None or length < best[1] - 1e-13:
                best = (X, length, conv, edges, wts, pairs)
        X, length, conv, edges, wts, pairs = best
        converged &= conv
        allp = np.vstack([tpts, X]) if len(X) else tpts
        for (a, b), w, pair in zip(edges, wts, pairs):
            pa, pb = allp[a], allp[b]
            if np.linalg.norm(pa - pb) < 1e-12:
                continue
            segments.append((tuple(map(float, pa)), tuple(map(float, pb)), pair, w))
        for x in X:
            if min(np.linalg.norm(tpts - x, axis=1)) > 1e-9:
                junctions.append(tuple(map(float, x)))
    return SharpInterface(segments, junctions, converged)


def _leaves_below(edges, a, b, n_leaves):
    """Leaves reachable from b without crossing the edge (a, b)."""
    adj = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    seen = {a, b}
    stack = [b]
    leaves = []
    while stack:
        x = stack.pop()
        if x < n_leaves:
            leaves.append(x)
        for y in adj.get(x, []):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return leaves


# ---------------------------------------------------------------------------
# the junction geometry inside B_R^+


def gamma0(theta13: float, theta32: float, R: float, sigma=None) -> SharpInterface:
    """Interface joining O to the arc points R e(theta13) and R e(theta32).

    Phase 0 lies below theta13, phase 2 between the two angles and phase 1
    above theta32.  When the gap reaches the Young opening of phase 2 the
    network is the two rays from O; otherwise the junction moves into the
    half disk and a third interface, between phases 0 and 1, runs back to O.
    """
    if not 0.0 < theta13 < theta32 < np.pi:
        raise ValueError("need 0 < theta13 < theta32 < pi")
    s = np.ones((3, 3)) - np.eye(3) if sigma is None else np.asarray(sigma, dtype=float)
    s01, s02, s21 = _sigma3(s, 2)
    A = R * unit(theta13)
    B = R * unit(theta32)
    O = np.zeros(2)
    if theta32 - theta13 >= young_gap(s, 2) - 1e-15:
        segs = [(tuple(O), tuple(A), (0, 2), s02), (tuple(O), tuple(B), (1, 2), s21)]
        return SharpInterface(segs, [], True)
    X, _, conv = optimize_tree(np.array([A, B, O]), 1, [(3, 0), (3, 1), (3, 2)], [s02, s21, s01],
                               x0=np.array([0.5 * (A + B) / 2]))
    G = X[0]
    segs = [(tuple(map(float, G)), tuple(A), (0, 2), s02), (tuple(map(float, G)), tuple(B), (1, 2), s21),
            (tuple(map(float, G)), (0.0, 0.0), (0, 1), s01)]
    return SharpInterface(segs, [tuple(map(float, G))], conv)


# ---------------------------------------------------------------------------
# slicing bound


def slicing_lower_bound(y_star, gap: float, R: float, sigma: float):
    """sigma * (R - y + sqrt(R^2 - 4 y R cos(gap) + 4 y^2))."""
    y = np.asarray(y_star, dtype=float)
    if np.any(y < 0) or np.any(y > R):
        raise ValueError("y_star must lie in [0, R]")
    val = sigma * (R - y + np.sqrt(R * R - 4.0 * y * R * np.cos(gap) + 4.0 * y * y))
    return float(val) if np.ndim(val) == 0 else val


def minimize_slicing(gap: float, R: float, sigma: float) -> tuple[float, float]:
    """Exact minimizer over y in [0, R] of the slicing bound.

    The bound is convex in y; its stationary point is
    y = R sin(gap + pi/3) / sqrt(3), clipped to [0, R].
    """
    y = R * np.sin(gap + np.pi / 3.0) / np.sqrt(3.0)
    y = float(min(max(y, 0.0), R))
    if y < 1e-12 * R:
        y = 0.0
    return y, slicing_lower_bound(y, gap, R, sigma)
