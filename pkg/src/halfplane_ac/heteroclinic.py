"""One-dimensional connections between wells by direct minimization of the discrete energy.

On nodes eta_0 < ... < eta_n with spacing s the discrete energy is

    J(U) = sum_k |U_{k+1} - U_k|^2 / (2 s) + s * sum_k w_k W(U_k),

with trapezoid weights w_k (1/2 at the two ends).  The unconstrained
problem pins U_0 and U_n to the wells; the constrained problem only asks
the endpoints to stay in closed balls around them.
"""
from __future__ import annotations

import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .descent import minimize_bb
from .potential import MultiWellPotential, hessian_bounds

logger = logging.getLogger(__name__)


class ConvergenceFault(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def discrete_energy(p: MultiWellPotential, U: np.ndarray, step: float) -> float:
    w = np.full(len(U), step)
    w[[0, -1]] *= 0.5
    return float(0.5 * np.sum(np.diff(U, axis=0) ** 2) / step + np.sum(w * p.evaluate(U)))


def _full_gradient(p: MultiWellPotential, U: np.ndarray, step: float) -> np.ndarray:
    dU = np.diff(U, axis=0) / step
    g = np.zeros_like(U)
    g[:-1] -= dU
    g[1:] += dU
    w = np.full(len(U), step)
    w[[0, -1]] *= 0.5
    g += w[:, None] * p.gradient(U)
    return g


def _stiffness(m: int, step: float) -> sp.csr_matrix:
    k = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / step
    return sp.kron(k, sp.eye(2), format="csr")


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    m = len(blocks)
    rows = np.repeat(np.arange(2 * m).reshape(m, 2), 2, axis=1).ravel()
    cols = np.tile(np.arange(2 * m).reshape(m, 2), (1, 2)).ravel()
    return sp.csr_matrix((blocks.reshape(-1), (rows, cols)), shape=(2 * m, 2 * m))


def minimize_pinned(p: MultiWellPotential, U0: np.ndarray, step: float, tol: float = 1e-8,
                    max_iter: int = 5000, c2: Optional[float] = None):
    """Minimize over interior nodes with both endpoints held fixed.

    The residual is the sup-norm of the per-length gradient, i.e. of the
    discrete -U'' + grad W(U).
    """
    U0 = np.array(U0, dtype=float)
    m = len(U0) - 2
    if m < 1:
        raise ValueError("need at least one interior node")
    ends = (U0[0].copy(), U0[-1].copy())
    K = _stiffness(m, step)
    if c2 is None:
        c2 = max(hessian_bounds(p)[1], 1.0)
    P = (K + step * c2 * sp.eye(2 * m)).tocsc()
    Plu = spla.splu(P)

    def assemble(x):
        U = np.empty((m + 2, 2))
        U[0], U[-1] = ends
        U[1:-1] = x.reshape(m, 2)
        return U

    def energy(x):
        return discrete_energy(p, assemble(x), step)

    def grad(x):
        return _full_gradient(p, assemble(x), step)[1:-1].ravel()

    def residual(x, g):
        return float(np.abs(g).max() / step)

    def newton(x, g):
        U = assemble(x)
        H = K + step * _block_diag(p.hessian(U[1:-1]))
        try:
            return spla.spsolve(H.tocsc(), -g)
        except Exception:   # singular Hessian; fall back to the gradient step
            return None

    res = minimize_bb(energy, grad, U0[1:-1].ravel(), residual=residual, tol=tol, max_iter=max_iter,
                      precond=Plu.solve, precond_apply=lambda v: P @ v, newton=newton,
                      newton_threshold=1.0)
    return assemble(res.x), res


@dataclass
class HeteroclinicProfile:
    """Sampled connection from well ``endpoints[0]`` to well ``endpoints[1]``.

    ``eta`` holds the node coordinates; ``center`` is the coordinate where
    |U - a_i| = |U - a_j|.  Calling the profile evaluates U(center + s) by
    cubic interpolation and returns the end wells outside the sampled range.
    """
    eta: np.ndarray
    samples: np.ndarray
    step: float
    endpoints: tuple
    wells: np.ndarray
    energy: float
    translation_gauge: int
    center: float
    seed_energies: list = field(default_factory=list)
    residual: float = float("nan")
    _spline: object = field(default=None, init=False, repr=False)

    @property
    def L(self) -> float:
        return float(0.5 * (self.eta[-1] - self.eta[0]))

    @property
    def left(self) -> np.ndarray:
        return self.wells[self.endpoints[0]]

    @property
    def right(self) -> np.ndarray:
        return self.wells[self.endpoints[1]]

    def _sp(self):
        if self._spline is None:
            self._spline = CubicSpline(self.eta - self.center, self.samples, axis=0)
        return self._spline

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo = self.eta[0] - self.center
        hi = self.eta[-1] - self.center
        out = self._sp()(np.clip(s, lo, hi))
        out = np.where((s < lo)[..., None], self.left, out)
        out = np.where((s > hi)[..., None], self.right, out)
        return out

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo = self.eta[0] - self.center
        hi = self.eta[-1] - self.center
        out = self._sp()(np.clip(s, lo, hi), 1)
        return np.where(((s < lo) | (s > hi))[..., None], 0.0, out)

    def reversed(self) -> "HeteroclinicProfile":
        return HeteroclinicProfile(eta=-self.eta[::-1], samples=self.samples[::-1].copy(), step=self.step,
                                   endpoints=(self.endpoints[1], self.endpoints[0]), wells=self.wells,
                                   energy=self.energy, translation_gauge=len(self.eta) - 1 - self.translation_gauge,
                                   center=-self.center, seed_energies=list(self.seed_energies),
                                   residual=self.residual)

    def equipartition_residual(self, p: MultiWellPotential) -> float:
        U = self.samples
        dU = (U[2:] - U[:-2]) / (2.0 * self.step)
        return float(np.max(np.abs(0.5 * np.sum(dU ** 2, axis=1) - p.evaluate(U[1:-1]))))

    def transition_width(self, fraction: float = 0.01) -> float:
        """Length of the stretch where U stays at least fraction*|a_i - a_j| away from both end wells."""
        gap = float(np.linalg.norm(self.right - self.left))
        far = (np.linalg.norm(self.samples - self.left, axis=1) >= fraction * gap) & \
              (np.linalg.norm(self.samples - self.right, axis=1) >= fraction * gap)
        if not far.any():
            return 0.0
        idx = np.nonzero(far)[0]
        return float(self.eta[idx[-1]] - self.eta[idx[0]])

    def tail(self) -> float:
        return float(max(np.linalg.norm(self.samples[1] - self.left),
                         np.linalg.norm(self.samples[-2] - self.right)))

    def to_csv(self, path) -> None:
        meta = {
            "endpoints": list(self.endpoints),
            "wells": self.wells.tolist(),
            "L": self.L,
            "step": self.step,
            "energy": self.energy,
            "center": self.center,
            "translation_gauge": self.translation_gauge,
        }
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        buf.write("eta,u1,u2\n")
        for e, (a, b) in zip(self.eta, self.samples):
            buf.write(f"{e:.17g},{a:.17g},{b:.17g}\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "HeteroclinicProfile":
        lines = Path(path).read_text().splitlines()
        meta = json.loads(lines[0][2:])
        data = np.loadtxt(lines[2:], delimiter=",", ndmin=2)
        return cls(eta=data[:, 0], samples=data[:, 1:3], step=meta["step"],
                   endpoints=tuple(meta["endpoints"]), wells=np.asarray(meta["wells"]),
                   energy=meta["energy"], translation_gauge=meta["translation_gauge"], center=meta["center"])


def _gauge(U: np.ndarray, eta: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[int, float]:
    f = np.linalg.norm(U - a, axis=1) - np.linalg.norm(U - b, axis=1)
    k = int(np.argmin(np.abs(f)))
    sign = np.nonzero(np.diff(np.sign(f)))[0]
    if len(sign):
        q = int(sign[np.argmin(np.abs(sign - k))])
        center = eta[q] - f[q] * (eta[q + 1] - eta[q]) / (f[q + 1] - f[q])
    else:
        center = eta[k]
    return k, float(center)


def seed_from_polyline(p: MultiWellPotential, polyline: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Reparameterize a phase-plane path so that its speed follows sqrt(2 W)."""
    poly = np.asarray(polyline, dtype=float)
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0])
    poly = poly[keep]
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    if len(poly) < 2:
        return np.repeat(poly[:1], len(eta), axis=0)
    mids = 0.5 * (poly[1:] + poly[:-1])
    speed = np.sqrt(2.0 * p.evaluate(mids))
    floor = 1e-3 * max(float(speed.max()), 1e-12)
    tau = np.concatenate([[0.0], np.cumsum(seg / np.maximum(speed, floor))])
    a, b = poly[0], poly[-1]
    f = np.linalg.norm(poly - a, axis=1) - np.linalg.norm(poly - b, axis=1)
    k = int(np.argmin(np.abs(f)))
    tau = tau - tau[k]
    out = np.stack([np.interp(eta, tau, poly[:, c]) for c in range(2)], axis=1)
    return out


def straight_seed(a, b, eta: np.ndarray, rate: float) -> np.ndarray:
    t = 0.5 * (1.0 + np.tanh(0.5 * rate * eta))
    return (1.0 - t)[:, None] * np.asarray(a) + t[:, None] * np.asarray(b)


def solve_connection(p: MultiWellPotential, i: int, j: int, L: Optional[float] = None,
                     step: Optional[float] = None, seed: Optional[np.ndarray] = None,
                     tol: float = 1e-8, tail_tolerance: float = 1e-5, n_seeds: int = 3,
                     rng_seed: int = 0, max_iter: int = 5000, lattice=None) -> HeteroclinicProfile:
    """Minimizing connection from well i to well j on [-L, L].

    ``seed`` is an optional phase-plane polyline from a_i to a_j (typically a
    lattice geodesic); without one the lattice geodesic is computed when a
    lattice is supplied, otherwise a straight tanh path is used.  Additional
    randomized seeds are solved to detect non-unique minimizers.
    """
    if i == j:
        raise ValueError("solve_connection needs two distinct wells")
    c1, c2, _ = hessian_bounds(p)
    if L is None:
        L = 12.0 / np.sqrt(c1)
    if step is None:
        step = L / 600.0
    if np.exp(-np.sqrt(c1) * L) >= tail_tolerance:
        raise ValueError(f"L={L:g} too short for tail tolerance {tail_tolerance:g} (rate {np.sqrt(c1):.3g})")
    n = int(round(2.0 * L / step))
    eta = np.linspace(-L, L, n + 1)
    step = float(eta[1] - eta[0])
    a, b = p.wells[i], p.wells[j]

    if seed is None and lattice is not None:
        from .phase_metric import metric_distance
        seed = metric_distance(lattice, a, b)[1]
    base = seed_from_polyline(p, seed, eta) if seed is not None else straight_seed(a, b, eta, np.sqrt(c1))
    base[0], base[-1] = a, b

    rng = np.random.default_rng(rng_seed)
    results = []
    for k in range(max(1, n_seeds)):
        U0 = base.copy()
        if k > 0:
            shift = rng.uniform(-0.1, 0.1) * L
            U0 = np.stack([np.interp(eta - shift, eta, base[:, c]) for c in range(2)], axis=1)
            bump = np.sin(np.pi * (eta + L) / (2 * L))[:, None]
            U0 = U0 + 0.05 * np.linalg.norm(b - a) * bump * rng.normal(size=2)
            U0[0], U0[-1] = a, b
        U, res = minimize_pinned(p, U0, step, tol=tol, max_iter=max_iter, c2=c2)
        if not res.converged:
            if k == 0:
                raise ConvergenceFault(f"connection {i}->{j} did not converge", res.residual)
            logger.warning("randomized seed %d did not converge (residual %.3e)", k, res.residual)
            continue
        results.append((res.energy, U, res))
    energies = [r[0] for r in results]
    if len(energies) > 1:
        spread = (max(energies) - min(energies)) / min(energies)
        if spread > 0.01:
            warnings.warn(f"connection {i}->{j}: seed energies spread {spread:.2%}; "
                          "the minimizing connection may not be unique", RuntimeWarning)
    energy, U, res = results[0]
    gauge, center = _gauge(U, eta, a, b)
    prof = HeteroclinicProfile(eta=eta, samples=U, step=step, endpoints=(i, j), wells=p.wells.copy(),
                               energy=energy, translation_gauge=gauge, center=center,
                               seed_energies=energies, residual=res.residual)
    if prof.tail() > tail_tolerance:
        logger.warning("connection %d->%d: tail %.2e exceeds tolerance %.1e", i, j, prof.tail(), tail_tolerance)
    return prof


def profile_on_grid(p: MultiWellPotential, i: int, j: int, step: float, L: float, **kw) -> HeteroclinicProfile:
    """Connection whose node spacing equals ``step`` exactly and whose nodes include eta = 0.

    Used to compare 2D fields against the 1D minimizer of the same
    discretization.
    """
    n = int(np.ceil(L / step))
    tol = kw.pop("tol", 1e-8)
    # seeds are compared on a short interval; the tails are then padded with
    # the end wells and Newton finishes on the full interval
    c1 = hessian_bounds(p)[0]
    n0 = min(n, int(np.ceil(16.0 / np.sqrt(c1) / step)))
    prof = solve_connection(p, i, j, L=n0 * step, step=step, tol=max(tol, 1e-9), **kw)
    pad = n - n0
    U = np.concatenate([np.repeat(prof.samples[:1], pad, axis=0), prof.samples,
                        np.repeat(prof.samples[-1:], pad, axis=0)])
    U = _pin_center(p, U, step, n, tol=tol)
    eta = step * np.arange(-n, n + 1, dtype=float)
    res = float(np.abs(_full_gradient(p, U, step)[1:-1]).max() / step)
    return HeteroclinicProfile(eta=eta, samples=U, step=step, endpoints=prof.endpoints,
                               wells=prof.wells, energy=discrete_energy(p, U, step), translation_gauge=n,
                               center=0.0, seed_energies=prof.seed_energies, residual=res)


def _pin_center(p: MultiWellPotential, U: np.ndarray, step: float, node: int, tol: float,
                max_iter: int = 50) -> np.ndarray:
    """Re-solve with U[node] restricted to the bisector of the end wells.

    On a long interval translations of the connection cost almost nothing,
    so the unconstrained solve leaves the center wherever the iteration
    stopped.  Pinning the gauge to a node makes the profile reproducible and
    exactly symmetric when the potential is.
    """
    a, b = U[0], U[-1]
    mid = 0.5 * (a + b)
    t = np.array([-(b - a)[1], (b - a)[0]]) / np.linalg.norm(b - a)
    m = len(U) - 2
    c = node - 1
    cols = np.arange(2 * m)
    keep = (cols // 2) != c
    rows = np.concatenate([cols[keep], [2 * c, 2 * c + 1]])
    red = np.concatenate([np.cumsum(keep)[keep] - 1, [2 * m - 2, 2 * m - 2]])
    vals = np.concatenate([np.ones(int(keep.sum())), t])
    B = sp.csr_matrix((vals, (rows, red)), shape=(2 * m, 2 * m - 1))
    K = _stiffness(m, step)
    U = U.copy()
    U[node] = mid + np.dot(U[node] - mid, t) * t

    def energy(V):
        return discrete_energy(p, V, step)

    for _ in range(max_iter):
        g = B.T @ _full_gradient(p, U, step)[1:-1].ravel()
        if np.abs(g).max() / step < tol:
            break
        H = B.T @ (K + step * _block_diag(p.hessian(U[1:-1]))) @ B
        d = B @ spla.spsolve(H.tocsc(), -g)
        e0 = energy(U)
        s = 1.0
        for _ in range(30):
            V = U.copy()
            V[1:-1] += s * d.reshape(m, 2)
            if energy(V) <= e0 + 1e-4 * s * float(g @ (B.T @ d)):
                break
            s *= 0.5
        U = V
    return U


# ---------------------------------------------------------------------------
# endpoint-constrained energy


@dataclass
class ConstrainedResult:
    value: float
    path: np.ndarray
    step: float
    interval: tuple
    endpoints: tuple
    iterations: int


def _project_ball(x, center, radius):
    d = x - center
    r = float(np.hypot(*d))
    return x if r <= radius else center + d * (radius / r)


def _constrained_fixed(p, i, j, delta, T, n, U_init, c2, tol=1e-9, max_iter=400):
    """Projected BB descent over the two endpoints; interior solved exactly for each endpoint pair."""
    a, b = p.wells[i], p.wells[j]
    step = T / n
    state = {"U": np.array(U_init, dtype=float)}

    def inner(x):
        U0 = state["U"].copy()
        U0[0], U0[-1] = x[:2], x[2:]
        U, _ = minimize_pinned(p, U0, step, tol=1e-10, max_iter=2000, c2=c2)
        state["U"] = U
        return U

    cache = {}

    def solve(x):
        key = x.tobytes()
        if key not in cache:
            U = inner(x)
            cache.clear()
            cache[key] = (discrete_energy(p, U, step), U)
        return cache[key]

    def energy(x):
        return solve(x)[0]

    def grad(x):
        U = solve(x)[1]
        g = _full_gradient(p, U, step)
        return np.concatenate([g[0], g[-1]])

    def project(x):
        return np.concatenate([_project_ball(x[:2], a, delta), _project_ball(x[2:], b, delta)])

    def residual(x, g):
        tau = step
        return float(np.abs(x - project(x - tau * g)).max() / tau)

    x0 = np.concatenate([U_init[0], U_init[-1]])
    res = minimize_bb(energy, grad, x0, residual=residual, tol=tol, max_iter=max_iter, project=project,
                      initial_step=step)
    val, U = solve(res.x)
    return val, U, res.iterations


def constrained_energy(p: MultiWellPotential, i: int, j: int, delta: float, interval=None,
                       step: float = 0.02, profile: Optional[HeteroclinicProfile] = None,
                       delta_max: float = 0.5) -> ConstrainedResult:
    """Minimum of the discrete energy over paths whose endpoints lie in delta-balls around a_i and a_j.

    With ``interval=None`` the interval length is optimized too, starting
    from the time the connection spends between the two delta-spheres.
    """
    if not 0 < delta < delta_max:
        raise ValueError(f"delta must lie in (0, {delta_max})")
    c1, c2, _ = hessian_bounds(p)
    a, b = p.wells[i], p.wells[j]
    if i == j:
        T = (interval[1] - interval[0]) if interval is not None else 1.0
        n = max(2, int(round(T / step)))
        U = np.repeat(a[None, :], n + 1, axis=0)
        return ConstrainedResult(discrete_energy(p, U, T / n), U, T / n,
                                 tuple(interval) if interval is not None else (0.0, T), (U[0], U[-1]), 0)
    if profile is None:
        profile = solve_connection(p, i, j, step=step, n_seeds=1)
    # time spent by the connection between the two delta-spheres
    da = np.linalg.norm(profile.samples - a, axis=1)
    db = np.linalg.norm(profile.samples - b, axis=1)
    k0 = int(np.nonzero(da >= delta)[0][0])
    k1 = int(np.nonzero(db >= delta)[0][-1])
    s0, s1 = profile.eta[k0], profile.eta[k1]
    transit = max(s1 - s0, 4 * step)

    def run(T):
        n = max(4, int(round(T / step)))
        s = np.linspace(s0, s0 + T, n + 1)
        U_init = profile(s - profile.center)
        U_init[0] = _project_ball(U_init[0], a, delta)
        U_init[-1] = _project_ball(U_init[-1], b, delta)
        val, U, its = _constrained_fixed(p, i, j, delta, T, n, U_init, c2)
        return val, U, T / n, its

    if interval is not None:
        T = float(interval[1] - interval[0])
        if T <= 0:
            raise ValueError("interval must satisfy s- < s+")
        val, U, st, its = run(T)
        return ConstrainedResult(val, U, st, tuple(interval), (U[0], U[-1]), its)

    best = {}

    def objective(T):
        out = run(T)
        best[T] = out
        return out[0]

    opt = minimize_scalar(objective, bounds=(0.4 * transit, 2.5 * transit), method="bounded",
                          options={"xatol": 1e-3 * transit})
    T = min(best, key=lambda t: best[t][0])
    val, U, st, its = best[T]
    logger.debug("constrained energy: optimal interval %.4g (transit %.4g, %d evals)", T, transit, opt.nfev)
    return ConstrainedResult(val, U, st, (0.0, T), (U[0], U[-1]), its)


def fit_quadratic_deficit(deltas, values, sigma: float) -> tuple[float, float]:
    """Least-squares fit of values = sigma - c * delta^2; returns (c, R^2)."""
    x = np.asarray(deltas, dtype=float) ** 2
    y = sigma - np.asarray(values, dtype=float)
    c = float(np.dot(x, y) / np.dot(x, x))
    ss_res = float(np.sum((y - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return c, r2
