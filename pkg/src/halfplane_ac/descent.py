"""Monotone descent with Barzilai-Borwein steps, Armijo backtracking and optional Newton steps.

Every accepted iterate has energy no larger than its predecessor, so the
energy history is non-increasing by construction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_BACKTRACK = 60


@dataclass
class DescentResult:
    x: np.ndarray
    energy: float
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)   # (energy, residual, step kind)
    stalled: bool = False


def minimize_bb(
    energy: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    residual: Callable[[np.ndarray, np.ndarray], float],
    tol: float,
    max_iter: int,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    precond_apply: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    newton: Optional[Callable[[np.ndarray, np.ndarray], Optional[np.ndarray]]] = None,
    newton_threshold: float = np.inf,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    initial_step: float = 1.0,
    check_finite: Optional[Callable[[np.ndarray], None]] = None,
) -> DescentResult:
    """Minimize ``energy`` from ``x0``.

    ``precond`` solves P z = g and ``precond_apply`` multiplies by P; together
    they turn the BB step into the one for the metric induced by P.
    ``newton`` returns a candidate direction or None; it is tried whenever the
    residual is below ``newton_threshold`` and falls back to the gradient
    direction when it is not a descent direction or fails the line search.
    ``project`` maps an iterate back onto a convex feasible set.
    """
    x = np.array(x0, dtype=float, copy=True)
    if project is not None:
        x = project(x)
    e = float(energy(x))
    g = grad(x)
    res = residual(x, g)
    history = [(e, res, "init")]
    s_prev = y_prev = None
    alpha = initial_step
    it = 0
    stalled = False
    while res >= tol and it < max_iter:
        it += 1
        step_kind = None
        x_new = e_new = None
        if newton is not None and res < newton_threshold and project is None:
            d = newton(x, g)
            if d is not None and np.all(np.isfinite(d)):
                slope = float(np.vdot(g, d))
                if slope < 0:
                    t = 1.0
                    for _ in range(30):
                        cand = x + t * d
                        ec = float(energy(cand))
                        if np.isfinite(ec) and ec <= e + ARMIJO_C * t * slope:
                            x_new, e_new, step_kind = cand, ec, "newton"
                            break
                        t *= 0.5
        if x_new is None:
            pg = precond(g) if precond is not None else g
            if s_prev is not None:
                sy = float(np.vdot(s_prev, y_prev))
                sps = float(np.vdot(s_prev, precond_apply(s_prev) if precond_apply is not None else s_prev))
                alpha = sps / sy if sy > 0 else initial_step
            d = -alpha * pg
            t = 1.0
            for _ in range(MAX_BACKTRACK):
                cand = x + t * d
                if project is not None:
                    cand = project(cand)
                ec = float(energy(cand))
                if np.isfinite(ec) and ec <= e + ARMIJO_C * float(np.vdot(g, cand - x)):
                    x_new, e_new, step_kind = cand, ec, "bb"
                    break
                t *= 0.5
        if x_new is None or e_new > e:
            stalled = True
            logger.debug("line search stalled at iteration %d (residual %.3e)", it, res)
            break
        if check_finite is not None:
            check_finite(x_new)
        g_new = grad(x_new)
        s_prev = x_new - x
        y_prev = g_new - g
        x, e, g = x_new, e_new, g_new
        res = residual(x, g)
        history.append((e, res, step_kind))
    return DescentResult(x=x, energy=e, residual=res, iterations=it, converged=res < tol,
                         history=history, stalled=stalled)
