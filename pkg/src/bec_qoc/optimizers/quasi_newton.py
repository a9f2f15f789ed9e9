"""Steepest descent and matrix-free L-BFGS with a pluggable inner product."""

from __future__ import annotations

import logging
from collections import deque

import numpy as np

from .base import BudgetExhausted, LineSearchSpec, NonFiniteCost, Objective, StoppingRule
from .linesearch import LineSearchFailure, line_search
from .trace import RunTrace

logger = logging.getLogger(__name__)

CURVATURE_EPS = 1e-12


def _initial_alpha(obj: Objective, d: np.ndarray, initial_step: float | None) -> float:
    if initial_step is None:
        return 1.0
    size = float(np.max(np.abs(d)))
    return initial_step / size if size > 0 else 1.0


def _finish(obj: Objective, status: str) -> RunTrace:
    trace = obj.trace
    trace.status = status
    trace.params["iterations"] = obj.iterations
    if trace.final_control is None and obj.best_x is not None:
        trace.final_control = obj.control_of(obj.best_x)
    return trace


def steepest_descent(obj: Objective, x0: np.ndarray, linesearch: LineSearchSpec | None = None,
                     stop: StoppingRule | None = None, initial_step: float | None = None,
                     max_iter: int = 10_000) -> RunTrace:
    """Iterate ``x <- x - alpha grad J(x)``; the gradient is taken in ``obj.inner``'s space."""
    linesearch = linesearch or LineSearchSpec()
    stop = stop or StoppingRule(max_evals=1000)
    obj.budget = min(obj.budget, stop.max_evals)
    x = np.array(x0, dtype=float)
    alpha_prev = None
    try:
        f = obj.value(x)
        for obj.iterations in range(max_iter):
            g = obj.gradient(x)
            gnorm = obj.norm(g)
            if gnorm <= stop.grad_tol or gnorm == 0.0:
                return _finish(obj, "converged")
            d = -g
            slope = obj.inner(g, d)
            alpha0 = _initial_alpha(obj, d, initial_step) if alpha_prev is None else 2.0 * alpha_prev
            try:
                alpha, f_new = line_search(obj, x, d, f, slope, alpha0, linesearch)
            except LineSearchFailure as exc:
                logger.debug("steepest descent stopped: %s", exc)
                return _finish(obj, "line_search_failed")
            x = x + alpha * d
            alpha_prev = alpha
            if stop.cost_tol > 0 and f - f_new <= stop.cost_tol * max(1.0, abs(f)):
                return _finish(obj, "cost_tol")
            f = f_new
        return _finish(obj, "max_iter")
    except BudgetExhausted:
        return _finish(obj, "max_evals")
    except NonFiniteCost:
        return _finish(obj, "non_finite")


def two_loop(g: np.ndarray, pairs, inner) -> np.ndarray:
    """Apply the L-BFGS inverse-Hessian estimate to ``g`` using ``inner`` throughout."""
    q = np.array(g, dtype=float)
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * inner(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= inner(s, y) / inner(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * inner(y, q)
        q += (a - b) * s
    return q


def lbfgs(obj: Objective, x0: np.ndarray, memory: int = 10, linesearch: LineSearchSpec | None = None,
          stop: StoppingRule | None = None, initial_step: float | None = None,
          max_iter: int = 10_000) -> RunTrace:
    """Limited-memory BFGS.

    Parameters
    ----------
    obj
        Objective whose ``inner`` defines the geometry (H1 for sampled
        controls, Euclidean for coefficients).  The gradient returned by
        ``obj.gradient`` must be the Riesz representer in that geometry.
    memory
        Number of stored curvature pairs.
    initial_step
        Largest absolute change of any component on the very first step (and
        after a memory reset).  ``None`` tries the unit step.
    """
    linesearch = linesearch or LineSearchSpec()
    stop = stop or StoppingRule(max_evals=1000)
    obj.budget = min(obj.budget, stop.max_evals)
    inner = obj.inner
    pairs: deque = deque(maxlen=memory)
    x = np.array(x0, dtype=float)
    try:
        f = obj.value(x)
        g = obj.gradient(x)
        for obj.iterations in range(max_iter):
            gnorm = obj.norm(g)
            if gnorm <= stop.grad_tol or gnorm == 0.0:
                return _finish(obj, "converged")
            d = -two_loop(g, pairs, inner)
            slope = inner(g, d)
            if not slope < 0:
                pairs.clear()
                d = -g
                slope = inner(g, d)
            alpha0 = 1.0 if pairs else _initial_alpha(obj, d, initial_step)
            try:
                alpha, f_new = line_search(obj, x, d, f, slope, alpha0, linesearch)
            except LineSearchFailure as exc:
                if not pairs:
                    logger.debug("lbfgs stopped: %s", exc)
                    return _finish(obj, "line_search_failed")
                pairs.clear()
                continue
            x_new = x + alpha * d
            g_new = obj.gradient(x_new)
            s, y = x_new - x, g_new - g
            sy = inner(s, y)
            if sy > CURVATURE_EPS:
                pairs.append((s, y, 1.0 / sy))
            decrease = f - f_new
            x, f, g = x_new, f_new, g_new
            if stop.cost_tol > 0 and decrease <= stop.cost_tol * max(1.0, abs(f)):
                return _finish(obj, "cost_tol")
        return _finish(obj, "max_iter")
    except BudgetExhausted:
        return _finish(obj, "max_evals")
    except NonFiniteCost:
        return _finish(obj, "non_finite")


def bfgs(obj: Objective, x0: np.ndarray, linesearch: LineSearchSpec | None = None,
         stop: StoppingRule | None = None, initial_step: float | None = None,
         max_iter: int = 10_000) -> RunTrace:
    """Dense BFGS for small Euclidean problems (coefficient spaces).

    The inverse Hessian starts as the identity, is rescaled by ``s.y / y.y``
    after the first accepted step, and skips updates with ``s.y <= 1e-12``.
    """
    linesearch = linesearch or LineSearchSpec()
    stop = stop or StoppingRule(max_evals=1000)
    obj.budget = min(obj.budget, stop.max_evals)
    x = np.array(x0, dtype=float)
    n = x.size
    H = np.eye(n)
    fresh = True
    try:
        f = obj.value(x)
        g = obj.gradient(x)
        for obj.iterations in range(max_iter):
            gnorm = float(np.linalg.norm(g))
            if gnorm <= stop.grad_tol or gnorm == 0.0:
                return _finish(obj, "converged")
            d = -H @ g
            slope = float(g @ d)
            if not slope < 0:
                H, fresh = np.eye(n), True
                d, slope = -g, -float(g @ g)
            alpha0 = _initial_alpha(obj, d, initial_step) if fresh else 1.0
            try:
                alpha, f_new = line_search(obj, x, d, f, slope, alpha0, linesearch)
            except LineSearchFailure as exc:
                if fresh:
                    logger.debug("bfgs stopped: %s", exc)
                    return _finish(obj, "line_search_failed")
                H, fresh = np.eye(n), True
                continue
            x_new = x + alpha * d
            g_new = obj.gradient(x_new)
            s, y = x_new - x, g_new - g
            sy = float(s @ y)
            if sy > CURVATURE_EPS:
                if fresh:
                    H = np.eye(n) * (sy / float(y @ y))
                    fresh = False
                rho = 1.0 / sy
                Hy = H @ y
                H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            decrease = f - f_new
            x, f, g = x_new, f_new, g_new
            if stop.cost_tol > 0 and decrease <= stop.cost_tol * max(1.0, abs(f)):
                return _finish(obj, "cost_tol")
        return _finish(obj, "max_iter")
    except BudgetExhausted:
        return _finish(obj, "max_evals")
    except NonFiniteCost:
        return _finish(obj, "non_finite")
