"""Line searches along a descent direction.

Trial points cost one evaluation each; the slope at a trial point costs one
more and is only requested once sufficient decrease already holds there.
"""

from __future__ import annotations

import math

import numpy as np

from .base import LineSearchSpec, Objective


class LineSearchFailure(Exception):
    pass


def _minimize_cubic(a, fa, ga, b, fb, gb):
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _minimize_quadratic(a, fa, ga, b, fb):
    denom = 2.0 * (fb - fa - ga * (b - a))
    if denom <= 0:
        return None
    return a - ga * (b - a) ** 2 / denom


def line_search(obj: Objective, x: np.ndarray, d: np.ndarray, f0: float, g0: float,
                alpha0: float, opts: LineSearchSpec):
    """Return ``(alpha, f(x + alpha d))``; raise :class:`LineSearchFailure` on no decrease."""
    if g0 >= 0:
        raise LineSearchFailure("not a descent direction")
    if opts.kind == "backtracking-armijo":
        return _armijo(obj, x, d, f0, g0, alpha0, opts)
    return _strong_wolfe(obj, x, d, f0, g0, alpha0, opts)


def _armijo(obj, x, d, f0, g0, alpha, opts):
    for _ in range(opts.max_trials):
        f = obj.value(x + alpha * d)
        if f <= f0 + opts.c1 * alpha * g0:
            return alpha, f
        trial = _minimize_quadratic(0.0, f0, g0, alpha, f)
        alpha = 0.5 * alpha if trial is None else min(max(trial, 0.1 * alpha), 0.5 * alpha)
    raise LineSearchFailure("no sufficient decrease")


def _strong_wolfe(obj, x, d, f0, g0, alpha, opts):
    c1, c2 = opts.c1, opts.c2
    trials = 0

    def phi(a):
        nonlocal trials
        trials += 1
        return obj.value(x + a * d)

    def dphi(a):
        return obj.inner(obj.gradient(x + a * d), d)

    a_prev, f_prev, g_prev = 0.0, f0, g0
    best = (0.0, f0)
    while trials < opts.max_trials:
        f = phi(alpha)
        if f < best[1] and f <= f0 + c1 * alpha * g0:
            best = (alpha, f)
        if f > f0 + c1 * alpha * g0 or (a_prev > 0 and f >= f_prev):
            return _zoom(phi, dphi, f0, g0, a_prev, f_prev, g_prev, alpha, f, opts, lambda: trials, best)
        g = dphi(alpha)
        if abs(g) <= -c2 * g0:
            return alpha, f
        if g >= 0:
            return _zoom(phi, dphi, f0, g0, alpha, f, g, a_prev, f_prev, opts, lambda: trials, best)
        step = _minimize_cubic(a_prev, f_prev, g_prev, alpha, f, g)
        new = 2.0 * alpha if step is None or step <= alpha else min(step, 4.0 * alpha)
        a_prev, f_prev, g_prev = alpha, f, g
        alpha = max(new, 1.1 * alpha)
    if best[0] > 0:
        return best
    raise LineSearchFailure("no sufficient decrease within the trial budget")


def _zoom(phi, dphi, f0, g0, lo, flo, glo, hi, fhi, opts, trials, best):
    c1, c2 = opts.c1, opts.c2
    while trials() < opts.max_trials:
        width = hi - lo
        a = _minimize_quadratic(lo, flo, glo, hi, fhi)
        if a is None or not (min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
            a = lo + 0.5 * width
        f = phi(a)
        if f > f0 + c1 * a * g0 or f >= flo:
            hi, fhi = a, f
            continue
        if f < best[1]:
            best = (a, f)
        g = dphi(a)
        if abs(g) <= -c2 * g0:
            return a, f
        if g * (hi - lo) >= 0:
            hi, fhi = lo, flo
        lo, flo, glo = a, f, g
        if abs(hi - lo) < 1e-14 * max(abs(lo), 1e-300):
            break
    if best[0] > 0:
        return best
    raise LineSearchFailure("zoom failed to find sufficient decrease")
