"""Nelder-Mead downhill simplex."""

from __future__ import annotations

import numpy as np

from .base import BudgetExhausted, NonFiniteCost, Objective, StoppingRule
from .quasi_newton import _finish
from .trace import RunTrace

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


def nelder_mead(obj: Objective, c0: np.ndarray, scale: float = 0.01,
                stop: StoppingRule | None = None, xtol: float = 0.0,
                max_iter: int = 1_000_000) -> RunTrace:
    """Minimize ``obj.value`` starting from the simplex ``c0, c0 + scale e_i``.

    Vertices with equal cost keep their insertion order (stable sort), so runs
    are reproducible bit for bit.
    """
    stop = stop or StoppingRule(max_evals=1000)
    obj.budget = min(obj.budget, stop.max_evals)
    c0 = np.array(c0, dtype=float)
    n = c0.size
    if n < 1:
        raise ValueError("Nelder-Mead needs at least one parameter")
    try:
        verts = [c0] + [c0 + scale * e for e in np.eye(n)]
        costs = [obj.value(v) for v in verts]
        for _ in range(max_iter):
            order = np.argsort(costs, kind="stable")
            verts = [verts[i] for i in order]
            costs = [costs[i] for i in order]
            spread = costs[-1] - costs[0]
            if spread <= stop.cost_tol * max(1.0, abs(costs[0])) and stop.cost_tol > 0:
                return _finish(obj, "cost_tol")
            if xtol > 0 and max(np.max(np.abs(v - verts[0])) for v in verts[1:]) <= xtol:
                return _finish(obj, "xtol")
            centroid = np.mean(verts[:-1], axis=0)
            worst = verts[-1]
            xr = centroid + REFLECT * (centroid - worst)
            fr = obj.value(xr)
            if costs[0] <= fr < costs[-2]:
                verts[-1], costs[-1] = xr, fr
                continue
            if fr < costs[0]:
                xe = centroid + EXPAND * (xr - centroid)
                fe = obj.value(xe)
                verts[-1], costs[-1] = (xe, fe) if fe < fr else (xr, fr)
                continue
            if fr < costs[-1]:
                xc = centroid + CONTRACT * (xr - centroid)
                fc = obj.value(xc)
                if fc <= fr:
                    verts[-1], costs[-1] = xc, fc
                    continue
            else:
                xc = centroid + CONTRACT * (worst - centroid)
                fc = obj.value(xc)
                if fc < costs[-1]:
                    verts[-1], costs[-1] = xc, fc
                    continue
            for i in range(1, n + 1):
                verts[i] = verts[0] + SHRINK * (verts[i] - verts[0])
                costs[i] = obj.value(verts[i])
        return _finish(obj, "max_iter")
    except BudgetExhausted:
        return _finish(obj, "max_evals")
    except NonFiniteCost:
        return _finish(obj, "non_finite")
