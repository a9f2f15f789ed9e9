"""Shared optimizer plumbing: stopping rules, line-search settings, objectives.

An :class:`Objective` exposes ``value`` and ``gradient`` and does its own
evaluation bookkeeping.  Every value is one equation-of-motion solve and every
gradient is one more (the adjoint), reusing the forward trajectory of the most
recent value calls.  The objective refuses to start a solve once the budget is
spent by raising :class:`BudgetExhausted`, so drivers never overrun it.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .trace import RunTrace


class BudgetExhausted(Exception):
    """Raised when an evaluation is requested after the budget is used up."""


class NonFiniteCost(Exception):
    pass


@dataclass(frozen=True)
class StoppingRule:
    max_evals: int | float = math.inf
    grad_tol: float = 0.0
    cost_tol: float = 0.0

    def __post_init__(self):
        if math.isinf(self.max_evals) and self.grad_tol <= 0 and self.cost_tol <= 0:
            raise ValueError("at least one stopping criterion must be finite")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")


@dataclass(frozen=True)
class LineSearchSpec:
    kind: str = "strong-wolfe"
    c1: float = 1e-4
    c2: float = 0.9
    max_trials: int = 20

    def __post_init__(self):
        if self.kind not in ("strong-wolfe", "backtracking-armijo"):
            raise ValueError(f"unknown line search {self.kind!r}")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


class Objective:
    """Base class; subclasses implement ``_evaluate`` and ``_gradient``.

    ``_evaluate(x)`` returns ``(cost, fidelity, state, n_evals)`` where
    ``state`` is whatever ``_gradient`` needs later.
    """

    cache_size = 8

    def __init__(self, trace: RunTrace, budget: int | float = math.inf,
                 inner: Callable[[np.ndarray, np.ndarray], float] = euclidean):
        self.trace = trace
        self.budget = budget
        self.inner = inner
        self.evaluations = 0
        self.iterations = 0
        self.best_x: np.ndarray | None = None
        self.best_cost = math.inf
        self._cache: OrderedDict[bytes, tuple] = OrderedDict()

    def _check_budget(self):
        if self.evaluations >= self.budget:
            raise BudgetExhausted

    def _lookup(self, x):
        return self._cache.get(np.ascontiguousarray(x, dtype=float).tobytes())

    def value(self, x: np.ndarray) -> float:
        hit = self._lookup(x)
        if hit is not None:
            return hit[0]
        self._check_budget()
        cost, fid, state, n = self._evaluate(np.asarray(x, dtype=float))
        self.evaluations += n
        if not math.isfinite(cost):
            raise NonFiniteCost(f"non-finite cost at evaluation {self.evaluations}")
        self.trace.observe(self.evaluations, cost, fid, self.control_of(x))
        if cost < self.best_cost:
            self.best_cost, self.best_x = cost, np.array(x, dtype=float)
        key = np.ascontiguousarray(x, dtype=float).tobytes()
        self._cache[key] = (cost, state, None)
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return cost

    def gradient(self, x: np.ndarray) -> np.ndarray:
        self.value(x)
        key = np.ascontiguousarray(x, dtype=float).tobytes()
        cost, state, grad = self._cache[key]
        if grad is None:
            self._check_budget()
            grad, n = self._gradient(np.asarray(x, dtype=float), state)
            self.evaluations += n
            self._cache[key] = (cost, state, grad)
        return grad

    def norm(self, g: np.ndarray) -> float:
        return math.sqrt(max(self.inner(g, g), 0.0))

    def control_of(self, x: np.ndarray) -> np.ndarray:
        return x

    def _evaluate(self, x):
        raise NotImplementedError

    def _gradient(self, x, state):
        raise NotImplementedError


class FunctionObjective(Objective):
    """Plain callables; each ``f`` and each ``grad`` call is one evaluation."""

    def __init__(self, f, grad=None, trace: RunTrace | None = None, budget=math.inf,
                 inner=euclidean):
        super().__init__(trace or RunTrace("function"), budget, inner)
        self.f = f
        self.grad = grad

    def _evaluate(self, x):
        return float(self.f(x)), math.nan, None, 1

    def _gradient(self, x, state):
        if self.grad is None:
            raise TypeError("objective has no gradient")
        return np.asarray(self.grad(x), dtype=float), 1
