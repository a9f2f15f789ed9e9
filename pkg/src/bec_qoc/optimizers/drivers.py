"""Algorithm drivers for the condensate problem.

Every driver takes a :class:`~bec_qoc.objective.ControlProblem`, a starting
control sampled on the time grid and a :class:`StoppingRule`, and returns a
:class:`RunTrace` whose evaluation counts follow the solver accounting: one per
forward solve, one per adjoint solve, ``1 + M`` per forward-sensitivity
(GOAT) gradient.
"""

from __future__ import annotations

import math

import numpy as np

from ..controls import BasisSpec, make_basis
from ..objective import ChoppedParametrization, ControlProblem, goat_gradient, h1_inner, h1_riesz
from .base import LineSearchSpec, Objective, StoppingRule
from .quasi_newton import bfgs, lbfgs, steepest_descent
from .simplex import nelder_mead
from .trace import RunTrace

GRAPE_INITIAL_STEP = 0.02  # um, largest change of the first GRAPE step
GROUP_INITIAL_STEP = 0.02  # um, largest coefficient change of the first GROUP step
NM_SCALE = 0.01  # um, initial simplex displacement per axis


class GrapeObjective(Objective):
    """Cost of the sampled control itself; gradients in H1 or plain l2."""

    def __init__(self, problem: ControlProblem, trace: RunTrace, space: str = "h1", budget=math.inf):
        dt = problem.dt
        if space == "h1":
            inner = lambda a, b: h1_inner(a, b, dt)  # noqa: E731
        elif space == "l2":
            inner = lambda a, b: float(np.dot(a, b))  # noqa: E731
        else:
            raise ValueError(f"unknown gradient space {space!r}")
        super().__init__(trace, budget, inner)
        self.problem = problem
        self.space = space

    def _evaluate(self, u):
        fwd = self.problem.forward(u, store=True)
        return fwd.cost.total, fwd.cost.fidelity, fwd, 1

    def _gradient(self, u, fwd):
        e = self.problem.gradient_u(fwd)
        if self.space == "h1":
            return h1_riesz(e, self.problem.dt), 1
        e = e.copy()
        e[[0, -1]] = 0.0  # endpoints stay pinned
        return e, 1


class ChoppedObjective(Objective):
    """Cost as a function of chopped-basis coefficients (Euclidean geometry)."""

    def __init__(self, par: ChoppedParametrization, trace: RunTrace, budget=math.inf,
                 backend: str = "adjoint"):
        super().__init__(trace, budget)
        if backend not in ("adjoint", "goat"):
            raise ValueError(f"unknown gradient backend {backend!r}")
        self.par = par
        self.backend = backend

    def control_of(self, c):
        return self.par.control(c)

    def _evaluate(self, c):
        fwd = self.par.problem.forward(self.par.control(c), store=self.backend == "adjoint")
        return fwd.cost.total, fwd.cost.fidelity, fwd, 1

    def _gradient(self, c, fwd):
        if self.backend == "goat":
            p = self.par
            grad = goat_gradient(c, p.basis, p.shape, p.u0, p.problem)
            return np.asarray(grad), 1 + p.size
        return self.par.gradient(fwd), 1


def superiteration_seed(seed: int | None, j: int) -> int:
    """Basis seed of superiteration ``j`` (0-based) for a run seeded with ``seed``."""
    entropy = 0 if seed is None else int(seed)
    return int(np.random.SeedSequence([entropy, j]).generate_state(1)[0])


def grape(problem: ControlProblem, u_init: np.ndarray, stop: StoppingRule, *, method: str = "lbfgs",
          space: str = "h1", memory: int = 10, linesearch: LineSearchSpec | None = None,
          initial_step: float | None = GRAPE_INITIAL_STEP, seed: int | None = None) -> RunTrace:
    trace = RunTrace("grape", seed, {"method": method, "space": space})
    obj = GrapeObjective(problem, trace, space, stop.max_evals)
    if method == "lbfgs":
        return lbfgs(obj, u_init, memory, linesearch, stop, initial_step)
    if method == "steepest":
        return steepest_descent(obj, u_init, linesearch, stop, initial_step)
    raise ValueError(f"unknown GRAPE method {method!r}")


def group(problem: ControlProblem, u_init: np.ndarray, basis: BasisSpec, stop: StoppingRule, *,
          method: str = "bfgs", memory: int = 10, linesearch: LineSearchSpec | None = None,
          initial_step: float | None = GROUP_INITIAL_STEP, backend: str = "adjoint",
          seed: int | None = None, c0: np.ndarray | None = None) -> RunTrace:
    trace = RunTrace("group", seed, {"M": basis.size, "basis": basis.kind, "method": method})
    par = ChoppedParametrization(problem, basis, u_init)
    obj = ChoppedObjective(par, trace, stop.max_evals, backend)
    c0 = np.zeros(basis.size) if c0 is None else c0
    return _coefficient_search(obj, c0, method, memory, linesearch, stop, initial_step)


def _coefficient_search(obj, c0, method, memory, linesearch, stop, initial_step):
    if method == "bfgs":
        return bfgs(obj, c0, linesearch, stop, initial_step)
    if method == "lbfgs":
        return lbfgs(obj, c0, memory, linesearch, stop, initial_step)
    raise ValueError(f"unknown coefficient-space method {method!r}")


def nm_crab(problem: ControlProblem, u_init: np.ndarray, basis: BasisSpec, stop: StoppingRule, *,
            scale: float = NM_SCALE, seed: int | None = None) -> RunTrace:
    trace = RunTrace("nm-crab", seed, {"M": basis.size, "basis": basis.kind})
    par = ChoppedParametrization(problem, basis, u_init)
    obj = ChoppedObjective(par, trace, stop.max_evals)
    return nelder_mead(obj, np.zeros(basis.size), scale, stop)


def _dressed(name, problem, u_start, M, superiterations, stop, seed, inner_run):
    """Shared superiteration loop: each round redraws a CRAB basis around the incumbent."""
    if superiterations < 1:
        raise ValueError("need at least one superiteration")
    trace = RunTrace(name, seed, {"M": M, "superiterations": superiterations})
    incumbent = np.array(u_start, dtype=float)
    used = 0
    for j in range(superiterations):
        if math.isinf(stop.max_evals):
            budget = math.inf
        else:
            budget = used + (stop.max_evals - used) // (superiterations - j)
        if budget <= used:
            continue
        basis = make_basis("crab", M, superiteration_seed(seed, j))
        par = ChoppedParametrization(problem, basis, incumbent)
        obj = ChoppedObjective(par, trace, budget)
        obj.evaluations = used
        inner_run(obj, np.zeros(M))
        used = obj.evaluations
        if obj.best_x is not None:
            incumbent = par.control(obj.best_x)
    trace.final_control = incumbent
    trace.status = "done"
    trace.params["evaluations"] = used
    return trace


def dgroup(problem: ControlProblem, u_start: np.ndarray, M: int, superiterations: int,
           stop: StoppingRule, *, seed: int | None = None, method: str = "bfgs", memory: int = 10,
           linesearch: LineSearchSpec | None = None,
           initial_step: float | None = GROUP_INITIAL_STEP) -> RunTrace:
    """GROUP with dressing: the budget is split evenly across superiterations."""
    def inner_run(obj, c0):
        _coefficient_search(obj, c0, method, memory, linesearch,
                            StoppingRule(obj.budget, stop.grad_tol, stop.cost_tol), initial_step)
    return _dressed("dgroup", problem, u_start, M, superiterations, stop, seed, inner_run)


def nm_dcrab(problem: ControlProblem, u_start: np.ndarray, M: int, superiterations: int,
             stop: StoppingRule, *, seed: int | None = None, scale: float = NM_SCALE) -> RunTrace:
    def inner_run(obj, c0):
        nelder_mead(obj, c0, scale, StoppingRule(obj.budget, stop.grad_tol, stop.cost_tol))
    return _dressed("nm-dcrab", problem, u_start, M, superiterations, stop, seed, inner_run)
