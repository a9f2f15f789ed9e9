"""First-order Krotov method (sigma = 0, no state-difference penalty).

One sweep propagates the multiplier backward along the current control,
then propagates the state forward while updating each time slice with

    u'(t) = u(t) + alpha S(t) Re<chi(t)| dH/du |psi'(t)>

using the just-computed state.  The sign matches the gradient backends:
``+g`` is a descent direction for the cost.  The tracked cost is the terminal
term ``(1 - F)/2`` alone because the update ignores the control penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..gpe import PropagationError
from ..objective import ControlProblem, adjoint_terminal
from .base import StoppingRule
from .trace import RunTrace


@dataclass(frozen=True)
class KrotovConfig:
    alpha: float
    shape: np.ndarray
    max_iter: int = 50

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Krotov step size must be positive")
        s = np.asarray(self.shape)
        if s[0] != 0.0 or s[-1] != 0.0:
            raise ValueError("Krotov shape function must vanish at both ends")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class KrotovState:
    """Current control with its stored forward trajectory."""

    control: np.ndarray
    trajectory: np.ndarray
    fidelity: float

    @property
    def cost(self) -> float:
        return 0.5 * (1.0 - self.fidelity)


def _require_unfiltered(problem: ControlProblem):
    if problem.filtered:
        raise ValueError("Krotov's sequential update does not support a control filter")


def krotov_initial(control: np.ndarray, problem: ControlProblem) -> KrotovState:
    """One forward solve of the starting control."""
    _require_unfiltered(problem)
    fwd = problem.forward(control, store=True)
    return KrotovState(np.array(control, dtype=float), fwd.trajectory, fwd.cost.fidelity)


def krotov_sweep(control: np.ndarray, config: KrotovConfig, problem: ControlProblem,
                 state: KrotovState | None = None) -> tuple[np.ndarray, KrotovState]:
    """One sequential sweep (two solves; plus one if ``state`` is not supplied)."""
    _require_unfiltered(problem)
    if state is None or not np.array_equal(state.control, control):
        state = krotov_initial(control, problem)
    solver = problem.solver
    chi_T = adjoint_terminal(state.trajectory[-1], problem.target, solver.grid)
    chis, _ = solver.propagate_adjoint(chi_T, state.trajectory, state.control)
    problem.counter.add(1)
    u_new, traj = solver.propagate_krotov(problem.psi0, state.control, chis, config.shape,
                                          config.alpha)
    problem.counter.add(1)
    F = problem.breakdown(traj[-1], u_new).fidelity
    return u_new, KrotovState(u_new, traj, F)


def krotov(problem: ControlProblem, u_init: np.ndarray, config: KrotovConfig,
           stop: StoppingRule | None = None, seed: int | None = None) -> RunTrace:
    """Iterate sweeps; the trace gets one record per forward solve."""
    _require_unfiltered(problem)
    stop = stop or StoppingRule(max_evals=math.inf, cost_tol=0.0, grad_tol=1e-300)
    trace = RunTrace("krotov", seed, {"alpha": config.alpha})
    start = problem.counter.count
    used = lambda: problem.counter.count - start  # noqa: E731
    try:
        state = krotov_initial(u_init, problem)
        trace.observe(used(), state.cost, state.fidelity, state.control)
        for _ in range(config.max_iter):
            if used() + 2 > stop.max_evals:
                trace.status = "max_evals"
                break
            prev = state.cost
            _, state = krotov_sweep(state.control, config, problem, state)
            trace.observe(used(), state.cost, state.fidelity, state.control)
            if not math.isfinite(state.cost):
                trace.status = "non_finite"
                break
            if stop.cost_tol > 0 and abs(prev - state.cost) <= stop.cost_tol * max(1.0, prev):
                trace.status = "cost_tol"
                break
        else:
            trace.status = "max_iter"
    except PropagationError:
        trace.status = "non_finite"
    return trace
