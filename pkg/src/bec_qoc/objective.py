"""Cost functional and gradient backends for the condensate driving problem.

The cost of a control ``u`` is

    J = (1 - F) / 2 + (gamma / 2) * sum_k ((v_{k+1} - v_k) / dt)^2 dt

where ``v = h * u`` is the distorted control seen by the atoms (``v = u``
without a filter) and ``F = |<psi_t|psi(T)>|^2``.  All gradient backends
differentiate exactly this discrete functional, so they agree with finite
differences up to rounding.

Writing ``g_k = Re<chi_k|dH/du|psi_k>`` for the adjoint overlap, the
derivative with respect to an interior sample is
``dJ/du_k = -dt (g_k + gamma * u''_k)``, the trapezoidal form of the
continuous variational derivative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .controls import BasisSpec, FilterKernel, adjoint_filter, apply_filter, filter_matrix_columns, sin2_shape
from .gpe import GpeSolver, edge_amplitude, fidelity, default_solver

logger = logging.getLogger(__name__)

EDGE_TOL = 1e-8


@dataclass
class EvalCounter:
    """Number of equation-of-motion solves (forward GPE or adjoint)."""

    count: int = 0

    def add(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("evaluation counts only grow")
        self.count += n
        return self.count


@dataclass(frozen=True)
class CostBreakdown:
    fidelity: float
    infidelity_term: float
    regularization_term: float
    gamma: float

    @property
    def total(self) -> float:
        return self.infidelity_term + self.regularization_term

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


@dataclass(frozen=True)
class GradientVector:
    """Gradient values tagged with their space: ``"h1"``, ``"l2"`` or ``"coefficient"``."""

    values: np.ndarray
    space: str
    cost: CostBreakdown | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)


@dataclass
class ForwardResult:
    u: np.ndarray
    v: np.ndarray
    psi_T: np.ndarray
    trajectory: np.ndarray | None
    cost: CostBreakdown


@dataclass
class ControlProblem:
    """State transfer ``psi0 -> target`` over the solver's time window."""

    solver: GpeSolver
    psi0: np.ndarray
    target: np.ndarray
    gamma: float = 1e-6
    kernel: FilterKernel | None = None
    counter: EvalCounter = field(default_factory=EvalCounter)

    @classmethod
    def from_solver(cls, solver: GpeSolver, **kw) -> "ControlProblem":
        """Ground state at ``u = 0`` to the first excited state of ``solver``."""
        psi0, _ = solver.ground_state()
        target, _ = solver.first_excited_state()
        return cls(solver, psi0, target, **kw)

    @classmethod
    def default(cls, n_points: int = 128, n_steps: int = 3501, gamma: float = 1e-6,
              kernel: FilterKernel | None = None, **solver_kw) -> "ControlProblem":
        return cls.from_solver(default_solver(n_points=n_points, n_steps=n_steps, **solver_kw),
                               gamma=gamma, kernel=kernel)

    def with_kernel(self, kernel: FilterKernel | None) -> "ControlProblem":
        # the evaluation counter is shared on purpose
        return replace(self, kernel=kernel)

    @property
    def dt(self) -> float:
        return self.solver.params.dt

    @property
    def times(self) -> np.ndarray:
        return self.solver.params.times

    @property
    def n_steps(self) -> int:
        return self.solver.params.n_steps

    @cached_property
    def shape(self) -> np.ndarray:
        return sin2_shape(self.times)

    @cached_property
    def _weights(self) -> np.ndarray:
        w = np.full(self.n_steps, self.dt)
        w[[0, -1]] *= 0.5
        return w

    @property
    def filtered(self) -> bool:
        return self.kernel is not None and not self.kernel.is_identity

    def zero_control(self) -> np.ndarray:
        return np.zeros(self.n_steps)

    def distort(self, u: np.ndarray) -> np.ndarray:
        return apply_filter(u, self.kernel) if self.kernel is not None else np.array(u, dtype=float)

    def distort_transpose(self, e: np.ndarray) -> np.ndarray:
        return adjoint_filter(e, self.kernel) if self.kernel is not None else np.array(e, dtype=float)

    # -- cost --------------------------------------------------------------

    def regularization(self, v: np.ndarray) -> float:
        if self.n_steps < 2:
            return 0.0
        d = np.diff(v) / self.dt
        return 0.5 * self.gamma * float(np.sum(d * d)) * self.dt

    def regularization_gradient(self, v: np.ndarray) -> np.ndarray:
        grad = np.zeros(len(v))
        if self.n_steps < 2:
            return grad
        d = self.gamma * np.diff(v) / self.dt
        grad[:-1] -= d
        grad[1:] += d
        return grad

    def breakdown(self, psi_T: np.ndarray, v: np.ndarray) -> CostBreakdown:
        F = fidelity(self.target, psi_T, self.solver.grid)
        return CostBreakdown(F, 0.5 * (1.0 - F), self.regularization(v), self.gamma)

    def forward(self, u: np.ndarray, store: bool = False) -> ForwardResult:
        """One GPE solve along the distorted control."""
        u = np.asarray(u, dtype=float)
        v = self.distort(u)
        psi_T, traj = self.solver.propagate(self.psi0, v, store=store)
        self.counter.add(1)
        if edge_amplitude(psi_T) > EDGE_TOL:
            logger.debug("state reaches the box edge (|psi| = %.2e)", edge_amplitude(psi_T))
        return ForwardResult(u, v, psi_T, traj, self.breakdown(psi_T, v))

    def adjoint(self, fwd: ForwardResult) -> np.ndarray:
        """One adjoint solve; returns ``g_k = Re<chi_k|dH/dv|psi_k>``."""
        if fwd.trajectory is None:
            raise ValueError("forward result was computed without a stored trajectory")
        chi_T = adjoint_terminal(fwd.psi_T, self.target, self.solver.grid)
        _, g = self.solver.propagate_adjoint(chi_T, fwd.trajectory, fwd.v)
        self.counter.add(1)
        return g

    def gradient_v(self, fwd: ForwardResult, g: np.ndarray | None = None) -> np.ndarray:
        """Exact ``dJ/dv_k`` (regularization boundary terms included)."""
        if g is None:
            g = self.adjoint(fwd)
        return -self._weights * g + self.regularization_gradient(fwd.v)

    def gradient_u(self, fwd: ForwardResult, g: np.ndarray | None = None) -> np.ndarray:
        """Exact ``dJ/du_k`` through the filter."""
        return self.distort_transpose(self.gradient_v(fwd, g))


def cost(control: np.ndarray, problem: ControlProblem) -> CostBreakdown:
    return problem.forward(control).cost


def adjoint_terminal(psi_T: np.ndarray, target: np.ndarray, grid) -> np.ndarray:
    """Terminal multiplier ``chi(T) = i <psi_t|psi(T)> psi_t``."""
    return 1j * grid.inner(target, psi_T) * target


def second_derivative(v: np.ndarray, dt: float) -> np.ndarray:
    """Central second differences; second-order one-sided stencils at the ends."""
    a = np.zeros(len(v))
    if len(v) < 4:
        return a
    a[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    a[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dt**2
    a[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dt**2
    return a


def gradient_integrand(fwd: ForwardResult, g: np.ndarray, problem: ControlProblem) -> np.ndarray:
    """``Re<chi|dH/du|psi> + gamma u''`` sampled on the time grid."""
    return g + problem.gamma * second_derivative(fwd.v, problem.dt)


def h1_riesz(e: np.ndarray, dt: float) -> np.ndarray:
    """H1 representative of the covector ``e``.

    Solves ``(G_{k+1} - 2 G_k + G_{k-1}) / dt^2 = -e_k / dt`` on the interior
    with ``G_0 = G_{N-1} = 0``, so that ``sum_k (dG_k)(du_k)/dt = e . du`` for
    every ``du`` vanishing at the ends.
    """
    n = len(e)
    out = np.zeros(n)
    m = n - 2
    if m <= 0:
        return out
    ab = np.empty((3, m))
    ab[0] = 1.0
    ab[1] = -2.0
    ab[2] = 1.0
    out[1:-1] = solve_banded((1, 1), ab, -e[1:-1] * dt)
    return out


def h1_inner(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    return float(np.dot(np.diff(a), np.diff(b)) / dt)


def second_difference(G: np.ndarray, dt: float) -> np.ndarray:
    return (G[2:] - 2.0 * G[1:-1] + G[:-2]) / dt**2


def grape_gradient_h1(control: np.ndarray, problem: ControlProblem) -> GradientVector:
    """H1 gradient of the reduced cost (two solves)."""
    fwd = problem.forward(control, store=True)
    e = problem.gradient_u(fwd)
    return GradientVector(h1_riesz(e, problem.dt), "h1", fwd.cost)


def grape_gradient_l2(control: np.ndarray, problem: ControlProblem) -> GradientVector:
    """Plain L2 gradient ``dJ/du_k / dt`` (ends pinned to zero); two solves."""
    fwd = problem.forward(control, store=True)
    e = problem.gradient_u(fwd) / problem.dt
    e[[0, -1]] = 0.0
    return GradientVector(e, "l2", fwd.cost)


def grape_gradient_h1_filtered(control: np.ndarray, kernel: FilterKernel,
                               problem: ControlProblem) -> GradientVector:
    return grape_gradient_h1(control, problem.with_kernel(kernel))


def filtered_h1_rhs(fwd: ForwardResult, g: np.ndarray, problem: ControlProblem):
    """Split the Poisson right-hand side into its integral and boundary parts.

    The boundary part is ``-gamma v'(T) h(T - t)``, the contribution of the
    regularization endpoint term that survives the filter.
    """
    e_v = problem.gradient_v(fwd, g)
    vdot_T = (fwd.v[-1] - fwd.v[-2]) / problem.dt
    boundary_v = np.zeros_like(e_v)
    boundary_v[-1] = problem.gamma * vdot_T
    total = -problem.distort_transpose(e_v)[1:-1] / problem.dt
    boundary = -problem.distort_transpose(boundary_v)[1:-1] / problem.dt
    return total - boundary, boundary


@dataclass
class ChoppedParametrization:
    """``u(c) = u0 + S B c`` for a chopped basis, with its filtered image cached."""

    problem: ControlProblem
    basis: BasisSpec
    u0: np.ndarray
    shape: np.ndarray | None = None

    def __post_init__(self):
        if self.shape is None:
            self.shape = self.problem.shape
        self.u0 = np.asarray(self.u0, dtype=float)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.basis.matrix(self.shape, self.problem.times)

    @cached_property
    def filtered_matrix(self) -> np.ndarray:
        if not self.problem.filtered:
            return self.matrix
        return filter_matrix_columns(self.matrix, self.problem.kernel)

    @property
    def size(self) -> int:
        return self.basis.size

    def control(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients, got {c.shape}")
        return self.u0 + self.matrix @ c if self.size else self.u0.copy()

    def gradient(self, fwd: ForwardResult, g: np.ndarray | None = None) -> np.ndarray:
        """Coefficient gradient from a stored forward solve (one adjoint solve if ``g`` is None)."""
        if self.size == 0:
            return np.zeros(0)
        if g is None:
            g = self.problem.adjoint(fwd)
        if not self.problem.filtered:
            integrand = gradient_integrand(fwd, g, self.problem)
            # ends carry S = 0, so only interior samples enter
            return -self.problem.dt * (self.matrix[1:-1].T @ integrand[1:-1])
        return self.filtered_matrix.T @ self.problem.gradient_v(fwd, g)


def group_gradient(c, basis: BasisSpec, S, u0, problem: ControlProblem) -> GradientVector:
    """Coefficient gradient by one forward and one adjoint solve."""
    par = ChoppedParametrization(problem, basis, u0, S)
    if par.size == 0:
        return GradientVector(np.zeros(0), "coefficient")
    fwd = problem.forward(par.control(c), store=True)
    return GradientVector(par.gradient(fwd), "coefficient", fwd.cost)


def group_gradient_filtered(c, basis: BasisSpec, S, u0, kernel: FilterKernel,
                            problem: ControlProblem) -> GradientVector:
    return group_gradient(c, basis, S, u0, problem.with_kernel(kernel))


def goat_gradient(c, basis: BasisSpec, S, u0, problem: ControlProblem) -> GradientVector:
    """Coefficient gradient by forward sensitivities (``1 + M`` solves)."""
    par = ChoppedParametrization(problem, basis, u0, S)
    u = par.control(c)
    v = problem.distort(u)
    if par.size == 0:
        fwd = problem.forward(u)
        return GradientVector(np.zeros(0), "coefficient", fwd.cost)
    directions = par.filtered_matrix.T
    psi_T, dpsi = problem.solver.propagate_tangent(problem.psi0, v, directions)
    problem.counter.add(1 + par.size)
    grid = problem.solver.grid
    overlap = grid.inner(problem.target, psi_T)
    d_overlap = (dpsi @ np.conj(problem.target)) * grid.dx
    grad = -np.real(np.conj(overlap) * d_overlap)
    grad += directions @ problem.regularization_gradient(v)
    return GradientVector(grad, "coefficient", problem.breakdown(psi_T, v))
