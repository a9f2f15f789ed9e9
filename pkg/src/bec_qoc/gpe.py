"""One-dimensional Gross-Pitaevskii dynamics for a displaced polynomial trap.

Units throughout: hbar = 1, lengths in micrometres, times in milliseconds,
energies in rad/ms.  Wavefunctions are plain complex arrays on a
:class:`SpatialGrid`, normalized so that ``sum(|psi|^2) * dx == 1``.
Trajectories are ``(N, n_points)`` arrays, row ``k`` holding the state at
time point ``k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import linalg

from . import _kernels

logger = logging.getLogger(__name__)

HBAR_SI = 1.054571817e-34  # J s
RB87_MASS_KG = 1.4432e-25


def hz_to_rad_per_ms(f_hz: float) -> float:
    """Convert a frequency in Hz (energy ``2 pi hbar f``) to rad/ms."""
    return 2.0 * math.pi * f_hz * 1e-3


def mass_from_kg(m_kg: float) -> float:
    """Mass in hbar ms / um^2."""
    return m_kg / HBAR_SI * 1e-9


class PropagationError(RuntimeError):
    """Raised when a propagated state stops being finite."""

    def __init__(self, step: int, what: str = "state"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid ``x_j = x_min + j dx`` with ``n_points`` samples."""

    x_min: float = -2.5
    x_max: float = 2.5
    n_points: int = 128

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def reflect(self, psi: np.ndarray) -> np.ndarray:
        """Return ``psi(-x)``; exact on grids symmetric about the origin."""
        return np.roll(psi[::-1], 1)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return np.vdot(a, b) * self.dx

    def norm(self, psi: np.ndarray) -> float:
        return math.sqrt(np.vdot(psi, psi).real * self.dx)

    def normalize(self, psi: np.ndarray) -> np.ndarray:
        return psi / self.norm(psi)


@dataclass(frozen=True)
class TrapPotential:
    """Even polynomial ``p2 d^2 + p4 d^4 + p6 d^6`` in the offset ``d = x - u``.

    Coefficients are in rad/ms per um^n.
    """

    p2: float
    p4: float = 0.0
    p6: float = 0.0
    r0: float = 1.0

    @classmethod
    def from_hz(cls, f2: float, f4: float, f6: float, r0: float) -> "TrapPotential":
        """Build from energies (in Hz) of each term at an offset of ``r0``."""
        return cls(
            p2=hz_to_rad_per_ms(f2) / r0**2,
            p4=hz_to_rad_per_ms(f4) / r0**4,
            p6=hz_to_rad_per_ms(f6) / r0**6,
            r0=r0,
        )

    @classmethod
    def harmonic(cls, mass: float, omega: float) -> "TrapPotential":
        return cls(p2=0.5 * mass * omega**2)

    def scaled(self, alpha: float) -> "TrapPotential":
        return replace(self, p2=alpha * self.p2, p4=alpha * self.p4, p6=alpha * self.p6)

    def __call__(self, x, u=0.0):
        return potential_at(self, x, u)

    def du(self, x, u=0.0):
        """Derivative with respect to the displacement ``u`` (i.e. dH/du)."""
        d = np.asarray(x, dtype=float) - u
        return -(2.0 * self.p2 * d + 4.0 * self.p4 * d**3 + 6.0 * self.p6 * d**5)


def potential_at(pot: TrapPotential, x, u=0.0):
    d = np.asarray(x, dtype=float) - u
    return pot.p2 * d**2 + pot.p4 * d**4 + pot.p6 * d**6


@dataclass(frozen=True)
class GpeParams:
    """Nonlinearity, mass and time discretization ``N = T/dt + 1`` points."""

    beta: float
    T: float
    n_steps: int
    mass: float = field(default_factory=lambda: mass_from_kg(RB87_MASS_KG))

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.T <= 0 and self.n_steps > 1:
            raise ValueError("T must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.beta < 0:
            logger.warning("attractive nonlinearity beta=%g", self.beta)

    @classmethod
    def from_dt(cls, beta: float, T: float, dt: float, **kw) -> "GpeParams":
        if dt <= 0:
            raise ValueError("dt must be positive")
        return cls(beta=beta, T=T, n_steps=math.floor(T / dt + 1e-9) + 1, **kw)

    @property
    def N(self) -> int:
        return self.n_steps

    @property
    def dt(self) -> float:
        return self.T / (self.n_steps - 1) if self.n_steps > 1 else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps)


# Reference problem instance (values in the lab units quoted for the atom chip).
DEFAULT_BETA_HZ_UM = 1830.0
DEFAULT_P_HZ = (310.0, 13.6, -0.0634)
DEFAULT_R0_UM = 0.172
DEFAULT_T_MS = 1.09
DEFAULT_GAMMA = 1e-6
DEFAULT_STEPS = 3500


def default_potential() -> TrapPotential:
    return TrapPotential.from_hz(*DEFAULT_P_HZ, r0=DEFAULT_R0_UM)


def default_beta() -> float:
    # quoted as hbar Hz um without a 2 pi
    return DEFAULT_BETA_HZ_UM * 1e-3


@dataclass(frozen=True)
class GpeSolver:
    """Split-step propagator, adjoint propagator and eigenstates for one system."""

    grid: SpatialGrid
    potential: TrapPotential
    params: GpeParams

    @cached_property
    def _kin(self) -> np.ndarray:
        k = self.grid.k
        return np.exp(-1j * k**2 * self.params.dt / (2.0 * self.params.mass))

    @property
    def _h(self) -> float:
        return 0.5 * self.params.dt

    @property
    def _p(self):
        pot = self.potential
        return float(pot.p2), float(pot.p4), float(pot.p6)

    def with_beta(self, beta: float) -> "GpeSolver":
        return replace(self, params=replace(self.params, beta=beta))

    def with_potential(self, potential: TrapPotential) -> "GpeSolver":
        return replace(self, potential=potential)

    def with_steps(self, n_steps: int) -> "GpeSolver":
        return replace(self, params=replace(self.params, n_steps=n_steps))

    # -- real time ---------------------------------------------------------

    def step_forward(self, psi: np.ndarray, u: float, u_next: float | None = None) -> np.ndarray:
        """Advance one slice ``dt``; the trap sits at ``u`` (and ``u_next`` at the end)."""
        if u_next is None:
            u_next = u
        out = _kernels.step(np.ascontiguousarray(psi, dtype=np.complex128), self.grid.x,
                            float(u), float(u_next), self._kin, self._h,
                            float(self.params.beta), *self._p)
        if not np.all(np.isfinite(out)):
            raise PropagationError(0)
        return out

    def propagate(self, psi0: np.ndarray, control: np.ndarray, store: bool = False):
        """Propagate ``psi0`` along the sampled control.

        Returns ``(psi_T, trajectory)``; the trajectory is ``None`` unless
        ``store`` is set.
        """
        u = self._check_control(control)
        psi0 = np.ascontiguousarray(psi0, dtype=np.complex128)
        psi, traj, bad = _kernels.forward(psi0, u, self.grid.x, self._kin, self._h,
                                          float(self.params.beta), *self._p, bool(store))
        if bad >= 0:
            raise PropagationError(bad)
        return psi, (traj if store else None)

    def step_adjoint_backward(self, chi: np.ndarray, psi: np.ndarray, psi_next: np.ndarray,
                              u: float, u_next: float | None = None) -> np.ndarray:
        """Carry the multiplier at the end of a slice back to its start.

        ``psi`` and ``psi_next`` are the stored forward states bracketing the
        slice.  This is the exact transpose of :meth:`step_forward` for a
        multiplier carrying a factor ``i``, so it conserves ``Im<chi|dpsi>``
        for any linearized forward perturbation.
        """
        if psi is None or psi_next is None:
            raise ValueError("adjoint step needs both bracketing trajectory snapshots")
        if u_next is None:
            u_next = u
        out = _kernels.adjoint_step(np.ascontiguousarray(chi, dtype=np.complex128),
                                    np.ascontiguousarray(psi, dtype=np.complex128),
                                    np.ascontiguousarray(psi_next, dtype=np.complex128),
                                    self.grid.x, float(u), float(u_next), self._kin,
                                    self._h, float(self.params.beta), *self._p)
        if not np.all(np.isfinite(out)):
            raise PropagationError(0, "multiplier")
        return out

    def propagate_adjoint(self, chi_T: np.ndarray, trajectory: np.ndarray, control: np.ndarray):
        """Backward sweep from ``chi_T``.

        Returns ``(chis, g)`` with ``g[k] = Re<chi_k| dH/du |psi_k>``.
        """
        u = self._check_control(control)
        if trajectory is None or trajectory.shape[0] != u.shape[0]:
            raise ValueError("adjoint sweep needs the full stored trajectory")
        chis, g, bad = _kernels.backward(np.ascontiguousarray(chi_T, dtype=np.complex128),
                                         trajectory, u, self.grid.x, self._kin, self._h,
                                         float(self.params.beta), *self._p, self.grid.dx)
        if bad >= 0:
            raise PropagationError(bad, "multiplier")
        return chis, g

    def propagate_tangent(self, psi0: np.ndarray, control: np.ndarray, directions: np.ndarray):
        """Final state and its derivatives along each row of ``directions``."""
        u = self._check_control(control)
        du = np.ascontiguousarray(np.atleast_2d(directions), dtype=float)
        if du.shape[1] != u.shape[0]:
            raise ValueError("directions must have one sample per time point")
        psi, dpsi = _kernels.tangent(np.ascontiguousarray(psi0, dtype=np.complex128), u, du,
                                     self.grid.x, self._kin, self._h,
                                     float(self.params.beta), *self._p)
        if not np.all(np.isfinite(psi)):
            raise PropagationError(u.shape[0] - 1)
        return psi, dpsi

    def propagate_krotov(self, psi0: np.ndarray, control: np.ndarray, chis: np.ndarray,
                         shape: np.ndarray, alpha: float):
        """Forward sweep with the first-order sequential update ``u += alpha S g``.

        ``chis`` are the multipliers stored along ``control``.  Returns the
        updated control and the new trajectory.
        """
        u = self._check_control(control)
        s = np.ascontiguousarray(shape, dtype=float)
        if chis.shape[0] != u.shape[0] or s.shape != u.shape:
            raise ValueError("multipliers, shape and control must share the time grid")
        u_new, traj, bad = _kernels.krotov_forward(np.ascontiguousarray(psi0, dtype=np.complex128),
                                                   u, chis, s, float(alpha), self.grid.x,
                                                   self._kin, self._h, float(self.params.beta),
                                                   *self._p, self.grid.dx)
        if bad >= 0:
            raise PropagationError(bad)
        return u_new, traj

    def _check_control(self, control) -> np.ndarray:
        u = np.ascontiguousarray(control, dtype=float)
        if u.ndim != 1 or u.shape[0] != self.params.n_steps:
            raise ValueError(
                f"control must have {self.params.n_steps} samples, got shape {u.shape}")
        return u

    # -- stationary states -------------------------------------------------

    def apply_hamiltonian(self, psi: np.ndarray, u: float = 0.0) -> np.ndarray:
        """``(H + beta |psi|^2) psi`` with a spectral kinetic term."""
        kin = self.grid.k**2 / (2.0 * self.params.mass)
        t = np.fft.ifft(kin * np.fft.fft(psi))
        return t + (self.potential(self.grid.x, u) + self.params.beta * np.abs(psi) ** 2) * psi

    def residual(self, psi: np.ndarray, u: float = 0.0) -> tuple[float, float]:
        """Return ``(||H psi - mu psi||, mu)`` for a normalized ``psi``."""
        hpsi = self.apply_hamiltonian(psi, u)
        mu = self.grid.inner(psi, hpsi).real
        return self.grid.norm(hpsi - mu * psi), mu

    def ground_state(self, u: float = 0.0, tol: float = 1e-11, max_iter: int = 100_000):
        """Lowest GPE eigenstate of the trap centred at ``u``; returns ``(psi, mu)``."""
        return self._eigenstate(odd=False, u=u, tol=tol, max_iter=max_iter)

    def first_excited_state(self, tol: float = 1e-11, max_iter: int = 100_000):
        """Lowest odd-parity GPE eigenstate of the centred trap; returns ``(psi, mu)``."""
        return self._eigenstate(odd=True, u=0.0, tol=tol, max_iter=max_iter)

    def _eigenstate(self, odd: bool, u: float, tol: float, max_iter: int):
        grid = self.grid
        x = grid.x
        sigma = 1.0 / math.sqrt(self.params.mass * self._energy_scale())
        psi = np.exp(-0.5 * ((x - u) / sigma) ** 2).astype(complex)
        if odd:
            psi = psi * (x - u)
        psi = imaginary_time(self, grid.normalize(psi), u=u, odd=odd,
                             dtau=0.2 / self._energy_scale(), n_iter=min(max_iter, 4000))
        return self._polish(psi, odd=odd, u=u, tol=tol, max_iter=max_iter)

    def _energy_scale(self) -> float:
        return math.sqrt(2.0 * max(self.potential.p2, 1e-12) / self.params.mass)

    def _polish(self, psi, odd: bool, u: float, tol: float, max_iter: int):
        """Self-consistent dense diagonalization seeded by imaginary time."""
        grid = self.grid
        n = grid.n_points
        kin = grid.k**2 / (2.0 * self.params.mass)
        h0 = np.fft.ifft(kin[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0).real
        h0 = 0.5 * (h0 + h0.T)
        vx = self.potential(grid.x, u)
        beta = self.params.beta
        rho = np.abs(psi) ** 2
        mix = 0.5
        best = math.inf
        res = math.inf
        for it in range(min(max_iter, 2000)):
            w, vecs = linalg.eigh(h0 + np.diag(vx + beta * rho))
            if odd:
                parity = np.einsum("ij,ij->j", vecs, vecs[_reflect_index(n)])
                j = int(np.flatnonzero(parity < 0)[0])
            else:
                j = 0
            phi = vecs[:, j].astype(complex) / math.sqrt(grid.dx)
            if grid.inner(psi, phi).real < 0:
                phi = -phi
            res, mu = self.residual(phi, u)
            if res < tol:
                return phi, mu
            if res > best:
                mix = max(0.5 * mix, 0.02)
            best = min(best, res)
            rho = (1 - mix) * rho + mix * np.abs(phi) ** 2
            psi = phi
        raise ConvergenceError("eigenstate iteration did not converge", res)


def _reflect_index(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def imaginary_time(solver: GpeSolver, psi: np.ndarray, u: float = 0.0, odd: bool = False,
                   dtau: float = 1e-3, n_iter: int = 4000, tol: float = 1e-12) -> np.ndarray:
    """Normalized imaginary-time split-step relaxation.

    With ``odd`` the state is projected onto the odd subspace every step,
    which selects the lowest odd state of a trap symmetric about ``u = 0``.
    Stops early once the energy changes by less than ``tol`` per step.
    """
    grid = solver.grid
    kin = np.exp(-grid.k**2 * dtau / (2.0 * solver.params.mass))
    vx = solver.potential(grid.x, u)
    beta = solver.params.beta
    e_old = math.inf
    for it in range(n_iter):
        psi = psi * np.exp(-0.5 * dtau * (vx + beta * np.abs(psi) ** 2))
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = psi * np.exp(-0.5 * dtau * (vx + beta * np.abs(psi) ** 2))
        if odd:
            psi = 0.5 * (psi - grid.reflect(psi))
        psi = grid.normalize(psi)
        if it % 50 == 0:
            _, e = solver.residual(psi, u)
            if abs(e - e_old) < tol:
                break
            e_old = e
    return psi


def fidelity(a: np.ndarray, b: np.ndarray, grid: SpatialGrid) -> float:
    """``|<a|b>|^2`` on ``grid``."""
    if a.shape != b.shape or a.shape[-1] != grid.n_points:
        raise ValueError("states live on different grids")
    return abs(grid.inner(a, b)) ** 2


def edge_amplitude(psi: np.ndarray, width: int = 2) -> float:
    """Largest ``|psi|`` within ``width`` points of either box edge."""
    return float(max(np.abs(psi[:width]).max(), np.abs(psi[-width:]).max()))


def default_solver(n_points: int = 128, n_steps: int = DEFAULT_STEPS + 1, x_min: float = -2.5,
                 x_max: float = 2.5, T: float = DEFAULT_T_MS, beta: float | None = None,
                 mass: float | None = None) -> GpeSolver:
    params = GpeParams(beta=default_beta() if beta is None else beta, T=T, n_steps=n_steps,
                       **({} if mass is None else {"mass": mass}))
    return GpeSolver(SpatialGrid(x_min, x_max, n_points), default_potential(), params)
