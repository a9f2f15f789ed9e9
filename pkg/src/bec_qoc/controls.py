"""Control parametrizations: chopped sinusoidal bases, shape function, filters.

Controls are float arrays sampled on the ``N`` time points ``t_k = k dt``
(micrometres of trap displacement).  A chopped basis writes

    u(t) = u0(t) + S(t) * sum_n c_n sin(omega_n t / T)

with ``omega_n = n pi`` for the plain chopped basis (CB) and
``omega_n = (n + r_n) pi``, ``r_n ~ U[-1/2, 1/2]`` for CRAB.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_AMPLITUDE = 0.05  # um, scale of random initial coefficients
DEFAULT_TAU = 0.05  # ms, exponential filter time constant


def sin2_shape(times: np.ndarray) -> np.ndarray:
    """``S(t) = sin^2(pi t / T)`` with the end samples pinned to exactly zero."""
    times = np.asarray(times, dtype=float)
    T = times[-1]
    s = np.sin(np.pi * times / T) ** 2 if T > 0 else np.zeros_like(times)
    s[0] = 0.0
    s[-1] = 0.0
    return s


@dataclass(frozen=True)
class BasisSpec:
    kind: str
    frequencies: np.ndarray
    shifts: np.ndarray
    seed: int | None = None

    @property
    def size(self) -> int:
        return len(self.frequencies)

    def functions(self, times: np.ndarray) -> np.ndarray:
        """Unshaped basis functions, shape (N, M)."""
        times = np.asarray(times, dtype=float)
        return np.sin(np.outer(times / times[-1], self.frequencies))

    def matrix(self, shape: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Shaped basis ``S(t_k) f_n(t_k)``, shape (N, M)."""
        return np.asarray(shape)[:, None] * self.functions(times)

    def truncated(self, m: int) -> "BasisSpec":
        return BasisSpec(self.kind, self.frequencies[:m], self.shifts[:m], self.seed)


def make_basis(kind: str, M: int, seed: int | None = None) -> BasisSpec:
    """Chopped basis of size ``M``; ``kind`` is ``"cb"`` or ``"crab"``."""
    if M < 1:
        raise ValueError(f"basis size must be >= 1, got {M}")
    n = np.arange(1, M + 1, dtype=float)
    kind = kind.lower()
    if kind == "cb":
        shifts = np.zeros(M)
    elif kind == "crab":
        shifts = np.random.default_rng(seed).uniform(-0.5, 0.5, M)
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    return BasisSpec(kind, (n + shifts) * np.pi, shifts, seed)


def synthesize(u0: np.ndarray, shape: np.ndarray, basis: BasisSpec, c: np.ndarray,
               times: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if c.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got {c.shape}")
    if u0.shape != np.shape(shape) or u0.shape != np.shape(times):
        raise ValueError("u0, shape and times must have the same length")
    # accumulate mode by mode so that zero-padded expansions reproduce bit for bit
    acc = np.zeros_like(u0)
    for n, col in enumerate(basis.matrix(shape, times).T):
        acc += c[n] * col
    return u0 + acc


def random_coefficients(M: int, seed: int, amplitude: float = DEFAULT_AMPLITUDE) -> np.ndarray:
    """``c_n ~ U[-A/n, A/n]``: damped so that random controls stay smooth."""
    n = np.arange(1, M + 1)
    return np.random.default_rng(seed).uniform(-1.0, 1.0, M) * amplitude / n


def random_initial_control(basis: BasisSpec, seed: int, amplitude_scale: float, u0: np.ndarray,
                           shape: np.ndarray, times: np.ndarray):
    """Seeded random coefficients and the control they synthesize."""
    c = random_coefficients(basis.size, seed, amplitude_scale)
    return c, synthesize(u0, shape, basis, c, times)


@dataclass(frozen=True)
class FilterKernel:
    """Causal kernel ``h(j dt)`` for the discrete convolution ``v = h * u``."""

    kind: str
    h: np.ndarray
    dt: float

    @classmethod
    def identity(cls, dt: float) -> "FilterKernel":
        return cls("identity", np.array([1.0 / dt]), dt)

    @classmethod
    def exponential(cls, tau: float, dt: float, n: int) -> "FilterKernel":
        """Low-pass ``h(t) = exp(-t/tau)/tau`` truncated at ``n`` samples."""
        if tau <= 0:
            raise ValueError("tau must be positive")
        t = dt * np.arange(n)
        return cls("exponential", np.exp(-t / tau) / tau, dt)

    @classmethod
    def from_file(cls, path: str | Path, dt: float, n: int) -> "FilterKernel":
        """Load two columns (tau in ms, h in 1/ms) and resample linearly onto the dt grid."""
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
        tau, h = data[:, 0], data[:, 1]
        if not (np.all(np.isfinite(data)) and np.all(np.diff(tau) > 0) and tau[0] >= 0):
            raise ValueError(f"{path}: kernel must be finite with increasing tau >= 0")
        grid = dt * np.arange(n)
        return cls("file", np.interp(grid, tau, h, left=0.0, right=0.0), dt)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"


def apply_filter(u: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """``v_k = dt * sum_{j<=k} h_j u_{k-j}`` (left Riemann sum of the causal convolution)."""
    u = np.asarray(u, dtype=float)
    if kernel.is_identity:
        return u.copy()
    return kernel.dt * np.convolve(u, kernel.h)[: len(u)]


def adjoint_filter(e: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """Transpose of :func:`apply_filter`: ``dt * sum_{k>=j} h_{k-j} e_k``."""
    e = np.asarray(e, dtype=float)
    if kernel.is_identity:
        return e.copy()
    return kernel.dt * np.convolve(e[::-1], kernel.h)[: len(e)][::-1]


def filter_matrix_columns(columns: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """Apply the filter to every column of an (N, M) array."""
    if kernel.is_identity or columns.shape[1] == 0:
        return np.array(columns, dtype=float)
    return np.column_stack([apply_filter(col, kernel) for col in columns.T])


@dataclass(frozen=True)
class DressedControl:
    """One dCRAB superiteration: fresh random basis on top of the incumbent control."""

    base: np.ndarray
    basis: BasisSpec
    coefficients: np.ndarray
    index: int = 1

    def control(self, shape: np.ndarray, times: np.ndarray) -> np.ndarray:
        return synthesize(self.base, shape, self.basis, self.coefficients, times)


def dress(previous: np.ndarray, new_seed: int, M: int, index: int = 1) -> DressedControl:
    """Start a superiteration from ``previous`` with a new CRAB basis and ``c = 0``."""
    basis = make_basis("crab", M, new_seed)
    return DressedControl(np.array(previous, dtype=float), basis, np.zeros(M), index)
