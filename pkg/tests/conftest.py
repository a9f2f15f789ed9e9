import numpy as np
import pytest

from bec_qoc.controls import FilterKernel
from bec_qoc.gpe import default_solver
from bec_qoc.objective import ControlProblem


@pytest.fixture(scope="session")
def solver():
    """Default trap and nonlinearity on the reduced time grid (200 samples)."""
    return default_solver(n_steps=200)


@pytest.fixture(scope="session")
def states(solver):
    psi0, mu0 = solver.ground_state()
    psi1, mu1 = solver.first_excited_state()
    return psi0, mu0, psi1, mu1


@pytest.fixture
def problem(solver, states):
    psi0, _, psi1, _ = states
    return ControlProblem(solver, psi0, psi1)


@pytest.fixture
def filtered_problem(problem):
    return problem.with_kernel(FilterKernel.exponential(0.05, problem.dt, problem.n_steps))


@pytest.fixture(scope="session")
def full_problem():
    """Default problem on the full 3501-sample time grid."""
    return ControlProblem.default()


def smooth_direction(rng, times, n_modes=4):
    """Random smooth perturbation vanishing at both ends."""
    T = times[-1]
    d = np.zeros_like(times)
    for n in range(1, n_modes + 1):
        d += rng.normal() / n * np.sin(n * np.pi * times / T)
    d[[0, -1]] = 0.0
    return d


# acceptance verdicts, printed together at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
