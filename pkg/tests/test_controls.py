import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bec_qoc.controls import (FilterKernel, adjoint_filter, apply_filter, dress, filter_matrix_columns,
                              make_basis, random_initial_control, sin2_shape, synthesize)

N = 201
TIMES = np.linspace(0.0, 1.09, N)
SHAPE = sin2_shape(TIMES)
DT = TIMES[1] - TIMES[0]

coeffs = st.integers(1, 12).flatmap(
    lambda m: arrays(float, m, elements=st.floats(-1.0, 1.0, allow_nan=False)))


def test_shape_function_bounds():
    assert SHAPE[0] == 0.0 and SHAPE[-1] == 0.0
    assert np.all((SHAPE >= 0) & (SHAPE <= 1))
    assert SHAPE[N // 2] == pytest.approx(1.0)


def test_zero_coefficients_give_base_control():
    u0 = 0.1 * np.sin(np.pi * TIMES / TIMES[-1])
    out = synthesize(u0, SHAPE, make_basis("cb", 5), np.zeros(5), TIMES)
    np.testing.assert_array_equal(out, u0)


@given(coeffs, st.sampled_from(["cb", "crab"]), st.integers(0, 1000))
def test_synthesized_endpoints_are_pinned(c, kind, seed):
    u = synthesize(np.zeros(N), SHAPE, make_basis(kind, len(c), seed), c, TIMES)
    assert u[0] == 0.0 and u[-1] == 0.0


def test_single_mode_peak():
    A = 0.37
    u = synthesize(np.zeros(N), SHAPE, make_basis("cb", 1), np.array([A]), TIMES)
    assert u[N // 2] == pytest.approx(A, rel=1e-12)


def test_synthesize_length_mismatch():
    with pytest.raises(ValueError):
        synthesize(np.zeros(N), SHAPE, make_basis("cb", 3), np.zeros(2), TIMES)
    with pytest.raises(ValueError):
        synthesize(np.zeros(N - 1), SHAPE, make_basis("cb", 3), np.zeros(3), TIMES)


def test_cb_frequencies():
    np.testing.assert_array_equal(make_basis("cb", 3).frequencies, np.pi * np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(make_basis("cb", 3).shifts, 0.0)


@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_crab_frequencies_stay_in_their_band(M, seed):
    w = make_basis("crab", M, seed).frequencies / np.pi
    n = np.arange(1, M + 1)
    assert np.all((w >= n - 0.5) & (w <= n + 0.5))


def test_crab_is_deterministic_per_seed():
    np.testing.assert_array_equal(make_basis("crab", 30, 7).frequencies,
                                  make_basis("crab", 30, 7).frequencies)
    assert not np.array_equal(make_basis("crab", 30, 7).frequencies,
                              make_basis("crab", 30, 8).frequencies)


@pytest.mark.parametrize("M", [0, -3])
def test_basis_size_must_be_positive(M):
    with pytest.raises(ValueError):
        make_basis("cb", M)


def test_unknown_basis_kind():
    with pytest.raises(ValueError):
        make_basis("wavelet", 3)


@given(coeffs, st.integers(1, 10))
def test_cb_nesting(c, extra):
    small = synthesize(np.zeros(N), SHAPE, make_basis("cb", len(c)), c, TIMES)
    padded = np.concatenate([c, np.zeros(extra)])
    big = synthesize(np.zeros(N), SHAPE, make_basis("cb", len(c) + extra), padded, TIMES)
    np.testing.assert_array_equal(small, big)


def test_random_control_zero_amplitude():
    c, u = random_initial_control(make_basis("cb", 20), 3, 0.0, np.zeros(N), SHAPE, TIMES)
    np.testing.assert_array_equal(c, 0.0)
    np.testing.assert_array_equal(u, 0.0)


def test_random_control_is_deterministic():
    b = make_basis("cb", 20)
    a = random_initial_control(b, 11, 0.05, np.zeros(N), SHAPE, TIMES)
    again = random_initial_control(b, 11, 0.05, np.zeros(N), SHAPE, TIMES)
    np.testing.assert_array_equal(a[1], again[1])


def test_random_controls_keep_trap_on_grid():
    b = make_basis("cb", 20)
    worst = max(np.max(np.abs(random_initial_control(b, s, 0.05, np.zeros(N), SHAPE, TIMES)[1]))
                for s in range(100))
    # |u| <= A * sum 1/n for this distribution, about 0.18 um for M = 20
    assert worst < 1.0
    assert worst <= 0.05 * np.sum(1.0 / np.arange(1, 21))


# -- filters --------------------------------------------------------------------

def test_identity_filter_is_a_no_op():
    rng = np.random.default_rng(0)
    u = rng.normal(size=N)
    k = FilterKernel.identity(DT)
    assert k.h[0] == 1.0 / DT
    np.testing.assert_array_equal(apply_filter(u, k), u)
    np.testing.assert_array_equal(adjoint_filter(u, k), u)


def test_exponential_step_response():
    tau = 0.05
    k = FilterKernel.exponential(tau, DT, N)
    v = apply_filter(np.ones(N), k)
    assert v.shape == (N,)
    assert v[0] == pytest.approx(k.h[0] * DT)
    # error bound taken against the unit step height
    np.testing.assert_allclose(v, 1.0 - np.exp(-TIMES / tau), atol=2 * DT / tau)


@settings(max_examples=30)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_filter_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    u1, u2 = rng.normal(size=(2, N))
    k = FilterKernel.exponential(0.05, DT, N)
    np.testing.assert_allclose(apply_filter(a * u1 + b * u2, k),
                               a * apply_filter(u1, k) + b * apply_filter(u2, k), atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_adjoint_filter_is_transpose(seed):
    rng = np.random.default_rng(seed)
    u, e = rng.normal(size=(2, N))
    k = FilterKernel.exponential(0.03, DT, N)
    assert np.dot(e, apply_filter(u, k)) == pytest.approx(np.dot(adjoint_filter(e, k), u), rel=1e-12)


def test_filter_is_causal():
    u = np.zeros(N)
    u[50] = 1.0
    v = apply_filter(u, FilterKernel.exponential(0.05, DT, N))
    np.testing.assert_array_equal(v[:50], 0.0)
    assert v[50] > 0


def test_filter_columns_match_single_application():
    cols = make_basis("cb", 4).matrix(SHAPE, TIMES)
    k = FilterKernel.exponential(0.05, DT, N)
    out = filter_matrix_columns(cols, k)
    np.testing.assert_array_equal(out[:, 2], apply_filter(cols[:, 2], k))


def test_kernel_from_file(tmp_path):
    tau = 0.05
    t = np.linspace(0, 1.2, 600)
    path = tmp_path / "kernel.txt"
    np.savetxt(path, np.column_stack([t, np.exp(-t / tau) / tau]))
    k = FilterKernel.from_file(path, DT, N)
    ref = FilterKernel.exponential(tau, DT, N)
    np.testing.assert_allclose(k.h, ref.h, rtol=2e-3, atol=1e-3)


@pytest.mark.parametrize("body", ["0 1 2\n1 2 3\n", "0 1\n0.1 nan\n", "0.1 1\n0.05 2\n"])
def test_bad_kernel_files(tmp_path, body):
    path = tmp_path / "k.txt"
    path.write_text(body)
    with pytest.raises(ValueError):
        FilterKernel.from_file(path, DT, N)


def test_exponential_needs_positive_tau():
    with pytest.raises(ValueError):
        FilterKernel.exponential(0.0, DT, N)


# -- dressing -------------------------------------------------------------------

def test_dress_starts_from_previous_control():
    prev = synthesize(np.zeros(N), SHAPE, make_basis("cb", 3), np.array([0.1, -0.05, 0.02]), TIMES)
    d = dress(prev, 5, 8)
    np.testing.assert_array_equal(d.control(SHAPE, TIMES), prev)
    np.testing.assert_array_equal(d.coefficients, 0.0)
    assert d.basis.kind == "crab"


def test_dress_seeds_give_different_bases():
    prev = np.zeros(N)
    assert not np.array_equal(dress(prev, 1, 10).basis.frequencies, dress(prev, 2, 10).basis.frequencies)


def test_dressed_cost_equals_previous_cost(problem):
    prev = synthesize(problem.zero_control(), problem.shape, make_basis("cb", 2), np.array([0.08, 0.03]),
                      problem.times)
    d = dress(prev, 9, 6)
    a = problem.forward(prev).cost.total
    b = problem.forward(d.control(problem.shape, problem.times)).cost.total
    assert abs(a - b) <= 1e-12
