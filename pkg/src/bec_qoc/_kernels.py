"""Compiled inner loops for the split-step propagator and its adjoint/tangent.

All loops walk the same discrete scheme: a potential half-step (with the
nonlinear phase evaluated from the density entering that half-step), a full
spectral kinetic step and a second potential half-step.  The second half-step
uses the control sample at the end of the slice.  Control samples are
indexed by time point, so slice ``k`` uses ``u[k]`` and ``u[k + 1]``.
"""

import numpy as np
import numba
import rocket_fft  # noqa: F401  registers np.fft for numba

_JIT = dict(cache=True, nogil=True)


@numba.njit(**_JIT)
def potential(x, u, p2, p4, p6):
    n = x.shape[0]
    out = np.empty(n)
    for j in range(n):
        d2 = (x[j] - u) ** 2
        out[j] = d2 * (p2 + d2 * (p4 + d2 * p6))
    return out


@numba.njit(**_JIT)
def potential_du(x, u, p2, p4, p6):
    """Derivative of the trap potential with respect to the displacement."""
    n = x.shape[0]
    out = np.empty(n)
    for j in range(n):
        d = x[j] - u
        d2 = d * d
        out[j] = -d * (2.0 * p2 + d2 * (4.0 * p4 + d2 * 6.0 * p6))
    return out


@numba.njit(**_JIT)
def _phase(psi, x, u, p2, p4, p6, h, beta, sign):
    # psi * exp(sign * i * h * (V + beta |psi|^2))
    n = psi.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for j in range(n):
        d2 = (x[j] - u) ** 2
        v = d2 * (p2 + d2 * (p4 + d2 * p6))
        z = psi[j]
        theta = sign * h * (v + beta * (z.real * z.real + z.imag * z.imag))
        out[j] = z * complex(np.cos(theta), np.sin(theta))
    return out


@numba.njit(**_JIT)
def step(psi, x, u0, u1, kin, h, beta, p2, p4, p6):
    a = _phase(psi, x, u0, p2, p4, p6, h, beta, -1.0)
    b = np.fft.ifft(np.fft.fft(a) * kin)
    return _phase(b, x, u1, p2, p4, p6, h, beta, -1.0)


@numba.njit(**_JIT)
def _linearized_half(nu, psi, h, beta):
    # nu + 2 i h beta Re(conj(nu) psi) psi
    n = nu.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for j in range(n):
        r = nu[j].real * psi[j].real + nu[j].imag * psi[j].imag
        out[j] = nu[j] + 2j * h * beta * r * psi[j]
    return out


@numba.njit(**_JIT)
def adjoint_step(chi, psi0, psi1, x, u0, u1, kin, h, beta, p2, p4, p6):
    """Exact transpose of ``step`` acting on the multiplier at slice end."""
    b = _phase(psi1, x, u1, p2, p4, p6, h, beta, 1.0)
    # |b| == |psi1|, so the end-slice phase can be rebuilt from psi1
    nu = _phase_with_density(chi, psi1, x, u1, p2, p4, p6, h, beta)
    chi_b = _linearized_half(nu, b, h, beta)
    chi_a = np.fft.ifft(np.fft.fft(chi_b) * np.conj(kin))
    nu = _phase_with_density(chi_a, psi0, x, u0, p2, p4, p6, h, beta)
    return _linearized_half(nu, psi0, h, beta)


@numba.njit(**_JIT)
def _phase_with_density(chi, psi, x, u, p2, p4, p6, h, beta):
    # chi * exp(+i h (V + beta |psi|^2))
    n = chi.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for j in range(n):
        d2 = (x[j] - u) ** 2
        v = d2 * (p2 + d2 * (p4 + d2 * p6))
        z = psi[j]
        theta = h * (v + beta * (z.real * z.real + z.imag * z.imag))
        out[j] = chi[j] * complex(np.cos(theta), np.sin(theta))
    return out


@numba.njit(**_JIT)
def forward(psi0, u, x, kin, h, beta, p2, p4, p6, store):
    """Propagate along ``u``; returns (final, trajectory, first bad step)."""
    n_t = u.shape[0]
    n = psi0.shape[0]
    traj = np.empty((n_t if store else 1, n), dtype=np.complex128)
    traj[0] = psi0
    psi = psi0.copy()
    for k in range(n_t - 1):
        psi = step(psi, x, u[k], u[k + 1], kin, h, beta, p2, p4, p6)
        if not np.isfinite(psi[0].real + psi[0].imag):
            return psi, traj, k
        if store:
            traj[k + 1] = psi
    return psi, traj, -1


@numba.njit(**_JIT)
def backward(chi_T, traj, u, x, kin, h, beta, p2, p4, p6, dx):
    """Adjoint sweep; returns (multipliers, Re<chi|dH/du|psi> per time point)."""
    n_t = u.shape[0]
    n = chi_T.shape[0]
    chis = np.empty((n_t, n), dtype=np.complex128)
    g = np.empty(n_t)
    chi = chi_T.copy()
    chis[n_t - 1] = chi
    for k in range(n_t - 1, -1, -1):
        if k < n_t - 1:
            chi = adjoint_step(chi, traj[k], traj[k + 1], x, u[k], u[k + 1],
                               kin, h, beta, p2, p4, p6)
            if not np.isfinite(chi[0].real + chi[0].imag):
                g[:] = np.nan
                return chis, g, k
            chis[k] = chi
        dv = potential_du(x, u[k], p2, p4, p6)
        acc = 0.0
        for j in range(n):
            z = np.conj(chi[j]) * traj[k, j]
            acc += dv[j] * z.real
        g[k] = acc * dx
    return chis, g, -1


@numba.njit(**_JIT)
def _rotation(psi, x, u, p2, p4, p6, h, beta):
    n = psi.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for j in range(n):
        d2 = (x[j] - u) ** 2
        v = d2 * (p2 + d2 * (p4 + d2 * p6))
        z = psi[j]
        theta = -h * (v + beta * (z.real * z.real + z.imag * z.imag))
        out[j] = complex(np.cos(theta), np.sin(theta))
    return out


@numba.njit(**_JIT)
def tangent(psi0, u, du, x, kin, h, beta, p2, p4, p6):
    """Co-propagate the state with its derivatives along directions ``du``.

    ``du`` has shape (M, N): one control-space direction per row.  Returns the
    final state and the (M, n) final state derivatives.
    """
    n_t = u.shape[0]
    m = du.shape[0]
    n = psi0.shape[0]
    psi = psi0.copy()
    dpsi = np.zeros((m, n), dtype=np.complex128)
    for k in range(n_t - 1):
        rot_a = _rotation(psi, x, u[k], p2, p4, p6, h, beta)
        a = psi * rot_a
        dv0 = potential_du(x, u[k], p2, p4, p6)
        b = np.fft.ifft(np.fft.fft(a) * kin)
        rot_b = _rotation(b, x, u[k + 1], p2, p4, p6, h, beta)
        out = b * rot_b
        dv1 = potential_du(x, u[k + 1], p2, p4, p6)
        for i in range(m):
            d = dpsi[i]
            da = np.empty(n, dtype=np.complex128)
            for j in range(n):
                r = psi[j].real * d[j].real + psi[j].imag * d[j].imag
                da[j] = rot_a[j] * d[j] - 1j * h * (dv0[j] * du[i, k] + 2.0 * beta * r) * a[j]
            db = np.fft.ifft(np.fft.fft(da) * kin)
            for j in range(n):
                r = b[j].real * db[j].real + b[j].imag * db[j].imag
                dpsi[i, j] = rot_b[j] * db[j] - 1j * h * (dv1[j] * du[i, k + 1] + 2.0 * beta * r) * out[j]
        psi = out
    return psi, dpsi


@numba.njit(**_JIT)
def krotov_forward(psi0, u_old, chis, shape, alpha, x, kin, h, beta, p2, p4, p6, dx):
    """Sequential forward sweep updating the control slice by slice.

    The update at time point ``k + 1`` is evaluated with the state reached at
    that point when the old control sample closes the slice; the slice is then
    closed again with the updated sample.
    """
    n_t = u_old.shape[0]
    n = psi0.shape[0]
    u_new = u_old.copy()
    traj = np.empty((n_t, n), dtype=np.complex128)
    traj[0] = psi0
    psi = psi0.copy()
    for k in range(n_t - 1):
        a = _phase(psi, x, u_new[k], p2, p4, p6, h, beta, -1.0)
        b = np.fft.ifft(np.fft.fft(a) * kin)
        pred = _phase(b, x, u_old[k + 1], p2, p4, p6, h, beta, -1.0)
        dv = potential_du(x, u_old[k + 1], p2, p4, p6)
        acc = 0.0
        chi = chis[k + 1]
        for j in range(n):
            z = np.conj(chi[j]) * pred[j]
            acc += dv[j] * z.real
        u_new[k + 1] = u_old[k + 1] + alpha * shape[k + 1] * acc * dx
        psi = _phase(b, x, u_new[k + 1], p2, p4, p6, h, beta, -1.0)
        if not np.isfinite(psi[0].real + psi[0].imag):
            return u_new, traj, k
        traj[k + 1] = psi
    return u_new, traj, -1
