# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for time-dependent sparse Hamiltonians.

The Hamiltonian is stored as one merged CSR pattern in which every stored entry
carries the index of the oscillating component it belongs to, so
H(t) x = sum_entries data[p] * phase[term[p]] * x[indices[p]] is one pass.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

ctypedef double complex cplx


cdef inline void _phases(const double[::1] nus, double t, cplx[::1] ph) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(nus.shape[0]):
        ph[k] = cos(nus[k] * t) + 1j * sin(nus[k] * t)


cdef inline void _hx(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
                     const int[::1] term, const cplx[::1] ph, const cplx[::1] x,
                     cplx[::1] out) noexcept nogil:
    cdef Py_ssize_t r, p, n = indptr.shape[0] - 1
    cdef cplx acc
    for r in range(n):
        acc = 0
        for p in range(indptr[r], indptr[r + 1]):
            acc = acc + data[p] * ph[term[p]] * x[indices[p]]
        out[r] = acc


def tdmatvec(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
             const int[::1] term, const double[::1] nus, double t, const cplx[::1] x):
    """Return H(t) @ x."""
    cdef cplx[::1] ph = np.empty(nus.shape[0], dtype=np.complex128)
    out = np.empty(indptr.shape[0] - 1, dtype=np.complex128)
    cdef cplx[::1] o = out
    with nogil:
        _phases(nus, t, ph)
        _hx(indptr, indices, data, term, ph, x, o)
    return out


def rk4_schrodinger(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
                    const int[::1] term, const double[::1] nus, psi0,
                    double t0, double dt, long nsteps):
    """Classic fixed-step RK4 for i dpsi/dt = H(t) psi; returns the state at t0 + nsteps*dt."""
    cdef Py_ssize_t n = indptr.shape[0] - 1, i
    cdef long s
    cdef double t
    y_arr = np.array(psi0, dtype=np.complex128, copy=True)
    cdef cplx[::1] y = y_arr
    cdef cplx[::1] k1 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k2 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k3 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k4 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] tmp = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] ph0 = np.empty(nus.shape[0], dtype=np.complex128)
    cdef cplx[::1] phm = np.empty(nus.shape[0], dtype=np.complex128)
    cdef cplx[::1] ph1 = np.empty(nus.shape[0], dtype=np.complex128)
    cdef cplx mi = -1j
    cdef cplx h2 = 0.5 * dt, h6 = dt / 6.0
    with nogil:
        for s in range(nsteps):
            t = t0 + s * dt
            _phases(nus, t, ph0)
            _phases(nus, t + 0.5 * dt, phm)
            _phases(nus, t + dt, ph1)
            _hx(indptr, indices, data, term, ph0, y, k1)
            for i in range(n):
                k1[i] = mi * k1[i]
                tmp[i] = y[i] + h2 * k1[i]
            _hx(indptr, indices, data, term, phm, tmp, k2)
            for i in range(n):
                k2[i] = mi * k2[i]
                tmp[i] = y[i] + h2 * k2[i]
            _hx(indptr, indices, data, term, phm, tmp, k3)
            for i in range(n):
                k3[i] = mi * k3[i]
                tmp[i] = y[i] + dt * k3[i]
            _hx(indptr, indices, data, term, ph1, tmp, k4)
            for i in range(n):
                y[i] = y[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + mi * k4[i])
    return y_arr
