"""Pure-Python/NumPy fallback for the compiled kernels (same signatures)."""
import numpy as np
import scipy.sparse as sp


def _split(indptr, indices, data, term, n_terms):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    mats = []
    for k in range(n_terms):
        sel = term == k
        mats.append(sp.csr_matrix((data[sel], (rows[sel], indices[sel])), shape=(n, n)))
    return mats


_cache: dict = {}


def _mats(indptr, indices, data, term, n_terms):
    key = (id(data), data.ctypes.data, len(data))
    hit = _cache.get(key)
    if hit is None or hit[0] is not data:
        if len(_cache) > 32:
            _cache.clear()
        hit = (data, _split(indptr, indices, data, term, n_terms))
        _cache[key] = hit
    return hit[1]


def tdmatvec(indptr, indices, data, term, nus, t, x):
    mats = _mats(indptr, indices, data, term, len(nus))
    out = np.zeros(len(indptr) - 1, dtype=complex)
    for m, nu in zip(mats, nus):
        out += np.exp(1j * nu * t) * (m @ x)
    return out


def rk4_schrodinger(indptr, indices, data, term, nus, psi0, t0, dt, nsteps):
    mats = _mats(indptr, indices, data, term, len(nus))
    nus = np.asarray(nus)

    def f(t, y):
        ph = np.exp(1j * nus * t)
        acc = np.zeros_like(y)
        for m, c in zip(mats, ph):
            acc += c * (m @ y)
        return -1j * acc

    y = np.array(psi0, dtype=complex)
    for s in range(nsteps):
        t = t0 + s * dt
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
