"""Hot kernels for H(t) = sum_k M_k e^{i nu_k t}.

The compiled extension is used when importable; set ``SPS2CS_KERNELS=python``
to force the NumPy fallback.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("SPS2CS_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


class PackedHamiltonian:
    """Merged CSR storage of oscillating components, each entry tagged with its term index."""

    def __init__(self, components, dim: int | None = None, backend=None):
        comps = [(sp.coo_matrix(m), float(nu)) for m, nu in components]
        if dim is None:
            if not comps:
                raise ValueError("dimension required for an empty Hamiltonian")
            dim = comps[0][0].shape[0]
        self.dim = dim
        rows, cols, vals, terms = [], [], [], []
        for k, (m, _) in enumerate(comps):
            rows.append(m.row)
            cols.append(m.col)
            vals.append(m.data.astype(complex))
            terms.append(np.full(m.nnz, k, dtype=np.int32))
        if comps:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
            order = np.lexsort((c, r))
            self.indices = np.ascontiguousarray(c[order], dtype=np.int32)
            self.data = np.ascontiguousarray(np.concatenate(vals)[order])
            self.term = np.ascontiguousarray(np.concatenate(terms)[order])
            counts = np.bincount(r, minlength=dim)
        else:
            self.indices = np.zeros(0, np.int32)
            self.data = np.zeros(0, complex)
            self.term = np.zeros(0, np.int32)
            counts = np.zeros(dim, dtype=np.int64)
        self.indptr = np.zeros(dim + 1, dtype=np.int32)
        np.cumsum(counts, out=self.indptr[1:])
        self.nus = np.ascontiguousarray([nu for _, nu in comps] or [0.0], dtype=float)
        self._impl = backend or _impl

    @property
    def nu_max(self) -> float:
        return float(np.max(np.abs(self.nus))) if self.nus.size else 0.0

    def matvec(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=complex)
        return self._impl.tdmatvec(self.indptr, self.indices, self.data, self.term, self.nus, float(t), x)

    def rk4(self, psi0: np.ndarray, t0: float, dt: float, nsteps: int) -> np.ndarray:
        psi0 = np.ascontiguousarray(psi0, dtype=complex)
        return self._impl.rk4_schrodinger(self.indptr, self.indices, self.data, self.term, self.nus,
                                          psi0, float(t0), float(dt), int(nsteps))


def pack(H) -> PackedHamiltonian:
    """Pack a TimeDependentHamiltonian."""
    return PackedHamiltonian(H.components(), dim=H.space.dim)
