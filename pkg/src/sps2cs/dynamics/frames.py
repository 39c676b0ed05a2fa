"""Static frames, adiabatic elimination and exact block propagators.

Every interaction-picture Hamiltonian built in :mod:`sps2cs.device` descends
from a time-independent lab Hamiltonian, so there is a diagonal ``D`` with
``B_k e^{i nu_k t} = e^{-iDt} B_k e^{iDt}`` for every term.  Writing
``psi = e^{-iDt} phi`` gives ``i dphi/dt = (H_s - D) phi`` with ``H_s = H(0)``,
which is static and can be propagated exactly block by block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..device import Term, TimeDependentHamiltonian
from ..hilbert import HilbertSpace, Operator


class FrameError(RuntimeError):
    """No static frame exists for the requested Hamiltonian/collapse set."""


# --- adiabatic elimination -----------------------------------------------------

def eliminate_fast(H: TimeDependentHamiltonian, cutoff: float) -> TimeDependentHamiltonian:
    """Second-order elimination of every term with ``|nu| >= cutoff``.

    With ``H_fast = sum_k h_k e^{-i w_k t} + h.c.`` (``w_k > 0``) the effective
    Hamiltonian is ``sum_{k,l} (1/w_kl) [h_k^dag, h_l] e^{i(w_k - w_l)t}`` with
    ``1/w_kl = (1/w_k + 1/w_l)/2``; pairs whose difference frequency is itself
    above the cutoff average out and are dropped.
    """
    slow = [t for t in H.terms if abs(t.nu) < cutoff]
    fast = [t for t in H.terms if abs(t.nu) >= cutoff]
    hs = []
    for t in fast:
        if t.nu > 0:
            hs.append((t.op.matrix.conj().T.tocsr(), t.nu, t.name))
        else:
            hs.append((t.op.matrix, -t.nu, t.name))
    static = sp.csr_matrix((H.space.dim, H.space.dim), dtype=complex)
    extra = []
    for i, (hi, wi, ni) in enumerate(hs):
        hid = hi.conj().T.tocsr()
        for j in range(i, len(hs)):
            hj, wj, nj = hs[j]
            if abs(wi - wj) >= cutoff:
                continue
            C = 0.5 * (1 / wi + 1 / wj) * (hid @ hj - hj @ hid)
            C.eliminate_zeros()
            if C.nnz == 0:
                continue
            if i == j:
                static = static + C
            else:
                extra.append(Term(Operator(H.space, C), wi - wj, f"{ni}*{nj}"))
    static_terms = list(H.static_terms)
    static.eliminate_zeros()
    if static.nnz:
        static_terms.append(Operator(H.space, 0.5 * (static + static.conj().T)))
    return TimeDependentHamiltonian(H.space, slow + extra, static_terms)


# --- static frame ----------------------------------------------------------------

def _quantum_numbers(space: HilbertSpace) -> np.ndarray:
    grids = np.indices(space.dims).reshape(len(space.dims), -1)
    return grids.T  # (D, n_subsystems)


@dataclass
class StaticFrame:
    """Diagonal frame generator ``d`` (rad/s) with ``d = sum_s f_s(n_s)``.

    Each subsystem contributes an arbitrary level-energy table (linear in the
    photon number for cavities, a free table for the qutrit), so ladder and
    projector collapse operators only pick up a global phase in the frame.
    """

    space: HilbertSpace
    d: np.ndarray
    residual: float

    def to_frame(self, psi: np.ndarray, t: float) -> np.ndarray:
        return np.exp(1j * self.d * t) * psi

    def from_frame(self, phi: np.ndarray, t: float) -> np.ndarray:
        return np.exp(-1j * self.d * t) * phi


def solve_static_frame(H: TimeDependentHamiltonian, extra_ops=(), rtol: float = 1e-12) -> StaticFrame:
    """Find ``d`` with ``d_i - d_j = -nu`` for every nonzero ``(i, j)`` of every term.

    Unknowns: one frequency per cavity (energy linear in photon number) and one
    energy per level for subsystems named ``qutrit``.  Raises :class:`FrameError`
    when the constraints are inconsistent.
    """
    space = H.space
    qn = _quantum_numbers(space)
    cols = []  # unknown layout
    for s, (lab, dim) in enumerate(zip(space.labels, space.dims)):
        if lab == "qutrit":
            cols += [(s, lvl) for lvl in range(dim)]
        else:
            cols.append((s, None))

    def feature(idx):
        f = np.zeros((len(idx), len(cols)))
        for c, (s, lvl) in enumerate(cols):
            if lvl is None:
                f[:, c] = qn[idx, s]
            else:
                f[:, c] = qn[idx, s] == lvl
        return f

    rows, rhs = [], []
    nu_scale = 1.0
    for term in H.terms:
        A = term.op.matrix.tocoo()
        if A.nnz == 0:
            continue
        diff = feature(A.row) - feature(A.col)
        key, first = np.unique(np.round(diff, 12), axis=0, return_index=True)
        rows.append(diff[first])
        rhs.append(np.full(len(first), -term.nu))
        nu_scale = max(nu_scale, abs(term.nu))
    for S in [*H.static_terms, *extra_ops]:
        M = S.matrix.tocoo() if hasattr(S, "matrix") else sp.coo_matrix(S)
        off = M.row != M.col
        if not off.any():
            continue
        diff = feature(M.row[off]) - feature(M.col[off])
        _, first = np.unique(np.round(diff, 12), axis=0, return_index=True)
        rows.append(diff[first])
        rhs.append(np.zeros(len(first)))
    if not rows:
        return StaticFrame(space, np.zeros(space.dim), 0.0)
    Amat = np.vstack(rows)
    b = np.concatenate(rhs)
    x, *_ = np.linalg.lstsq(Amat, b, rcond=None)
    res = float(np.max(np.abs(Amat @ x - b))) if len(b) else 0.0
    if res > rtol * nu_scale:
        raise FrameError(f"no static frame: constraint residual {res:.3e} rad/s")
    d = feature(np.arange(space.dim)) @ x
    return StaticFrame(space, d, res)


def frame_hamiltonian(H: TimeDependentHamiltonian, frame: StaticFrame) -> sp.csr_matrix:
    """Static ``H_s - D`` acting on frame states."""
    return (H.at(0.0) - sp.diags(frame.d)).tocsr()


# --- block propagators ----------------------------------------------------------

def find_blocks(*mats) -> list[np.ndarray]:
    """Connected components of the union sparsity pattern."""
    D = mats[0].shape[0]
    pat = sp.csr_matrix((D, D))
    for m in mats:
        if m is None:
            continue
        pat = pat + (abs(sp.csr_matrix(m)) > 0).astype(float)
    n, labels = connected_components(pat, directed=False)
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=n)
    return np.split(order, np.cumsum(counts)[:-1])


class _Group:
    """All blocks of one size, diagonalised together."""

    __slots__ = ("idx", "w", "V", "Vinv", "G")

    def __init__(self, idx, w, V, Vinv, G):
        self.idx, self.w, self.V, self.Vinv, self.G = idx, w, V, Vinv, G


def _diagonalise(idx: np.ndarray, Ms: np.ndarray, cond_limit: float):
    """Batched eigendecomposition; returns (group, indices of blocks that need expm)."""
    herm = np.allclose(Ms, np.conj(np.swapaxes(Ms, 1, 2)), atol=0, rtol=0)
    if herm:
        w, V = np.linalg.eigh(Ms)
        return _Group(idx, w.astype(complex), V, np.conj(np.swapaxes(V, 1, 2)), None), []
    w, V = np.linalg.eig(Ms)
    cond = np.linalg.cond(V)
    good = np.isfinite(cond) & (cond <= cond_limit)
    bad = list(np.nonzero(~good)[0])
    if not good.any():
        return None, bad
    V = V[good]
    G = np.conj(np.swapaxes(V, 1, 2)) @ V
    return _Group(idx[good], w[good], V, np.linalg.inv(V), G), bad


class BlockPropagator:
    """Exact ``exp(-i M tau)`` for a static, block-diagonal ``M``.

    ``M = H - (i/2) K`` may be non-Hermitian (``K`` a sum of ``rate * L^dag L``).
    Blocks of equal size are diagonalised as one batch and the eigenvector
    matrices are assembled into block-diagonal sparse ``V``, ``V^-1`` and Gram
    matrices, so evolving and norm evaluation are a few sparse products.
    Ill-conditioned blocks fall back to ``expm``.
    """

    def __init__(self, H: sp.spmatrix, K: sp.spmatrix | None = None, cond_limit: float = 1e8):
        H = sp.csr_matrix(H, dtype=complex)
        M = H if K is None else (H - 0.5j * sp.csr_matrix(K, dtype=complex)).tocsr()
        D = self.dim = M.shape[0]
        self.hermitian = K is None or sp.csr_matrix(K).nnz == 0
        by_size = {}
        for idx in find_blocks(M):
            by_size.setdefault(len(idx), []).append(idx)
        self.w = np.zeros(D, complex)
        self.dense = []  # (idx, M_block) handled with expm
        self.sizes = {}
        parts = {"V": [], "Vinv": [], "G": []}

        def add(name, idx, mats):
            r = np.repeat(idx, idx.shape[1], axis=1).reshape(-1)
            c = np.tile(idx, (1, idx.shape[1])).reshape(-1)
            parts[name].append((r, c, mats.reshape(-1)))

        for size, blocks in sorted(by_size.items()):
            idx = np.array(blocks, dtype=int)
            self.sizes[size] = len(blocks)
            if size == 1:
                self.w[idx[:, 0]] = M.diagonal()[idx[:, 0]]
                eye = np.ones((len(idx), 1, 1), complex)
                for name in parts:
                    add(name, idx, eye)
                continue
            Ms = np.stack([M[b][:, b].toarray() for b in blocks])
            grp, bad = _diagonalise(idx, Ms, cond_limit)
            if grp is not None:
                self.w[grp.idx] = grp.w
                add("V", grp.idx, grp.V)
                add("Vinv", grp.idx, grp.Vinv)
                G = grp.G if grp.G is not None else np.broadcast_to(np.eye(size), grp.V.shape)
                add("G", grp.idx, np.ascontiguousarray(G))
            self.dense.extend((idx[k], Ms[k]) for k in bad)

        def assemble(name):
            if not parts[name]:
                return sp.csr_matrix((D, D), dtype=complex)
            r, c, v = (np.concatenate(x) for x in zip(*parts[name]))
            return sp.csr_matrix((v, (r, c)), shape=(D, D), dtype=complex)

        self.V, self.Vinv = assemble("V"), assemble("Vinv")
        self.G = None if self.hermitian else assemble("G")

    def coefficients(self, psi: np.ndarray) -> list:
        return [self.Vinv @ psi, *(psi[idx] for idx, _ in self.dense)]

    def evolve(self, coeffs: list, tau: float) -> np.ndarray:
        psi = self.V @ (np.exp(-1j * self.w * tau) * coeffs[0])
        for (idx, Mb), c in zip(self.dense, coeffs[1:]):
            psi[idx] = sla.expm(-1j * tau * Mb) @ c
        return psi

    def norm2(self, coeffs: list, tau: float) -> float:
        x = np.exp(-1j * self.w * tau) * coeffs[0]
        tot = float(np.vdot(x, x).real) if self.G is None else float(np.vdot(x, self.G @ x).real)
        for (idx, Mb), c in zip(self.dense, coeffs[1:]):
            v = sla.expm(-1j * tau * Mb) @ c
            tot += float(np.vdot(v, v).real)
        return tot

    def apply(self, psi: np.ndarray, tau: float) -> np.ndarray:
        return self.evolve(self.coefficients(psi), tau)

    @property
    def max_block(self) -> int:
        return max(self.sizes, default=1)


def damping_operator(collapse, dim: int) -> sp.csr_matrix | None:
    """``K = sum rate * L^dag L``."""
    if not collapse:
        return None
    K = sp.csr_matrix((dim, dim), dtype=complex)
    for L, rate in collapse:
        m = L.matrix if hasattr(L, "matrix") else sp.csr_matrix(L)
        K = K + rate * (m.conj().T @ m)
    return K.tocsr()


ELIMINATION_CUTOFF = 2 * math.pi * 1e9


# --- adiabatic dressing -----------------------------------------------------------

@dataclass
class Dressing:
    """Bare -> dressed map of a static coupling switched on adiabatically.

    ``W`` sends each bare basis state to the eigenvector of the frame
    Hamiltonian it connects to adiabatically (maximum-weight assignment within
    each block).  ``d`` is the frame generator, needed to undo the map at a
    later time in the interaction picture.
    """

    W: sp.csr_matrix
    d: np.ndarray

    def dress(self, psi: np.ndarray) -> np.ndarray:
        return self.W @ psi

    def undress(self, psi: np.ndarray, t: float) -> np.ndarray:
        ph = np.exp(1j * self.d * t)
        return np.conj(ph) * (self.W.conj().T @ (ph * psi))


def dressing(H: TimeDependentHamiltonian, cutoff: float | None = ELIMINATION_CUTOFF) -> Dressing:
    from scipy.optimize import linear_sum_assignment

    if cutoff is not None:
        H = eliminate_fast(H, cutoff)
    frame = solve_static_frame(H)
    M = frame_hamiltonian(H, frame)
    rows, cols, vals = [], [], []
    for idx in find_blocks(M):
        if len(idx) == 1:
            rows.append(idx[0]); cols.append(idx[0]); vals.append(1.0)
            continue
        _, V = np.linalg.eigh(M[idx][:, idx].toarray())
        r, c = linear_sum_assignment(-np.abs(V) ** 2)
        V = V[:, c[np.argsort(r)]]  # column k now continues bare state k
        ph = np.diag(V).copy()
        V = V * (np.conj(ph) / np.abs(ph))
        bi, bj = np.nonzero(np.abs(V) > 0)
        rows.extend(idx[bi]); cols.extend(idx[bj]); vals.extend(V[bi, bj])
    W = sp.csr_matrix((vals, (rows, cols)), shape=M.shape, dtype=complex)
    return Dressing(W, frame.d)
