"""Truncated Fock-space tensor algebra.

Operators are stored as CSR matrices on the full tensor-product space,
states as dense vectors, density matrices as dense arrays. Subsystem order
is always the order of ``HilbertSpace.labels``; the canonical layout used by
the rest of the package is ``(qutrit, c1, ..., cn, c1p, ..., cnp)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

QUTRIT_LEVELS = ("g", "e", "f")


class HilbertError(ValueError):
    """Invalid dimension, label or space mismatch."""


class TruncationError(HilbertError):
    """Fock cutoff too small for the requested state."""

    def __init__(self, message: str, leakage: float):
        super().__init__(message)
        self.leakage = leakage


class FidelityClampWarning(RuntimeWarning):
    """Fidelity exceeded 1 by more than round-off before clamping."""


@dataclass(frozen=True)
class HilbertSpace:
    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __init__(self, dims: Sequence[int], labels: Sequence[str] | None = None):
        dims = tuple(int(d) for d in dims)
        if labels is None:
            labels = tuple(f"s{i}" for i in range(len(dims)))
        labels = tuple(labels)
        if not dims:
            raise HilbertError("a Hilbert space needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise HilbertError(f"every subsystem dimension must be >= 2, got {dims}")
        if len(labels) != len(dims):
            raise HilbertError("labels and dims differ in length")
        if len(set(labels)) != len(labels):
            raise HilbertError(f"duplicate subsystem labels: {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise HilbertError(f"unknown subsystem {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def basis_index(self, **levels: int) -> int:
        """Flat index of a product basis state; unspecified subsystems sit at 0."""
        idx = [0] * len(self.dims)
        for label, n in levels.items():
            idx[self.index(label)] = n
        return int(np.ravel_multi_index(idx, self.dims))

    def subspace(self, keep: Iterable[str]) -> "HilbertSpace":
        keep = set(keep)
        for k in keep:
            self.index(k)
        pairs = [(d, l) for d, l in zip(self.dims, self.labels) if l in keep]
        return HilbertSpace([p[0] for p in pairs], [p[1] for p in pairs])


def mode_space(dim: int, label: str = "mode") -> HilbertSpace:
    return HilbertSpace((dim,), (label,))


def _csr(m) -> sp.csr_matrix:
    return sp.csr_matrix(m, dtype=complex)


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: sp.csr_matrix

    def __post_init__(self):
        m = _csr(self.matrix)
        D = self.space.dim
        if m.shape != (D, D):
            raise HilbertError(f"operator shape {m.shape} does not match space dimension {D}")
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T.tocsr())

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        diff = self.matrix - self.matrix.conj().T
        if diff.nnz == 0:
            return True
        scale = max(1.0, abs(self.matrix).max())
        return abs(diff).max() <= tol * scale

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise HilbertError("operators live on different spaces")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            if other.space != self.space:
                raise HilbertError("state and operator live on different spaces")
            return StateVector(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    def commutator(self, other: "Operator") -> "Operator":
        return self @ other - other @ self

    def expect(self, state: "StateVector | DensityMatrix") -> complex:
        if isinstance(state, StateVector):
            v = state.amplitudes
            return complex(np.vdot(v, self.matrix @ v))
        return complex(np.trace(self.matrix @ state.matrix))

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Operator":
        return cls(space, sp.csr_matrix((space.dim, space.dim), dtype=complex))

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls(space, sp.identity(space.dim, dtype=complex, format="csr"))


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (self.space.dim,):
            raise HilbertError(f"state length {v.shape[0]} does not match dimension {self.space.dim}")
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise HilbertError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / nrm, dict(self.meta))

    def overlap(self, other: "StateVector") -> complex:
        if other.space != self.space:
            raise HilbertError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_dm(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.dims)

    def __add__(self, other: "StateVector") -> "StateVector":
        if other.space != self.space:
            raise HilbertError("states live on different spaces")
        return StateVector(self.space, self.amplitudes + other.amplitudes)

    def __mul__(self, scalar) -> "StateVector":
        return StateVector(self.space, self.amplitudes * complex(scalar), dict(self.meta))

    __rmul__ = __mul__

    @classmethod
    def basis(cls, space: HilbertSpace, **levels: int) -> "StateVector":
        v = np.zeros(space.dim, dtype=complex)
        v[space.basis_index(**levels)] = 1.0
        return cls(space, v)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        D = self.space.dim
        if m.shape != (D, D):
            raise HilbertError(f"density matrix shape {m.shape} does not match dimension {D}")
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def hermitian_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def check(self, tol: float = 1e-7) -> None:
        """Raise unless Hermitian, unit trace and positive within ``tol``."""
        if self.hermitian_error() > tol:
            raise HilbertError(f"density matrix not Hermitian (err {self.hermitian_error():.2e})")
        if abs(self.trace() - 1) > tol:
            raise HilbertError(f"density matrix trace {self.trace():.9f} != 1")
        lo = self.min_eigenvalue()
        if lo < -tol:
            raise HilbertError(f"density matrix has negative eigenvalue {lo:.2e}")


# --- single-subsystem building blocks --------------------------------------

def annihilation(dim: int) -> Operator:
    if dim < 2:
        raise HilbertError(f"invalid mode dimension {dim}")
    n = np.arange(1, dim)
    m = sp.diags(np.sqrt(n).astype(complex), 1, shape=(dim, dim), format="csr")
    return Operator(mode_space(dim), m)


def number(dim: int) -> Operator:
    a = annihilation(dim)
    return a.dag() @ a


def _level(name: str) -> int:
    try:
        return QUTRIT_LEVELS.index(name)
    except ValueError:
        raise HilbertError(f"unknown qutrit level {name!r}; use one of {QUTRIT_LEVELS}") from None


def qutrit_transition(from_level: str, to_level: str) -> Operator:
    """``|to><from|`` on the ordered qutrit basis (g, e, f)."""
    m = np.zeros((3, 3), dtype=complex)
    m[_level(to_level), _level(from_level)] = 1.0
    return Operator(mode_space(3, "qutrit"), m)


def sigma_z() -> Operator:
    return qutrit_transition("e", "e") - qutrit_transition("g", "g")


def embed(op: Operator | np.ndarray | sp.spmatrix, space: HilbertSpace, which: str) -> Operator:
    """Kronecker-embed a single-subsystem operator with identities elsewhere."""
    k = space.index(which)
    local = op.matrix if isinstance(op, Operator) else _csr(op)
    if local.shape != (space.dims[k], space.dims[k]):
        raise HilbertError(
            f"operator of size {local.shape[0]} cannot act on {which!r} (dim {space.dims[k]})"
        )
    left = math.prod(space.dims[:k])
    right = math.prod(space.dims[k + 1:])
    parts = []
    if left > 1:
        parts.append(sp.identity(left, dtype=complex, format="csr"))
    parts.append(local)
    if right > 1:
        parts.append(sp.identity(right, dtype=complex, format="csr"))
    m = reduce(lambda x, y: sp.kron(x, y, format="csr"), parts)
    return Operator(space, m)


def destroy(space: HilbertSpace, which: str) -> Operator:
    return embed(annihilation(space.dim_of(which)), space, which)


def transition(space: HilbertSpace, from_level: str, to_level: str, which: str = "qutrit") -> Operator:
    return embed(qutrit_transition(from_level, to_level), space, which)


def tensor_states(space: HilbertSpace, factors: Sequence[np.ndarray | StateVector]) -> StateVector:
    vecs = [f.amplitudes if isinstance(f, StateVector) else np.asarray(f, dtype=complex) for f in factors]
    if [v.shape[0] for v in vecs] != list(space.dims):
        raise HilbertError("factor dimensions do not match the space")
    return StateVector(space, reduce(np.kron, vecs))


# --- coherent states and displacement ---------------------------------------

def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Unnormalized truncated Fock amplitudes of |alpha> (no renormalization)."""
    c = np.empty(dim, dtype=complex)
    c[0] = math.exp(-abs(alpha) ** 2 / 2)
    for k in range(1, dim):
        c[k] = c[k - 1] * alpha / math.sqrt(k)
    return c


def coherent_state(alpha: complex, dim: int, max_leakage: float = 1e-4) -> StateVector:
    c = coherent_amplitudes(alpha, dim)
    leakage = max(0.0, 1.0 - float(np.sum(np.abs(c) ** 2)))
    if leakage > max_leakage:
        raise TruncationError(
            f"|{alpha}> leaks {leakage:.3e} above the Fock cutoff {dim} (bound {max_leakage:.1e})",
            leakage,
        )
    return StateVector(mode_space(dim), c / np.linalg.norm(c), {"leakage": leakage})


def default_cutoff(nbar_max: float) -> int:
    """Poisson-tail cutoff: ceil(nbar + 5 sqrt(nbar)) + 4."""
    return int(math.ceil(nbar_max + 5 * math.sqrt(nbar_max))) + 4


def displacement(alpha: complex, dim: int, pad: int | None = None) -> Operator:
    """Truncated D(alpha) = exp(alpha a^dag - alpha^* a).

    The exponential is taken in a padded space and cropped, so the returned
    matrix elements are those of the untruncated operator to round-off for
    all levels well below the padded cutoff.
    """
    if dim < 2:
        raise HilbertError(f"invalid mode dimension {dim}")
    if pad is None:
        a2 = abs(alpha) ** 2
        pad = int(math.ceil(a2 + 8 * math.sqrt(a2 + 1))) + 20
    big = dim + pad
    a = annihilation(big).toarray()
    gen = 1j * (alpha * a.conj().T - np.conj(alpha) * a)  # Hermitian; D = exp(-i gen)
    w, v = np.linalg.eigh(gen)
    full = (v * np.exp(-1j * w)) @ v.conj().T
    return Operator(mode_space(dim), full[:dim, :dim])


def coherent_overlap(beta: complex, gamma: complex) -> complex:
    """<beta|gamma> for untruncated coherent states."""
    return complex(np.exp(-0.5 * abs(beta) ** 2 - 0.5 * abs(gamma) ** 2 + np.conj(beta) * gamma))


# --- figures of merit -------------------------------------------------------

def fidelity(psi: StateVector, rho: DensityMatrix | StateVector, imag_tol: float = 1e-9) -> float:
    """sqrt(<psi|rho|psi>), clamped to [0, 1]."""
    if rho.space != psi.space:
        raise HilbertError("fidelity arguments live on different spaces")
    v = psi.amplitudes
    if isinstance(rho, StateVector):
        val = complex(abs(np.vdot(v, rho.amplitudes)) ** 2)
    else:
        val = complex(np.vdot(v, rho.matrix @ v))
    if abs(val.imag) > imag_tol:
        raise HilbertError(f"<psi|rho|psi> has imaginary part {val.imag:.3e}; rho is not Hermitian")
    x = val.real
    if x > 1 + 1e-7:
        warnings.warn(f"fidelity^2 = {x:.10f} exceeds 1; clamped", FidelityClampWarning, stacklevel=2)
    return float(math.sqrt(min(max(x, 0.0), 1.0)))


def partial_trace(rho: DensityMatrix | StateVector, keep: Iterable[str]) -> DensityMatrix:
    space = rho.space
    keep = set(keep)
    for k in keep:
        space.index(k)
    idx_keep = [i for i, l in enumerate(space.labels) if l in keep]
    idx_drop = [i for i, l in enumerate(space.labels) if l not in keep]
    sub = space.subspace(keep)
    dk = sub.dim
    if isinstance(rho, StateVector):
        t = rho.tensor().transpose(idx_keep + idx_drop).reshape(dk, -1)
        return DensityMatrix(sub, t @ t.conj().T)
    nsub = len(space.dims)
    t = rho.matrix.reshape(space.dims + space.dims)
    perm = idx_keep + idx_drop + [nsub + i for i in idx_keep] + [nsub + i for i in idx_drop]
    dd = math.prod(space.dims[i] for i in idx_drop)
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return DensityMatrix(sub, np.einsum("ajbj->ab", t))


def entanglement_entropy(state: StateVector, keep: Iterable[str]) -> float:
    red = partial_trace(state, keep)
    w = np.linalg.eigvalsh(red.matrix)
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


# --- debugging text form -----------------------------------------------------

def to_text(obj: Operator | StateVector | DensityMatrix, atol: float = 0.0) -> str:
    """Label header followed by ``row col re im`` lines for every stored entry."""
    sp_ = obj.space
    kind = type(obj).__name__
    head = [
        f"# kind {kind}",
        "# dims " + " ".join(str(d) for d in sp_.dims),
        "# labels " + " ".join(sp_.labels),
    ]
    if isinstance(obj, StateVector):
        rows = np.flatnonzero(np.abs(obj.amplitudes) > atol)
        body = [f"{r} 0 {obj.amplitudes[r].real:.17g} {obj.amplitudes[r].imag:.17g}" for r in rows]
    else:
        m = sp.coo_matrix(obj.matrix)
        order = np.lexsort((m.col, m.row))
        body = [
            f"{m.row[i]} {m.col[i]} {m.data[i].real:.17g} {m.data[i].imag:.17g}"
            for i in order
            if abs(m.data[i]) > atol
        ]
    return "\n".join(head + body) + "\n"


def from_text(text: str) -> Operator | StateVector | DensityMatrix:
    kind, dims, labels = None, None, None
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].strip().partition(" ")
            if key == "kind":
                kind = rest.strip()
            elif key == "dims":
                dims = [int(x) for x in rest.split()]
            elif key == "labels":
                labels = rest.split()
            continue
        r, c, re_, im = line.split()
        entries.append((int(r), int(c), complex(float(re_), float(im))))
    if kind is None or dims is None:
        raise HilbertError("missing header in text form")
    space = HilbertSpace(dims, labels)
    D = space.dim
    if kind == "StateVector":
        v = np.zeros(D, dtype=complex)
        for r, _, z in entries:
            v[r] = z
        return StateVector(space, v)
    rows = [e[0] for e in entries]
    cols = [e[1] for e in entries]
    vals = [e[2] for e in entries]
    m = sp.coo_matrix((vals, (rows, cols)), shape=(D, D)).tocsr()
    if kind == "Operator":
        return Operator(space, m)
    if kind == "DensityMatrix":
        return DensityMatrix(space, m.toarray())
    raise HilbertError(f"unknown kind {kind!r}")
