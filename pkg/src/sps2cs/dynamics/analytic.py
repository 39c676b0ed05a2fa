"""Closed-form maps for the ideal evolutions (resonant swap, dispersive phase, conditional drive)."""
from __future__ import annotations

import numpy as np

from ..device import DerivedParams
from ..hilbert import HilbertError, HilbertSpace, StateVector

G, E, F = 0, 1, 2


class SupportError(HilbertError):
    """State has weight outside the subspace where a closed-form map applies."""


def _tensor(state: StateVector) -> np.ndarray:
    return state.amplitudes.reshape(state.space.dims).astype(complex)


def _vector(space: HilbertSpace, t: np.ndarray) -> StateVector:
    return StateVector(space, t.reshape(-1))


def apply_local(state: StateVector, U: np.ndarray, label: str) -> StateVector:
    """Apply a single-subsystem matrix ``U`` to the subsystem ``label``."""
    ax = state.space.index(label)
    U = np.asarray(U.toarray() if hasattr(U, "toarray") else U)
    if U.shape != (state.space.dims[ax],) * 2:
        raise HilbertError(f"matrix shape {U.shape} does not match subsystem {label!r}")
    t = np.moveaxis(np.tensordot(U, _tensor(state), axes=([1], [ax])), 0, ax)
    return _vector(state.space, t)


def apply_pair(state: StateVector, U: np.ndarray, labels: tuple[str, str]) -> StateVector:
    """Apply a two-subsystem matrix (row-major over ``labels``)."""
    a, b = (state.space.index(l) for l in labels)
    da, db = state.space.dims[a], state.space.dims[b]
    U4 = np.asarray(U).reshape(da, db, da, db)
    t = np.tensordot(U4, _tensor(state), axes=([2, 3], [a, b]))
    t = np.moveaxis(t, [0, 1], [a, b])
    return _vector(state.space, t)


def _weight(t: np.ndarray, mask: np.ndarray) -> float:
    return float(np.sum(np.abs(t[mask]) ** 2))


def evolve_rabi(state: StateVector, g_r: float, t: float, cavity: str = "c1", tol: float = 1e-10) -> StateVector:
    """Resonant qutrit-cavity swap: |g,1> -> cos(g t)|g,1> - i sin(g t)|e,0>, |g,0> fixed."""
    sp_ = state.space
    q, c = sp_.index("qutrit"), sp_.index(cavity)
    T = _tensor(state)
    Tq = np.moveaxis(T, (q, c), (0, 1))
    allowed = np.zeros(Tq.shape[:2], bool)
    allowed[G, 0] = allowed[G, 1] = allowed[E, 0] = True
    bad = float(np.sum(np.abs(Tq[~allowed]) ** 2))
    if bad > tol:
        raise SupportError(f"weight {bad:.2e} outside span{{|g,0>,|g,1>,|e,0>}}")
    cs, sn = np.cos(g_r * t), np.sin(g_r * t)
    out = Tq.copy()
    out[G, 1] = cs * Tq[G, 1] - 1j * sn * Tq[E, 0]
    out[E, 0] = cs * Tq[E, 0] - 1j * sn * Tq[G, 1]
    return _vector(sp_, np.moveaxis(out, (0, 1), (q, c)))


def evolve_dispersive_map(state: StateVector, derived: DerivedParams, t: float, tol: float = 1e-10) -> StateVector:
    """exp(-i H_eff t) with H_eff = -sum lambda_j sigma_g n_j - sum lambda_j' sigma_e n_j'."""
    sp_ = state.space
    q = sp_.index("qutrit")
    T = _tensor(state)
    fw = float(np.sum(np.abs(np.take(T, F, axis=q)) ** 2))
    if fw > tol:
        raise SupportError(f"|f> population {fw:.2e}; the dispersive map needs an empty f level")
    phase_g = np.zeros(sp_.dims)
    phase_e = np.zeros(sp_.dims)
    grids = np.indices(sp_.dims)
    for lab, lam in derived.lambda_.items():
        if lab in sp_:
            phase_g = phase_g + lam * grids[sp_.index(lab)]
    for lab, lam in derived.lambda_p.items():
        if lab in sp_:
            phase_e = phase_e + lam * grids[sp_.index(lab)]
    qn = grids[q]
    ph = np.where(qn == G, phase_g, 0.0) + np.where(qn == E, phase_e, 0.0)
    return _vector(sp_, T * np.exp(1j * ph * t))


def conditional_drive_unitary(omega_tilde: float, Omega_p: float, t: float, phi: float, dim: int) -> np.ndarray:
    """(qutrit, cavity 1') unitary: Eq.-14 rotation on the vacuum, Eq.-15 phases for n >= 1.

    Ordering is row-major over (qutrit level, photon number); |f> is left untouched.
    """
    U = np.zeros((3, dim, 3, dim), complex)
    c, s = np.cos(Omega_p * t), np.sin(Omega_p * t)
    w = omega_tilde * t
    U[G, 0, G, 0] = np.exp(1j * w) * c
    U[E, 0, G, 0] = -1j * np.exp(-1j * phi) * np.exp(-1j * w) * s
    U[G, 0, E, 0] = -1j * np.exp(1j * phi) * np.exp(1j * w) * s
    U[E, 0, E, 0] = np.exp(-1j * w) * c
    for n in range(1, dim):
        U[G, n, G, n] = np.exp(1j * w * (2 * n + 1))
        U[E, n, E, n] = np.exp(-1j * w * (2 * n + 1))
    for n in range(dim):
        U[F, n, F, n] = 1.0
    return U.reshape(3 * dim, 3 * dim)


def evolve_conditional_drive_map(state: StateVector, derived: DerivedParams, t: float, phi: float,
                                 Omega_p: float, cavity: str = "c1p", tol: float = 1e-6) -> StateVector:
    """Apply the conditional drive: the vacuum branch rotates, photon-carrying branches
    only acquire the ac-Stark phases exp(+-i omega_tilde (2n+1) t)."""
    sp_ = state.space
    q, c = sp_.index("qutrit"), sp_.index(cavity)
    T = np.moveaxis(_tensor(state), (q, c), (0, 1))
    fw = float(np.sum(np.abs(T[F]) ** 2))
    if fw > tol:
        raise SupportError(f"|f> population {fw:.2e} during the conditional drive")
    cross = float(np.sum(np.abs(T[E, 1:]) ** 2))
    if cross > tol:
        raise SupportError(f"weight {cross:.2e} on |e> with photons in {cavity}; branches are not correlated")
    U = conditional_drive_unitary(derived.omega_tilde, Omega_p, t, phi, sp_.dim_of(cavity))
    return apply_pair(state, U, ("qutrit", cavity))
