"""Numerical propagation: Schrödinger, Lindblad master equation, quantum trajectories."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ..device import TimeDependentHamiltonian
from ..hilbert import DensityMatrix, HilbertError, HilbertSpace, Operator, StateVector
from ..kernels import pack
from .frames import (
    BlockPropagator,
    FrameError,
    StaticFrame,
    damping_operator,
    eliminate_fast,
    frame_hamiltonian,
    solve_static_frame,
)

DENSE_LIMIT = 6000
MEMORY_BUDGET_ENV = "SPS2CS_MEMORY_GB"
# DOP853 keeps about 16 copies of the state vector
_DOP853_COPIES = 16


def memory_budget() -> float:
    """Bytes available to a dense density-matrix integration (default 4 GiB)."""
    try:
        return float(os.environ.get(MEMORY_BUDGET_ENV, "4")) * 2**30
    except ValueError:
        return 4 * 2**30


class IntegrationError(RuntimeError):
    """Integrator failure: step underflow, norm/trace drift or lost positivity."""


class MemoryBudgetError(RuntimeError):
    pass


@dataclass
class PropagationConfig:
    t_final: float
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None
    method: str = "auto"  # auto | exact | rk4 | dop853
    sample_times: Sequence[float] | None = None

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "exact", "rk4", "dop853"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class TrajectoryConfig:
    n_trajectories: int = 200
    seed: int = 0
    jump_tol: float = 1e-10
    conditioned: bool = True

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")


@dataclass
class PropagationResult:
    state: StateVector | DensityMatrix
    times: np.ndarray
    samples: list
    method: str
    norm_drift: float = 0.0
    nsteps: int = 0


def _step_limit(H: TimeDependentHamiltonian, config: PropagationConfig) -> float:
    lim = config.max_step or math.inf
    if H.max_frequency > 0:
        lim = min(lim, 1.0 / (20 * H.max_frequency))
    return lim


def _output_times(config: PropagationConfig) -> np.ndarray:
    ts = sorted(set([float(t) for t in (config.sample_times if config.sample_times is not None else [])] + [config.t_final]))
    if ts[0] < 0 or ts[-1] > config.t_final * (1 + 1e-12):
        raise ValueError("sample times must lie in [0, t_final]")
    return np.array(ts)


# --- Schrödinger --------------------------------------------------------------

def propagate_schrodinger(H: TimeDependentHamiltonian, psi0: StateVector, config: PropagationConfig) -> PropagationResult:
    """Solve ``i dpsi/dt = H(t) psi`` from t = 0."""
    if psi0.space != H.space:
        raise HilbertError("state and Hamiltonian live on different spaces")
    if abs(psi0.norm() - 1) > 1e-6:
        raise ValueError("initial state must be normalised")
    times = _output_times(config)
    method = config.method
    frame = None
    if method in ("auto", "exact"):
        try:
            frame = solve_static_frame(H)
            method = "exact"
        except FrameError:
            if method == "exact":
                raise
            method = "dop853"
    y0 = psi0.amplitudes.astype(complex)
    samples = []
    nsteps = 0
    if method == "exact":
        prop = BlockPropagator(frame_hamiltonian(H, frame))
        c = prop.coefficients(y0)
        for t in times:
            samples.append(frame.from_frame(prop.evolve(c, t), t))
    elif method == "rk4":
        P = pack(H)
        hmax = _step_limit(H, config)
        if not math.isfinite(hmax):
            hnorm = max(abs(P.data).sum() / max(H.space.dim, 1), float(np.abs(P.data).max(initial=0.0)))
            hmax = 0.05 / hnorm if hnorm > 0 else config.t_final
        y, t_prev = y0, 0.0
        for t in times:
            span = t - t_prev
            if span > 0:
                n = max(1, math.ceil(span / hmax - 1e-9))
                y = P.rk4(y, t_prev, span / n, n)
                nsteps += n
            samples.append(y.copy())
            t_prev = t
    else:
        P = pack(H)
        hmax = _step_limit(H, config)
        sol = solve_ivp(lambda t, y: -1j * P.matvec(t, y), (0.0, config.t_final), y0, method="DOP853",
                        t_eval=times, rtol=config.rtol, atol=config.atol, max_step=hmax)
        if sol.status != 0:
            raise IntegrationError(f"Schrödinger integration failed: {sol.message}")
        samples = [sol.y[:, k] for k in range(len(times))]
        nsteps = int(sol.nfev)
    drift = 0.0
    out = []
    for y in samples:
        nrm = np.linalg.norm(y)
        drift = max(drift, abs(nrm - 1))
        out.append(StateVector(H.space, y / nrm))
    if drift > 1e-3:
        raise IntegrationError(f"norm drift {drift:.2e} exceeds 1e-3")
    return PropagationResult(out[-1], times, out, method, drift, nsteps)


# --- Lindblad -----------------------------------------------------------------

def _dense_components(H: TimeDependentHamiltonian):
    return [(m.toarray(), nu) for m, nu in H.components()]


def lindblad_rhs(H: TimeDependentHamiltonian, collapse) -> Callable:
    comps = _dense_components(H)
    D = H.space.dim
    Ls = [((L.matrix if hasattr(L, "matrix") else sp.csr_matrix(L)).toarray(), rate) for L, rate in collapse]
    K = sum((rate * L.conj().T @ L for L, rate in Ls), np.zeros((D, D), complex))

    def rhs(t, y):
        rho = y.reshape(D, D)
        rho = 0.5 * (rho + rho.conj().T)
        Ht = np.zeros((D, D), complex)
        for m, nu in comps:
            Ht += m if nu == 0 else np.exp(1j * nu * t) * m
        Heff = Ht - 0.5j * K
        d = -1j * (Heff @ rho - rho @ Heff.conj().T)
        for L, rate in Ls:
            d += rate * (L @ rho @ L.conj().T)
        return d.ravel()

    return rhs


def propagate_lindblad(H: TimeDependentHamiltonian, collapse, rho0: DensityMatrix | StateVector,
                       config: PropagationConfig) -> PropagationResult:
    """Integrate ``drho/dt = -i[H(t), rho] + sum rate (L rho L^dag - {L^dag L, rho}/2)``."""
    if isinstance(rho0, StateVector):
        rho0 = rho0.to_dm()
    if rho0.space != H.space:
        raise HilbertError("state and Hamiltonian live on different spaces")
    D = H.space.dim
    if D > DENSE_LIMIT:
        raise MemoryBudgetError(f"dense density matrix of dimension {D} exceeds {DENSE_LIMIT}; use trajectories")
    need = 16.0 * D * D * _DOP853_COPIES
    if need > memory_budget():
        raise MemoryBudgetError(f"dense integration needs {need / 2**30:.1f} GiB; use trajectories "
                                f"or raise {MEMORY_BUDGET_ENV}")
    for _, rate in collapse:
        if rate < 0:
            raise ValueError("negative collapse rate")
    rho0.check(1e-7)
    times = _output_times(config)
    y0 = rho0.matrix.astype(complex).ravel()
    sol = solve_ivp(lindblad_rhs(H, collapse), (0.0, config.t_final), y0, method="DOP853", t_eval=times,
                    rtol=config.rtol, atol=config.atol, max_step=_step_limit(H, config))
    if sol.status != 0:
        raise IntegrationError(f"Lindblad integration failed: {sol.message}")
    out = []
    drift = 0.0
    for k in range(len(times)):
        rho = sol.y[:, k].reshape(D, D)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        drift = max(drift, abs(tr - 1))
        dm = DensityMatrix(H.space, rho / tr)
        lam = dm.min_eigenvalue()
        if lam < -1e-5:
            raise IntegrationError(f"density matrix lost positivity (eigenvalue {lam:.2e}) at t={times[k]:.3e}")
        out.append(dm)
    if drift > 1e-6:
        raise IntegrationError(f"trace drift {drift:.2e} exceeds 1e-6")
    return PropagationResult(out[-1], times, out, "dop853", drift, int(sol.nfev))


def liouvillian(H: np.ndarray, collapse) -> np.ndarray:
    """Row-major vectorised Liouvillian of a static problem: vec(drho/dt) = L vec(rho)."""
    D = H.shape[0]
    I = np.eye(D)
    out = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for L, rate in collapse:
        L = L.toarray() if hasattr(L, "toarray") else np.asarray(L)
        LdL = L.conj().T @ L
        out += rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, I) - 0.5 * np.kron(I, LdL.T))
    return out


# --- trajectories -------------------------------------------------------------

@dataclass
class TrajectoryEnsemble:
    """Weighted pure-state ensemble ``rho = sum_i w_i |psi_i><psi_i|``.

    Members with ``group == -1`` are exact (deterministic) branches; other
    members are equally weighted samples of their group, which is what the
    standard error accounts for.
    """

    space: HilbertSpace
    states: list
    weights: np.ndarray
    groups: np.ndarray
    jumps: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, float)
        self.groups = np.asarray(self.groups, int)
        if self.jumps is None:
            self.jumps = np.zeros(len(self.states), int)

    @classmethod
    def pure(cls, psi: StateVector) -> "TrajectoryEnsemble":
        return cls(psi.space, [psi.amplitudes.astype(complex)], np.ones(1), np.array([-1]))

    def __len__(self):
        return len(self.states)

    def map(self, fn: Callable[[np.ndarray], np.ndarray], space: HilbertSpace | None = None) -> "TrajectoryEnsemble":
        return TrajectoryEnsemble(space or self.space, [fn(s) for s in self.states], self.weights.copy(),
                                  self.groups.copy(), self.jumps.copy())

    def _estimate(self, q: np.ndarray) -> tuple[float, float]:
        val = float(np.sum(self.weights * q))
        var = 0.0
        for g in np.unique(self.groups):
            if g < 0:
                continue
            sel = self.groups == g
            n = int(sel.sum())
            if n > 1:
                W = float(self.weights[sel].sum())
                var += W ** 2 * float(np.var(q[sel], ddof=1)) / n
        return val, math.sqrt(var)

    def expect(self, op: Operator) -> tuple[complex, float]:
        q = np.array([np.vdot(s, op.matrix @ s) for s in self.states])
        v, e = self._estimate(q.real)
        vi, _ = self._estimate(q.imag)
        return v + 1j * vi, e

    def fidelity(self, psi: StateVector) -> tuple[float, float]:
        """F = sqrt(<psi|rho|psi>) with its standard error."""
        ref = psi.amplitudes
        q = np.array([abs(np.vdot(ref, s)) ** 2 for s in self.states])
        f2, e2 = self._estimate(q)
        f2 = min(max(f2, 0.0), 1.0)
        F = math.sqrt(f2)
        return F, (e2 / (2 * F) if F > 0 else e2)

    def populations(self, proj: Operator) -> float:
        return float(self.expect(proj)[0].real)

    def density_matrix(self) -> DensityMatrix:
        if self.space.dim > DENSE_LIMIT:
            raise MemoryBudgetError("ensemble too large for a dense density matrix")
        S = np.array(self.states)
        rho = (S.T * self.weights) @ S.conj()
        return DensityMatrix(self.space, rho)

    @property
    def trace_error(self) -> float:
        return abs(float(self.weights.sum()) - 1.0)


class LossyPropagator:
    """Exact no-jump propagation in a static frame plus jump sampling.

    The Hamiltonian is optionally reduced by adiabatic elimination of terms
    faster than ``cutoff``; the remaining problem must admit a static frame in
    which every collapse operator is covariant.
    """

    def __init__(self, H: TimeDependentHamiltonian, collapse, duration: float,
                 cutoff: float | None = None, jump_tol: float = 1e-10):
        self.space = H.space
        self.duration = float(duration)
        self.jump_tol = jump_tol
        Hr = eliminate_fast(H, cutoff) if cutoff else H
        self.H = Hr
        self.frame: StaticFrame = solve_static_frame(Hr)
        d = self.frame.d
        for L, _ in collapse:
            m = L.matrix.tocoo()
            if m.nnz:
                shift = d[m.row] - d[m.col]
                if np.ptp(shift) > 1e-9 * max(1.0, np.max(np.abs(d))):
                    raise FrameError("collapse operator is not covariant in the static frame")
        self.jumps = [(L.matrix.tocsr(), rate) for L, rate in collapse if rate > 0]
        K = damping_operator([(L, r) for L, r in collapse if r > 0], self.space.dim)
        self.prop = BlockPropagator(frame_hamiltonian(Hr, self.frame), K)

    def _finish(self, phi: np.ndarray) -> np.ndarray:
        psi = self.frame.from_frame(phi, self.duration)
        return psi / np.linalg.norm(psi)

    def no_jump(self, psi: np.ndarray) -> tuple[np.ndarray, float]:
        """Normalised no-jump state at the end of the step and its probability."""
        c = self.prop.coefficients(psi)
        phi = self.prop.evolve(c, self.duration)
        p0 = float(np.vdot(phi, phi).real)
        return self._finish(phi), p0

    def trajectory(self, psi: np.ndarray, rng: np.random.Generator, r_first: float | None = None):
        """One unravelled trajectory; ``r_first`` forces the first waiting-time threshold."""
        t = 0.0
        phi = psi.astype(complex)
        njump = 0
        r = r_first
        while True:
            if r is None:
                r = rng.random()
            c = self.prop.coefficients(phi)
            rem = self.duration - t
            if not self.jumps or self.prop.norm2(c, rem) >= r:
                phi = self.prop.evolve(c, rem)
                break
            if self.prop.norm2(c, 0.0) <= r:
                tau = 0.0  # threshold within round-off of the current norm: jump now
            else:
                tau = brentq(lambda s: self.prop.norm2(c, s) - r, 0.0, rem,
                             xtol=self.jump_tol * self.duration, rtol=4 * np.finfo(float).eps)
            phi = self.prop.evolve(c, tau)
            t += tau
            cand = [L @ phi for L, _ in self.jumps]
            w = np.array([rate * np.vdot(v, v).real for v, (_, rate) in zip(cand, self.jumps)])
            if w.sum() <= 0:
                phi = phi / np.linalg.norm(phi)
                r = None
                continue
            k = int(rng.choice(len(w), p=w / w.sum()))
            phi = cand[k] / np.linalg.norm(cand[k])
            njump += 1
            r = None
        phi = phi / np.linalg.norm(phi)
        return self._finish(phi), njump

    def lossless(self, psi: np.ndarray) -> np.ndarray:
        return self.no_jump(psi)[0]

    def step(self, ens: TrajectoryEnsemble, cfg: TrajectoryConfig, group: int) -> TrajectoryEnsemble:
        """Propagate an ensemble: exact members split into a no-jump branch and a
        stratified sample conditioned on at least one jump; sampled members
        continue as ordinary trajectories."""
        states, weights, groups, jumps = [], [], [], []
        seeds = np.random.SeedSequence([cfg.seed, group]).spawn(len(ens) * (cfg.n_trajectories + 1))
        si = 0
        for s, w, g, nj in zip(ens.states, ens.weights, ens.groups, ens.jumps):
            if g >= 0 or not self.jumps:
                if not self.jumps:
                    states.append(self.lossless(s))
                else:
                    out, k = self.trajectory(s, np.random.default_rng(seeds[si]))
                    states.append(out)
                    nj = nj + k
                si += 1
                weights.append(w)
                groups.append(g)
                jumps.append(nj)
                continue
            psi0, p0 = self.no_jump(s)
            states.append(psi0)
            weights.append(w * p0)
            groups.append(-1)
            jumps.append(nj)
            if p0 >= 1.0 - 1e-15:
                continue
            N = cfg.n_trajectories
            strat = np.random.default_rng(seeds[si]).random(N)
            si += 1
            sub = group * 1000 + len(groups)
            for i in range(N):
                if cfg.conditioned:
                    r = p0 + (1 - p0) * (i + strat[i]) / N
                else:
                    r = None
                out, k = self.trajectory(s, np.random.default_rng(seeds[si + i]), r_first=min(r, 1.0) if r else None)
                states.append(out)
                weights.append(w * (1 - p0) / N)
                groups.append(sub)
                jumps.append(nj + k)
            si += N
        return TrajectoryEnsemble(ens.space, states, np.array(weights), np.array(groups), np.array(jumps))


def propagate_trajectories(H: TimeDependentHamiltonian, collapse, psi0: StateVector, config: PropagationConfig,
                           traj_config: TrajectoryConfig | None = None) -> TrajectoryEnsemble:
    """Monte-Carlo wave-function unravelling of the Lindblad equation.

    Uses exact static-frame propagators when available, otherwise integrates
    the non-Hermitian evolution with event detection.
    """
    traj_config = traj_config or TrajectoryConfig()
    if psi0.space != H.space:
        raise HilbertError("state and Hamiltonian live on different spaces")
    ens = TrajectoryEnsemble.pure(psi0)
    try:
        lp = LossyPropagator(H, collapse, config.t_final, jump_tol=traj_config.jump_tol)
    except FrameError:
        return _trajectories_ivp(H, collapse, psi0, config, traj_config)
    if not traj_config.conditioned:
        ens = TrajectoryEnsemble(psi0.space, [psi0.amplitudes.astype(complex)] * traj_config.n_trajectories,
                                 np.full(traj_config.n_trajectories, 1 / traj_config.n_trajectories),
                                 np.zeros(traj_config.n_trajectories, int))
    return lp.step(ens, traj_config, group=0)


def _trajectories_ivp(H, collapse, psi0, config, tc) -> TrajectoryEnsemble:
    P = pack(H)
    jumps = [(L.matrix.tocsr(), rate) for L, rate in collapse if rate > 0]
    K = damping_operator(jumps, H.space.dim)
    hmax = _step_limit(H, config)
    T = config.t_final

    def rhs(t, y):
        out = -1j * P.matvec(t, y)
        if K is not None:
            out -= 0.5 * (K @ y)
        return out

    states = []
    seeds = np.random.SeedSequence(tc.seed).spawn(tc.n_trajectories)
    for i in range(tc.n_trajectories):
        rng = np.random.default_rng(seeds[i])
        t, y = 0.0, psi0.amplitudes.astype(complex)
        while t < T:
            r = rng.random()
            ev = lambda s, z: np.vdot(z, z).real - r  # noqa: E731
            ev.terminal = True
            ev.direction = -1
            sol = solve_ivp(rhs, (t, T), y, method="DOP853", events=ev, rtol=config.rtol, atol=config.atol,
                            max_step=hmax)
            y = sol.y[:, -1]
            if sol.status == 1 and jumps:
                t = float(sol.t_events[0][0])
                y = sol.y_events[0][0]
                cand = [L @ y for L, _ in jumps]
                w = np.array([rate * np.vdot(v, v).real for v, (_, rate) in zip(cand, jumps)])
                k = int(rng.choice(len(w), p=w / w.sum()))
                y = cand[k] / np.linalg.norm(cand[k])
            else:
                t = T
        states.append(y / np.linalg.norm(y))
    n = tc.n_trajectories
    return TrajectoryEnsemble(H.space, states, np.full(n, 1 / n), np.zeros(n, int))


# --- export -------------------------------------------------------------------

def export_samples_csv(path: str | Path, times: Sequence[float], columns: dict) -> Path:
    """Write ``t`` plus one column per observable."""
    path = Path(path)
    names = list(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for k, t in enumerate(times):
            w.writerow([repr(float(t)), *[repr(float(np.real(columns[n][k]))) for n in names]])
    return path


def expectation_series(result: PropagationResult, ops: dict) -> dict:
    return {name: [float(np.real(op.expect(s))) for s in result.samples] for name, op in ops.items()}
