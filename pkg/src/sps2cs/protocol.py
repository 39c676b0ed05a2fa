"""Six-step transfer of an n-qubit SPS entangled state onto n coherent-state qubits."""
from __future__ import annotations

import csv
import io
import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .device import (
    DeviceError,
    DeviceParams,
    build_H2_full,
    build_H3,
    build_H3_full,
    check_matching,
    collapse_operators,
    cs_labels,
    derive,
    drive_frame_generator,
    sps_labels,
)
from .hilbert import (
    HilbertSpace,
    StateVector,
    coherent_amplitudes,
    coherent_state,
    default_cutoff,
    displacement,
    fidelity,
    transition,
)
from .dynamics import (
    ELIMINATION_CUTOFF,
    LossyPropagator,
    dressing as make_dressing,
    TrajectoryConfig,
    TrajectoryEnsemble,
    apply_local,
    apply_pair,
    conditional_drive_unitary,
    evolve_conditional_drive_map,
    evolve_dispersive_map,
    evolve_rabi,
)
from .device import TimeDependentHamiltonian, Term

KINDS = ("PrepPlusMinus", "ResonantSwap", "DispersivePhase", "Displace", "ConditionalDrive")
DRIVE_RTOL = 1e-6


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolStep:
    kind: str
    duration: float
    actors: tuple
    amount: complex | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("durations must be non-negative")


@dataclass(frozen=True)
class ProtocolPlan:
    steps: tuple
    dead_time: float
    total_time: float
    drive_turns: float  # 2 omega_tilde t / 2 pi during the conditional drive

    def step(self, label: str) -> ProtocolStep:
        for s in self.steps:
            if s.label == label:
                return s
        raise KeyError(label)


@dataclass
class StepOutcome:
    step: ProtocolStep
    state: object  # StateVector or TrajectoryEnsemble
    fidelity: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.fidelity <= 1.0):
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")


# --- spaces and states ----------------------------------------------------------

def space_labels(n: int) -> list[str]:
    return ["qutrit", *sps_labels(n), *cs_labels(n)]


STANDARD_LEAKAGE = 1e-10


def _tail_cutoff(alpha: complex, max_leakage: float) -> int:
    """Smallest dimension holding |alpha> with Poisson tail below ``max_leakage``."""
    dim = default_cutoff(abs(alpha) ** 2)
    while 1.0 - float(np.sum(np.abs(coherent_amplitudes(alpha, dim)) ** 2)) > max_leakage:
        dim += 1
    return dim


def standard_space(p: DeviceParams, dims: Sequence[int] | None = None) -> HilbertSpace:
    """(qutrit, c1..cn, c1'..cn') truncated so every coherent amplitude the ideal
    maps produce (|2 alpha> on c1') leaks below ``STANDARD_LEAKAGE``, unless ``dims`` is given."""
    if dims is None:
        a = abs(p.alpha)
        dims = ([3] + [3] * p.n + [_tail_cutoff(2 * a, STANDARD_LEAKAGE)]
                + [_tail_cutoff(a, STANDARD_LEAKAGE)] * (p.n - 1))
    return HilbertSpace(tuple(int(d) for d in dims), space_labels(p.n))


def _fock(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, complex)
    v[k] = 1
    return v


def _product(space: HilbertSpace, factors: dict) -> np.ndarray:
    out = np.ones(1, complex)
    for lab, dim in zip(space.labels, space.dims):
        out = np.kron(out, factors.get(lab, _fock(dim, 0)))
    return out


_PM = {"+": np.array([1, 1]) / math.sqrt(2), "-": np.array([1, -1]) / math.sqrt(2)}


def _pm(dim: int, sign: str) -> np.ndarray:
    v = np.zeros(dim, complex)
    v[:2] = _PM[sign]
    return v


def _coh(alpha: complex, dim: int, max_leakage: float) -> np.ndarray:
    return coherent_state(alpha, dim, max_leakage=max_leakage).amplitudes


def _leakage(p: DeviceParams, space: HilbertSpace) -> float:
    out = 0.0
    for k, lab in enumerate(cs_labels(p.n)):
        st = coherent_state(2 * p.alpha if k == 0 else p.alpha, space.dim_of(lab), max_leakage=1.0)
        out = max(out, st.meta.get("leakage", 0.0))
    return out


def branch_state(p: DeviceParams, space: HilbertSpace, branches, max_leakage: float = 1e-4) -> StateVector:
    """Superposition of product branches.

    Each branch is ``(amplitude, qutrit level, SPS factors, CS amplitudes)``
    where SPS factors are ``0``, ``1``, ``"+"`` or ``"-"`` and CS entries are
    coherent amplitudes.
    """
    q_index = {"g": 0, "e": 1, "f": 2}
    total = np.zeros(space.dim, complex)
    for amp, q, sps, cs in branches:
        f = {"qutrit": _fock(3, q_index[q])}
        for lab, s in zip(sps_labels(p.n), sps):
            dim = space.dim_of(lab)
            f[lab] = _pm(dim, s) if isinstance(s, str) else _fock(dim, s)
        for lab, a in zip(cs_labels(p.n), cs):
            f[lab] = _coh(a, space.dim_of(lab), max_leakage)
        total += amp * _product(space, f)
    return StateVector(space, total).normalize()


def initial_state(p: DeviceParams, space: HilbertSpace, max_leakage: float = 1e-4) -> StateVector:
    n, a = p.n, p.alpha
    st = branch_state(p, space, [
        (p.c_amp, "g", [0] * n, [a] * n),
        (p.d_amp, "g", [1] * n, [a] * n),
    ], max_leakage)
    st.meta["leakage"] = _leakage(p, space)
    return st


def target_state(p: DeviceParams, space: HilbertSpace, max_leakage: float = 1e-4) -> StateVector:
    n, a = p.n, p.alpha
    sps = [0] + ["-"] * (n - 1)
    st = branch_state(p, space, [
        (p.c_amp, "g", sps, [a] * n),
        (p.d_amp, "g", sps, [-a] * n),
    ], max_leakage)
    st.meta["leakage"] = _leakage(p, space)
    return st


def step_targets(p: DeviceParams, space: HilbertSpace) -> list[StateVector]:
    """Expected state after each of the six steps (global phases dropped)."""
    n, a, c, d = p.n, p.alpha, p.c_amp, p.d_amp
    plus, minus = ["+"] * (n - 1), ["-"] * (n - 1)
    A, mA = [a] * n, [-a] * n
    rest_a, rest_m = [a] * (n - 1), [-a] * (n - 1)
    lk = 1.0  # truncation is reported separately
    return [
        branch_state(p, space, [(c, "g", [0, *plus], A), (d, "g", [1, *minus], A)], lk),
        branch_state(p, space, [(c, "g", [0, *plus], A), (-1j * d, "e", [0, *minus], A)], lk),
        branch_state(p, space, [(c, "g", [0, *minus], A), (-1j * d, "e", [0, *minus], mA)], lk),
        branch_state(p, space, [(c, "g", [0, *minus], [2 * a, *rest_a]), (-1j * d, "e", [0, *minus], [0, *rest_m])], lk),
        branch_state(p, space, [(c, "g", [0, *minus], [2 * a, *rest_a]), (d, "g", [0, *minus], [0, *rest_m])], lk),
        target_state(p, space, lk),
    ]


# --- plan -------------------------------------------------------------------------

def plan(p: DeviceParams, drive_rtol: float = DRIVE_RTOL) -> ProtocolPlan:
    m = check_matching(p)
    if not m.ok:
        raise PlanError(f"dispersive shifts are not matched: residuals {m.residuals}")
    d = derive(p)
    if d.lam_common <= 0:
        raise PlanError("no dispersive coupling: lambda = 0")
    if p.g_r <= 0 or p.Omega_p <= 0:
        raise PlanError("g_r and Omega_p must be positive")
    t_drive = math.pi / (2 * p.Omega_p)
    turns = 2 * d.omega_tilde * t_drive / (2 * math.pi)
    k = round(turns)
    if k < 1 or abs(turns - k) > drive_rtol * k:
        raise PlanError(f"2 omega_tilde t / 2pi = {turns:.6f} is not an integer within {drive_rtol:g}")
    a = p.alpha
    steps = (
        ProtocolStep("PrepPlusMinus", p.tau_p, tuple(sps_labels(p.n)[1:]), label="i"),
        ProtocolStep("ResonantSwap", math.pi / (2 * p.g_r), ("qutrit", "c1"), label="ii"),
        ProtocolStep("DispersivePhase", math.pi / d.lam_common,
                     ("qutrit", *sps_labels(p.n)[1:], *cs_labels(p.n)), label="iii"),
        ProtocolStep("Displace", p.tau_alpha, ("c1p",), amount=a, label="iv"),
        ProtocolStep("ConditionalDrive", t_drive, ("qutrit", "c1p"), label="v"),
        ProtocolStep("Displace", p.tau_alpha, ("c1p",), amount=-a, label="vi"),
    )
    dead = 4 * p.tau_d + 2 * p.tau_c
    total = sum(s.duration for s in steps) + dead
    return ProtocolPlan(steps, dead, total, turns)


# --- ideal maps --------------------------------------------------------------------

def prep_unitary(dim: int) -> np.ndarray:
    """|0> -> |+>, |1> -> |->, identity above."""
    U = np.eye(dim, dtype=complex)
    U[:2, :2] = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    return U


@lru_cache(maxsize=32)
def _displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    return displacement(alpha, dim).matrix.toarray()


def _f_population(psi: np.ndarray, space: HilbertSpace) -> float:
    t = psi.reshape(space.dims)
    return float(np.sum(np.abs(np.take(t, 2, axis=space.index("qutrit"))) ** 2))


def _apply_ideal(p: DeviceParams, step: ProtocolStep, psi: StateVector, inverse: bool = False) -> StateVector:
    d = derive(p)
    sgn = -1.0 if inverse else 1.0
    if step.kind == "PrepPlusMinus":
        for lab in step.actors:
            psi = apply_local(psi, prep_unitary(psi.space.dim_of(lab)), lab)
        return psi
    if step.kind == "ResonantSwap":
        return evolve_rabi(psi, p.g_r, sgn * step.duration)
    if step.kind == "DispersivePhase":
        return evolve_dispersive_map(psi, d, sgn * step.duration)
    if step.kind == "Displace":
        amt = -step.amount if inverse else step.amount
        out = apply_local(psi, _displacement_matrix(amt, psi.space.dim_of("c1p")), "c1p")
        out.meta["displace_loss"] = max(0.0, psi.norm() ** 2 - out.norm() ** 2)  # pushed above the cutoff
        return out
    if step.kind == "ConditionalDrive":
        if not inverse:
            return evolve_conditional_drive_map(psi, d, step.duration, p.phi, p.Omega_p)
        U = conditional_drive_unitary(d.omega_tilde, p.Omega_p, step.duration, p.phi, psi.space.dim_of("c1p"))
        return apply_pair(psi, U.conj().T, ("qutrit", "c1p"))
    raise ValueError(step.kind)


def _outcome(step, state, target, extra=None) -> StepOutcome:
    if isinstance(state, TrajectoryEnsemble):
        F, err = state.fidelity(target)
        diag = {"stderr": err, "trace_err": state.trace_error, "members": len(state)}
    else:
        F = fidelity(target, state)
        diag = {"norm_err": abs(state.norm() - 1), "trace_err": abs(state.norm() ** 2 - 1)}
    diag.update(extra or {})
    return StepOutcome(step, state, min(max(F, 0.0), 1.0), diag)


def run_ideal(p: DeviceParams, space: HilbertSpace | None = None, psi0: StateVector | None = None,
              drive_rtol: float = DRIVE_RTOL) -> list[StepOutcome]:
    space = space or standard_space(p)
    pl = plan(p, drive_rtol)
    psi = psi0 or initial_state(p, space)
    targets = step_targets(p, space)
    out = []
    for step, tgt in zip(pl.steps, targets):
        psi = _apply_ideal(p, step, psi)
        leak = psi0.meta.get("leakage", 0.0) if psi0 else _leakage(p, space)
        out.append(_outcome(step, psi, tgt, {"f_pop": _f_population(psi.amplitudes, space),
                                             "leakage": max(leak, psi.meta.get("displace_loss", 0.0))}))
    return out


def run_reverse(p: DeviceParams, space: HilbertSpace | None = None, state: StateVector | None = None,
                drive_rtol: float = DRIVE_RTOL) -> list[StepOutcome]:
    """Undo the six ideal steps in reverse order (CS -> SPS transfer)."""
    space = space or standard_space(p)
    pl = plan(p, drive_rtol)
    psi = state if state is not None else target_state(p, space)
    targets = step_targets(p, space)
    expected = [*targets[:-1][::-1], initial_state(p, space)]
    out = []
    for step, tgt in zip(pl.steps[::-1], expected):
        psi = _apply_ideal(p, step, psi, inverse=True)
        out.append(_outcome(step, psi, tgt, {"f_pop": _f_population(psi.amplitudes, space)}))
    return out


# --- numeric run ----------------------------------------------------------------

def build_H_drive_effective(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    """Dispersive drive model: (g~^2/Delta~)(n + 1/2) sigma_z plus the classical drive."""
    H0 = drive_frame_generator(p, space)
    drive = Term(p.Omega_p * np.exp(-1j * p.phi) * transition(space, "g", "e"),
                 -(p.drive_frequency - p.omega_eg), "Om_eg")
    return TimeDependentHamiltonian(space, [drive], [H0])


def _collapse(p: DeviceParams, space: HilbertSpace, lossless: bool):
    return [] if lossless else collapse_operators(p, space)


def _sample_f_pop(lp: LossyPropagator, psi: np.ndarray, n: int = 24) -> float:
    c = lp.prop.coefficients(psi)
    best = 0.0
    for t in np.linspace(0, lp.duration, n + 1)[1:]:
        phi = lp.prop.evolve(c, t)
        phi = phi / np.linalg.norm(phi)
        best = max(best, _f_population(phi, lp.space))
    return best


def run_numeric(p: DeviceParams, space: HilbertSpace | None = None, lossless: bool = True,
                traj: TrajectoryConfig | None = None, cutoff: float | None = ELIMINATION_CUTOFF,
                drive_model: str = "full", crosstalk: bool = True,
                dressing: str = "adiabatic", drive_rtol: float = DRIVE_RTOL) -> list[StepOutcome]:
    """Steps (i), (ii), (iv), (vi) ideal; (iii) and (v) propagated under the realistic Hamiltonians.

    ``drive_model='full'`` uses the driven Hamiltonian with all unwanted
    couplings; ``'ideal'`` keeps only the wanted cavity and drive couplings;
    ``'effective'`` uses the dispersive (linear ac-Stark) drive model.
    Lossy runs unravel the master equation into trajectories; the no-jump
    branch of each lossy step is kept exactly.

    ``dressing='adiabatic'`` assumes the dispersive couplings are switched on
    and off slowly, so bare states enter and leave as the corresponding
    dressed states; ``'sudden'`` propagates the bare states directly.
    """
    if dressing not in ("adiabatic", "sudden"):
        raise ValueError(f"unknown dressing {dressing!r}")
    if p.n != 2 and (crosstalk or drive_model == "full"):
        raise DeviceError("the realistic step Hamiltonians are defined for n = 2")
    if drive_model not in ("full", "ideal", "effective"):
        raise ValueError(f"unknown drive model {drive_model!r}")
    space = space or standard_space(p)
    traj = traj or TrajectoryConfig()
    pl = plan(p, drive_rtol)
    targets = step_targets(p, space)
    psi0 = initial_state(p, space)
    ens = TrajectoryEnsemble.pure(psi0)
    coll = _collapse(p, space, lossless)
    out = []
    leak = psi0.meta.get("leakage", 0.0)
    for k, (step, tgt) in enumerate(zip(pl.steps, targets)):
        extra = {"leakage": leak}
        if step.kind in ("DispersivePhase", "ConditionalDrive"):
            if step.kind == "DispersivePhase":
                H = build_H2_full(p, space, crosstalk=crosstalk)
            elif drive_model == "full":
                H = build_H3_full(p, space)
            elif drive_model == "ideal":
                H = build_H3(p, space)
            else:
                H = build_H_drive_effective(p, space)
            lp = LossyPropagator(H, coll, step.duration, cutoff=cutoff, jump_tol=traj.jump_tol)
            dr = None
            if dressing == "adiabatic":
                dr = make_dressing(H.select(lambda name: not name.startswith("Om")), cutoff)
                ens = ens.map(dr.dress)
            det = [s for s, g in zip(ens.states, ens.groups) if g < 0]
            extra["f_pop_max"] = max(_sample_f_pop(lp, s) for s in det) if det else 0.0
            if lossless:
                ens = ens.map(lp.lossless)
            else:
                ens = lp.step(ens, traj, group=k + 1)
            if dr is not None:
                ens = ens.map(lambda s, dr=dr, T=step.duration: dr.undress(s, T))
        else:
            ens = ens.map(lambda s, st=step: _apply_ideal(p, st, StateVector(space, s)).amplitudes)
        extra["f_pop"] = ens.populations(transition(space, "f", "f"))
        state = StateVector(space, ens.states[0]) if lossless else ens
        out.append(_outcome(step, state, tgt, extra))
    return out


# --- logs -------------------------------------------------------------------------

LOG_FIELDS = ("step", "kind", "duration_us", "fidelity", "f_pop", "f_pop_max", "leakage", "trace_err", "stderr")


def _log_rows(outcomes: Sequence[StepOutcome]):
    for o in outcomes:
        d = o.diagnostics
        yield {
            "step": o.step.label,
            "kind": o.step.kind,
            "duration_us": f"{o.step.duration * 1e6:.6f}",
            "fidelity": f"{o.fidelity:.9f}",
            "f_pop": f"{d.get('f_pop', 0.0):.3e}",
            "f_pop_max": f"{d.get('f_pop_max', d.get('f_pop', 0.0)):.3e}",
            "leakage": f"{d.get('leakage', 0.0):.3e}",
            "trace_err": f"{d.get('trace_err', 0.0):.3e}",
            "stderr": f"{d.get('stderr', 0.0):.3e}",
        }


def steps_to_text(outcomes: Sequence[StepOutcome]) -> str:
    lines = []
    for r in _log_rows(outcomes):
        lines.append(" ".join(f"{k}={r[k]}" for k in LOG_FIELDS))
    return "\n".join(lines) + "\n"


def steps_to_csv(outcomes: Sequence[StepOutcome], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LOG_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in _log_rows(outcomes):
        w.writerow(r)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
