"""Device parameters, derived quantities, Hamiltonian and collapse-operator builders.

All frequencies, couplings and rates are angular (rad/s); times are seconds.
Interaction-picture Hamiltonians are stored as ``H(t) = sum_k (A_k e^{i nu_k t} + h.c.)
+ sum_j S_j`` with Hermitian static parts ``S_j``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    HilbertError,
    HilbertSpace,
    Operator,
    destroy,
    embed,
    transition,
)

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
GHZ = TWO_PI * 1e9
US = 1e-6
NS = 1e-9

UNWANTED_DEFAULTS = {
    # j-cavities (main transition g<->f)
    "g_fe": 1.0,
    "g_eg": 0.25,
    # j'-cavities (main transition e<->f)
    "mu_fg": 1.0,
    "mu_eg": 0.25,
    # cavity 1' during the driven step (main transition g<->e)
    "gt_fg": 4.0,
    "gt_fe": 4.0,
    # classical drive (main transition g<->e)
    "Om_fg": 4.0,
    "Om_fe": 4.0,
}


class DeviceError(ValueError):
    """Inconsistent or unsupported device configuration."""


def sps_labels(n: int) -> list[str]:
    return [f"c{j}" for j in range(1, n + 1)]


def cs_labels(n: int) -> list[str]:
    return [f"c{j}p" for j in range(1, n + 1)]


def cavity_labels(n: int) -> list[str]:
    return sps_labels(n) + cs_labels(n)


def rates_from_T(T: float) -> dict[str, float]:
    """Qutrit relaxation/dephasing rates for coherence scale T (seconds)."""
    return {
        "gamma_eg": 1.0 / (4 * T),
        "gamma_fe": 1.0 / (2 * T),
        "gamma_fg": 1.0 / T,
        "gamma_e_phi": 1.0 / T,
        "gamma_f_phi": 1.0 / T,
    }


@dataclass(frozen=True)
class DeviceParams:
    n: int
    omega_eg: float
    omega_fe: float
    omega_fg: float
    omega_c: dict
    g_r: float
    g: dict
    mu: dict
    g_tilde: float
    Delta_tilde: float
    Omega_p: float
    phi: float = math.pi
    omega_p: float | None = None
    m: int = 2
    mu_rule: str = "explicit"
    Omega_p_rule: str = "explicit"
    unwanted: dict = field(default_factory=lambda: dict(UNWANTED_DEFAULTS))
    crosstalk_ratio: float = 0.01
    crosstalk: dict = field(default_factory=dict)
    kappa: dict = field(default_factory=dict)
    gamma_eg: float = 0.0
    gamma_fe: float = 0.0
    gamma_fg: float = 0.0
    gamma_e_phi: float = 0.0
    gamma_f_phi: float = 0.0
    alpha: complex = 1.86
    c_amp: complex = 1 / math.sqrt(2)
    d_amp: complex = 1 / math.sqrt(2)
    tau_p: float = 0.0
    tau_alpha: float = 0.0
    tau_d: float = 0.0
    tau_c: float = 0.0

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise DeviceError("n must be >= 1")
        missing = [c for c in cavity_labels(n) if c not in self.omega_c]
        if missing:
            raise DeviceError(f"missing cavity frequencies for {missing}")
        if sorted(self.g) != sorted(sps_labels(n)[1:]):
            raise DeviceError(f"g must be given for {sps_labels(n)[1:]}, got {sorted(self.g)}")
        unwanted = dict(UNWANTED_DEFAULTS)
        unwanted.update(self.unwanted)
        object.__setattr__(self, "unwanted", unwanted)
        kappa = {c: 0.0 for c in cavity_labels(n)}
        kappa.update(self.kappa)
        object.__setattr__(self, "kappa", kappa)
        if self.mu_rule == "match":
            object.__setattr__(self, "mu", self._matched_mu())
        elif self.mu_rule != "explicit":
            raise DeviceError(f"mu_rule must be 'match' or 'explicit', got {self.mu_rule!r}")
        if self.Omega_p_rule == "match":
            object.__setattr__(self, "Omega_p", self.g_tilde ** 2 / (4 * self.m * abs(self.Delta_tilde))
                               if self.Delta_tilde else 0.0)
        elif self.Omega_p_rule != "explicit":
            raise DeviceError(f"Omega_p_rule must be 'match' or 'explicit', got {self.Omega_p_rule!r}")
        if sorted(self.mu) != sorted(cs_labels(n)):
            raise DeviceError(f"mu must be given for {cs_labels(n)}, got {sorted(self.mu)}")
        for name in ("g_r", "g_tilde", "Omega_p", "crosstalk_ratio", "gamma_eg", "gamma_fe",
                     "gamma_fg", "gamma_e_phi", "gamma_f_phi", "tau_p", "tau_alpha", "tau_d", "tau_c"):
            if getattr(self, name) < 0:
                raise DeviceError(f"{name} must be non-negative")
        for group in ("g", "mu", "kappa", "unwanted", "crosstalk"):
            for k, v in getattr(self, group).items():
                if v < 0:
                    raise DeviceError(f"{group}[{k}] must be non-negative")
        norm = abs(self.c_amp) ** 2 + abs(self.d_amp) ** 2
        if abs(norm - 1) > 1e-12:
            raise DeviceError(f"|c|^2 + |d|^2 = {norm!r} != 1")
        if self.m < 1:
            raise DeviceError("m must be a positive integer")

    def _matched_mu(self) -> dict:
        sps = sps_labels(self.n)[1:]
        if not sps:
            if sorted(self.mu) != sorted(cs_labels(self.n)):
                raise DeviceError("mu_rule='match' needs g couplings or explicit mu for n=1")
            return dict(self.mu)
        det = abs(self.omega_fg - self.omega_c[sps[0]])
        if det == 0:
            raise DeviceError(f"{sps[0]} is resonant with the f-g transition; no dispersive shift")
        lam = self.g[sps[0]] ** 2 / det
        return {c: math.sqrt(lam * abs(self.omega_fe - self.omega_c[c])) for c in cs_labels(self.n)}

    # -- detunings ---------------------------------------------------------
    @property
    def Delta(self) -> dict:
        return {c: self.omega_fg - self.omega_c[c] for c in sps_labels(self.n)[1:]}

    @property
    def Delta_p(self) -> dict:
        return {c: self.omega_fe - self.omega_c[c] for c in cs_labels(self.n)}

    @property
    def omega_c1p_shifted(self) -> float:
        return self.omega_eg - self.Delta_tilde

    @property
    def drive_frequency(self) -> float:
        if self.omega_p is not None:
            return self.omega_p
        return self.omega_eg + self.g_tilde ** 2 / self.Delta_tilde

    def crosstalk_pairs(self) -> list[tuple[str, str]]:
        labels = cavity_labels(self.n)
        return [(labels[i], labels[j]) for i in range(len(labels)) for j in range(i + 1, len(labels))]

    def crosstalk_coupling(self, k: str, l: str) -> float:
        for key in ((k, l), (l, k), f"{k}-{l}", f"{l}-{k}"):
            if key in self.crosstalk:
                return self.crosstalk[key]
        g_m = max([*self.g.values(), *self.mu.values()], default=0.0)
        return self.crosstalk_ratio * g_m


@dataclass(frozen=True)
class DerivedParams:
    lambda_: dict
    lambda_p: dict
    omega_tilde: float
    nbar: float
    Omega_p_required: float
    lam_common: float
    t_op: float
    crosstalk: dict
    Delta_kl: dict


def derive(p: DeviceParams) -> DerivedParams:
    lam = {c: p.g[c] ** 2 / d for c, d in p.Delta.items()}
    lam_p = {c: p.mu[c] ** 2 / d for c, d in p.Delta_p.items()}
    mags = [abs(v) for v in (*lam.values(), *lam_p.values())]
    lam_common = float(np.mean(mags)) if mags else 0.0
    omega_tilde = p.g_tilde ** 2 / (2 * p.Delta_tilde)
    req = p.g_tilde ** 2 / (4 * p.m * p.Delta_tilde)
    t_op = total_time(p, lam_common)
    xt = {(k, l): p.crosstalk_coupling(k, l) for k, l in p.crosstalk_pairs()}
    dkl = {(k, l): p.omega_c[k] - p.omega_c[l] for k, l in p.crosstalk_pairs()}
    return DerivedParams(
        lambda_=lam,
        lambda_p=lam_p,
        omega_tilde=omega_tilde,
        nbar=4 * abs(p.alpha) ** 2,
        Omega_p_required=req,
        lam_common=lam_common,
        t_op=t_op,
        crosstalk=xt,
        Delta_kl=dkl,
    )


def omega_p_required(p: DeviceParams, m: int | None = None) -> float:
    """Rabi frequency meeting both t = pi/(2 Omega_p) and 2 omega_tilde t = 2 m pi."""
    m = p.m if m is None else m
    return p.g_tilde ** 2 / (4 * m * p.Delta_tilde)


def total_time(p: DeviceParams, lam: float | None = None) -> float:
    if lam is None:
        lam = derive(p).lam_common
    t_disp = math.pi / lam if lam > 0 else math.inf
    t_res = math.pi / (2 * p.g_r) if p.g_r > 0 else math.inf
    t_drive = math.pi / (2 * p.Omega_p) if p.Omega_p > 0 else math.inf
    return t_disp + t_res + t_drive + p.tau_p + 2 * p.tau_alpha + 4 * p.tau_d + 2 * p.tau_c


def quality_factors(p: DeviceParams) -> dict[str, float]:
    return {c: (p.omega_c[c] / k if k > 0 else math.inf) for c, k in p.kappa.items()}


# --- validity checks -----------------------------------------------------------

class Margin(NamedTuple):
    name: str
    value: float
    ok: bool


@dataclass
class DispersiveReport:
    margins: list[Margin]
    threshold: float

    @property
    def flagged(self) -> list[Margin]:
        return [m for m in self.margins if not m.ok]

    @property
    def passed(self) -> bool:
        return not self.flagged

    def get(self, name: str) -> float:
        for m in self.margins:
            if m.name == name:
                return m.value
        raise KeyError(name)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf
    return abs(num) / abs(den)


def _cross_margin(d1: float, d2: float, c1: float, c2: float) -> float:
    prod = c1 * c2
    if prod == 0:
        return math.inf
    return abs(d1 - d2) / (abs(1 / d1) + abs(1 / d2)) / prod


def validate_dispersive(p: DeviceParams, threshold: float = 10.0) -> DispersiveReport:
    """Large-detuning margins; ratios below ``threshold`` are flagged."""
    out: list[tuple[str, float]] = []
    for c, d in p.Delta.items():
        out.append((f"|Delta_{c}|/g_{c}", _ratio(d, p.g[c])))
    for c, d in p.Delta_p.items():
        out.append((f"|Delta_{c}|/mu_{c}", _ratio(d, p.mu[c])))
    js = list(p.Delta)
    jps = list(p.Delta_p)
    for a in range(len(js)):
        for b in range(a + 1, len(js)):
            j, k = js[a], js[b]
            out.append((f"cross({j},{k})", _cross_margin(p.Delta[j], p.Delta[k], p.g[j], p.g[k])))
    for a in range(len(jps)):
        for b in range(a + 1, len(jps)):
            j, k = jps[a], jps[b]
            out.append((f"cross({j},{k})", _cross_margin(p.Delta_p[j], p.Delta_p[k], p.mu[j], p.mu[k])))
    for j in js:
        for k in jps:
            out.append((f"cross({j},{k})", _cross_margin(p.Delta[j], p.Delta_p[k], p.g[j], p.mu[k])))
    out.append(("|Delta_tilde|/g_tilde", _ratio(p.Delta_tilde, p.g_tilde)))
    out.append(("|Delta_tilde|/Omega_p", _ratio(p.Delta_tilde, p.Omega_p)))
    wt = p.g_tilde ** 2 / (2 * p.Delta_tilde)
    out.append(("4|omega_tilde|nbar/Omega_p", _ratio(4 * wt * 4 * abs(p.alpha) ** 2, p.Omega_p)))
    return DispersiveReport([Margin(k, v, v >= threshold) for k, v in out], threshold)


@dataclass
class MatchResult:
    ok: bool
    lam: float
    residuals: dict


def check_matching(p: DeviceParams, rtol: float = 1e-6) -> MatchResult:
    """All |lambda_j| and |lambda_j'| equal to a common value within ``rtol``."""
    d = derive(p)
    vals = {**{c: abs(v) for c, v in d.lambda_.items()}, **{c: abs(v) for c, v in d.lambda_p.items()}}
    if not vals:
        return MatchResult(True, 0.0, {})
    ref = vals[next(iter(vals))]
    res = {c: (v - ref) / ref if ref else math.inf for c, v in vals.items()}
    ok = all(abs(r) <= rtol for r in res.values())
    return MatchResult(ok, ref, res)


# --- Hamiltonian containers ---------------------------------------------------

class Term(NamedTuple):
    op: Operator
    nu: float
    name: str = ""


@dataclass(frozen=True, eq=False)
class TimeDependentHamiltonian:
    """H(t) = sum_k (A_k e^{i nu_k t} + A_k^dag e^{-i nu_k t}) + sum_j S_j."""

    space: HilbertSpace
    terms: tuple = ()
    static_terms: tuple = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "static_terms", tuple(self.static_terms))
        for t in terms:
            if t.op.space != self.space:
                raise HilbertError(f"term {t.name!r} lives on another space")
        for s in self.static_terms:
            if s.space != self.space:
                raise HilbertError("static term lives on another space")

    def at(self, t: float) -> sp.csr_matrix:
        D = self.space.dim
        out = sp.csr_matrix((D, D), dtype=complex)
        for term in self.terms:
            ph = np.exp(1j * term.nu * t)
            A = term.op.matrix
            out = out + A * ph + A.conj().T * np.conj(ph)
        for s in self.static_terms:
            out = out + s.matrix
        return out.tocsr()

    def operator_at(self, t: float) -> Operator:
        return Operator(self.space, self.at(t))

    def components(self) -> list[tuple[sp.csr_matrix, float]]:
        """Split into (M_k, nu_k) with H(t) = sum_k M_k e^{i nu_k t}; equal frequencies merged."""
        acc: dict[float, sp.csr_matrix] = {}

        def add(m, nu):
            key = float(nu)
            acc[key] = acc[key] + m if key in acc else m

        for term in self.terms:
            A = term.op.matrix
            if term.nu == 0:
                add(A + A.conj().T, 0.0)
            else:
                add(A, term.nu)
                add(A.conj().T.tocsr(), -term.nu)
        for s in self.static_terms:
            add(s.matrix, 0.0)
        out = []
        for nu, m in acc.items():
            m = sp.csr_matrix(m)
            m.sum_duplicates()
            m.eliminate_zeros()
            if m.nnz:
                out.append((m, nu))
        return out

    @property
    def max_frequency(self) -> float:
        return max((abs(t.nu) for t in self.terms), default=0.0)

    def __add__(self, other: "TimeDependentHamiltonian") -> "TimeDependentHamiltonian":
        if other.space != self.space:
            raise HilbertError("Hamiltonians live on different spaces")
        return TimeDependentHamiltonian(self.space, self.terms + other.terms, self.static_terms + other.static_terms)

    def select(self, keep) -> "TimeDependentHamiltonian":
        """Keep only oscillating terms whose name satisfies ``keep(name)``."""
        return TimeDependentHamiltonian(self.space, [t for t in self.terms if keep(t.name)], self.static_terms)

    def is_hermitian_at(self, t: float, tol: float = 1e-10) -> bool:
        h = self.at(t)
        scale = max(1.0, abs(h).max()) if h.nnz else 1.0
        d = h - h.conj().T
        return d.nnz == 0 or abs(d).max() <= tol * scale


def _require(space: HilbertSpace, labels: Iterable[str]):
    missing = [l for l in labels if l not in space]
    if missing:
        raise HilbertError(f"space lacks subsystems {missing}")


def _guard_detuning(delta: float, coupling: float, what: str):
    if coupling > 0 and abs(delta) < 1e-3 * coupling:
        raise DeviceError(f"{what}: detuning {delta:.3e} is effectively zero for an off-resonant coupling")


def build_H1(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    _require(space, ["qutrit", "c1"])
    A = p.g_r * (destroy(space, "c1") @ transition(space, "g", "e"))
    return TimeDependentHamiltonian(space, [Term(A, 0.0, "g_r")])


def build_H2(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    if p.n < 2 and not p.mu:
        raise DeviceError("build_H2 needs at least one off-resonant cavity")
    labels = list(p.Delta) + list(p.Delta_p)
    _require(space, ["qutrit", *labels])
    s_fg = transition(space, "g", "f")
    s_fe = transition(space, "e", "f")
    terms = []
    for c, d in p.Delta.items():
        _guard_detuning(d, p.g[c], f"Delta_{c}")
        terms.append(Term(p.g[c] * (destroy(space, c) @ s_fg), d, f"g_{c}_fg"))
    for c, d in p.Delta_p.items():
        _guard_detuning(d, p.mu[c], f"Delta_{c}")
        terms.append(Term(p.mu[c] * (destroy(space, c) @ s_fe), d, f"mu_{c}_fe"))
    return TimeDependentHamiltonian(space, terms)


def build_H_eff_dispersive(p: DeviceParams, space: HilbertSpace, include_f: bool = False) -> TimeDependentHamiltonian:
    d = derive(p)
    _require(space, ["qutrit", *d.lambda_, *d.lambda_p])
    proj = {lv: transition(space, lv, lv) for lv in "gef"}
    I = Operator.identity(space)
    H = Operator.zero(space)
    for c, lam in d.lambda_.items():
        a = destroy(space, c)
        n = a.dag() @ a
        H = H - lam * (proj["g"] @ n)
        if include_f:
            H = H + lam * (proj["f"] @ (n + I))
    for c, lam in d.lambda_p.items():
        b = destroy(space, c)
        n = b.dag() @ b
        H = H - lam * (proj["e"] @ n)
        if include_f:
            H = H + lam * (proj["f"] @ (n + I))
    return TimeDependentHamiltonian(space, [], [H])


def build_H3(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    _require(space, ["qutrit", "c1p"])
    s_eg = transition(space, "g", "e")
    a = destroy(space, "c1p")
    _guard_detuning(p.Delta_tilde, p.g_tilde, "Delta_tilde")
    terms = [
        Term(p.g_tilde * (a @ s_eg), p.Delta_tilde, "gt_eg"),
        Term(p.Omega_p * np.exp(-1j * p.phi) * s_eg, -(p.drive_frequency - p.omega_eg), "Om_eg"),
    ]
    return TimeDependentHamiltonian(space, terms)


def build_H_eff_drive(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    """Rotating-frame drive term Omega_p e^{-i phi} e^{i 4 omega_tilde n t} sigma_eg^+ + h.c.

    Expressed as one oscillating term per Fock level of cavity 1'.
    """
    _require(space, ["qutrit", "c1p"])
    wt = p.g_tilde ** 2 / (2 * p.Delta_tilde)
    dim = space.dim_of("c1p")
    s_eg = transition(space, "g", "e")
    terms = []
    for k in range(dim):
        P = np.zeros((dim, dim))
        P[k, k] = 1.0
        A = p.Omega_p * np.exp(-1j * p.phi) * (embed(P, space, "c1p") @ s_eg)
        terms.append(Term(A, 4 * wt * k, f"drive_n{k}"))
    return TimeDependentHamiltonian(space, terms)


def drive_frame_generator(p: DeviceParams, space: HilbertSpace) -> Operator:
    """H0 = (g~^2/Delta~)(n + 1/2) sigma_z on (qutrit, c1')."""
    a = destroy(space, "c1p")
    n = a.dag() @ a
    sz = transition(space, "e", "e") - transition(space, "g", "g")
    return (p.g_tilde ** 2 / p.Delta_tilde) * ((n + 0.5 * Operator.identity(space)) @ sz)


def drive_frame_unitary(p: DeviceParams, space: HilbertSpace, t: float) -> Operator:
    """U = exp(-i H0 t); maps rotating-frame states back to the interaction picture."""
    diag = drive_frame_generator(p, space).matrix.diagonal()
    return Operator(space, sp.diags(np.exp(-1j * diag * t), format="csr"))


def build_crosstalk(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    terms = []
    for (k, l) in p.crosstalk_pairs():
        if k not in space or l not in space:
            continue
        gkl = p.crosstalk_coupling(k, l)
        if gkl == 0:
            continue
        dkl = p.omega_c[k] - p.omega_c[l]
        if dkl == 0:
            warnings.warn(f"resonant crosstalk between {k} and {l}", RuntimeWarning, stacklevel=2)
        A = gkl * (destroy(space, k).dag() @ destroy(space, l))
        terms.append(Term(A, dkl, f"xt_{k}_{l}"))
    return TimeDependentHamiltonian(space, terms)


def build_H2_full(p: DeviceParams, space: HilbertSpace, crosstalk: bool = True) -> TimeDependentHamiltonian:
    """Off-resonant step with unwanted transition couplings and inter-cavity crosstalk (n = 2)."""
    if p.n != 2:
        raise DeviceError(f"the full realistic Hamiltonian is defined for n = 2 only (got n = {p.n})")
    _require(space, ["qutrit", *cavity_labels(2)])
    s = {k: transition(space, k[0], k[1]) for k in ("gf", "ef", "ge")}
    u = p.unwanted
    terms = []
    for c, d in p.Delta.items():
        a = destroy(space, c)
        g = p.g[c]
        _guard_detuning(d, g, f"Delta_{c}")
        terms += [
            Term(g * (a @ s["gf"]), d, f"g_{c}_fg"),
            Term(u["g_fe"] * g * (a @ s["ef"]), p.omega_fe - p.omega_c[c], f"g_{c}_fe"),
            Term(u["g_eg"] * g * (a @ s["ge"]), p.omega_eg - p.omega_c[c], f"g_{c}_eg"),
        ]
    for c, d in p.Delta_p.items():
        b = destroy(space, c)
        mu = p.mu[c]
        _guard_detuning(d, mu, f"Delta_{c}")
        terms += [
            Term(mu * (b @ s["ef"]), d, f"mu_{c}_fe"),
            Term(u["mu_fg"] * mu * (b @ s["gf"]), p.omega_fg - p.omega_c[c], f"mu_{c}_fg"),
            Term(u["mu_eg"] * mu * (b @ s["ge"]), p.omega_eg - p.omega_c[c], f"mu_{c}_eg"),
        ]
    H = TimeDependentHamiltonian(space, terms)
    if crosstalk:
        H = H + build_crosstalk(p, space)
    return H


def build_H3_full(p: DeviceParams, space: HilbertSpace) -> TimeDependentHamiltonian:
    """Driven conditional-rotation step with unwanted cavity-1' and drive couplings."""
    _require(space, ["qutrit", "c1p"])
    w1 = p.omega_c1p_shifted
    wp = p.drive_frequency
    u = p.unwanted
    a = destroy(space, "c1p")
    s = {k: transition(space, k[0], k[1]) for k in ("gf", "ef", "ge")}
    ph = np.exp(-1j * p.phi)
    terms = [
        Term(p.g_tilde * (a @ s["ge"]), p.omega_eg - w1, "gt_eg"),
        Term(u["gt_fg"] * p.g_tilde * (a @ s["gf"]), p.omega_fg - w1, "gt_fg"),
        Term(u["gt_fe"] * p.g_tilde * (a @ s["ef"]), p.omega_fe - w1, "gt_fe"),
        Term(p.Omega_p * ph * s["ge"], -(wp - p.omega_eg), "Om_eg"),
        Term(u["Om_fg"] * p.Omega_p * ph * s["gf"], -(wp - p.omega_fg), "Om_fg"),
        Term(u["Om_fe"] * p.Omega_p * ph * s["ef"], -(wp - p.omega_fe), "Om_fe"),
    ]
    return TimeDependentHamiltonian(space, terms)


def collapse_operators(p: DeviceParams, space: HilbertSpace) -> list[tuple[Operator, float]]:
    """(L, rate) pairs; each contributes rate * (L rho L^dag - {L^dag L, rho}/2)."""
    out = []
    for c in cavity_labels(p.n):
        if c in space and p.kappa.get(c, 0.0) > 0:
            out.append((destroy(space, c), p.kappa[c]))
    if "qutrit" in space:
        for (lo, hi), rate in ((("g", "e"), p.gamma_eg), (("e", "f"), p.gamma_fe), (("g", "f"), p.gamma_fg)):
            if rate > 0:
                out.append((transition(space, hi, lo), rate))
        if p.gamma_e_phi > 0:
            out.append((transition(space, "e", "e"), p.gamma_e_phi))
        if p.gamma_f_phi > 0:
            out.append((transition(space, "f", "f"), p.gamma_f_phi))
    return out


# --- parameter paths ----------------------------------------------------------

def _norm_key(group: str, key: str, p: DeviceParams) -> str:
    if group in ("g", "mu", "kappa", "omega_c") and not key.startswith("c"):
        key = f"c{key}"
    return key


def set_path(p: DeviceParams, path: str, value) -> DeviceParams:
    """Return a copy with one parameter replaced.

    Paths: plain field names (``alpha``, ``Omega_p``), ``group.key`` for map
    fields (``g.c2``, ``kappa.c1p``, ``unwanted.gt_fg``), ``group.all`` to set
    every entry, and the shorthands ``T`` (qutrit rates from a coherence scale)
    and ``kappa_inv`` (uniform cavity lifetime).
    """
    if path == "T":
        return replace(p, **rates_from_T(float(value)))
    if path == "kappa_inv":
        k = 0.0 if math.isinf(float(value)) else 1.0 / float(value)
        return replace(p, kappa={c: k for c in p.kappa})
    group, _, key = path.partition(".")
    if not key:
        if group not in p.__dataclass_fields__:
            raise DeviceError(f"unknown parameter path {path!r}")
        changes = {group: value}
        if group == "Omega_p" and p.Omega_p_rule == "match":
            changes["Omega_p_rule"] = "explicit"
        return replace(p, **changes)
    if group not in ("g", "mu", "kappa", "omega_c", "unwanted", "crosstalk"):
        raise DeviceError(f"unknown parameter group in {path!r}")
    current = dict(getattr(p, group))
    if key == "all":
        for k in current:
            current[k] = float(value)
    else:
        key = _norm_key(group, key, p)
        if group != "crosstalk" and key not in current:
            raise DeviceError(f"unknown key {key!r} in {group}")
        current[key] = float(value)
    changes = {group: current}
    if group == "mu" and p.mu_rule == "match":
        changes["mu_rule"] = "explicit"
    return replace(p, **changes)


def get_path(p: DeviceParams, path: str):
    if path == "T":
        return 1.0 / p.gamma_fg if p.gamma_fg else math.inf
    if path == "kappa_inv":
        k = next(iter(p.kappa.values()))
        return 1.0 / k if k else math.inf
    group, _, key = path.partition(".")
    if not key:
        return getattr(p, group)
    mapping = getattr(p, group)
    if key == "all":
        return next(iter(mapping.values()))
    return mapping[_norm_key(group, key, p)]
