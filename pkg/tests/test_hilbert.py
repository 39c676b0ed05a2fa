import math
import warnings

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from sps2cs.hilbert import (
    DensityMatrix,
    FidelityClampWarning,
    HilbertError,
    HilbertSpace,
    Operator,
    StateVector,
    TruncationError,
    annihilation,
    coherent_overlap,
    coherent_state,
    default_cutoff,
    destroy,
    displacement,
    embed,
    entanglement_entropy,
    fidelity,
    from_text,
    number,
    partial_trace,
    qutrit_transition,
    tensor_states,
    to_text,
    transition,
)

dims_st = st.lists(st.integers(2, 4), min_size=1, max_size=3)


def random_state(space, rng):
    v = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    return StateVector(space, v).normalize()


# --- spaces ---------------------------------------------------------------------

def test_space_validation():
    with pytest.raises(HilbertError):
        HilbertSpace([])
    with pytest.raises(HilbertError):
        HilbertSpace([3, 1], ["a", "b"])
    with pytest.raises(HilbertError):
        HilbertSpace([3, 3], ["a", "a"])
    with pytest.raises(HilbertError):
        HilbertSpace([3, 3], ["a"])


def test_space_dim_and_index():
    s = HilbertSpace([3, 4, 5], ["qutrit", "c1", "c1p"])
    assert s.dim == 60
    assert s.index("c1") == 1
    assert s.dim_of("c1p") == 5
    assert "c1" in s and "c9" not in s
    assert s.basis_index(qutrit=1, c1=2, c1p=3) == 1 * 20 + 2 * 5 + 3


# --- operators ------------------------------------------------------------------

def test_annihilation_small():
    assert np.array_equal(annihilation(2).toarray(), [[0, 1], [0, 0]])
    a3 = annihilation(3).toarray()
    assert a3[0, 1] == 1 and a3[1, 2] == pytest.approx(math.sqrt(2))
    assert np.count_nonzero(a3) == 2
    with pytest.raises(HilbertError):
        annihilation(1)


def test_qutrit_transitions():
    s = qutrit_transition("g", "e").toarray()
    assert s[1, 0] == 1 and np.count_nonzero(s) == 1
    assert qutrit_transition("e", "f").toarray()[2, 1] == 1


def test_operator_algebra():
    space = HilbertSpace([3, 4], ["qutrit", "c1"])
    a = destroy(space, "c1")
    n = a.dag() @ a
    assert n.is_hermitian()
    assert not a.is_hermitian()
    assert np.allclose((n + n).toarray(), 2 * n.toarray())
    assert np.allclose((n - n).toarray(), 0)
    assert np.allclose(n.commutator(n).toarray(), 0)
    psi = StateVector.basis(space, qutrit=0, c1=2)
    assert n.expect(psi) == pytest.approx(2.0)
    with pytest.raises(HilbertError):
        Operator(space, np.eye(5))


def test_transition_embeds_on_qutrit():
    space = HilbertSpace([3, 2], ["qutrit", "c1"])
    up = transition(space, "g", "e")
    out = up.matrix @ StateVector.basis(space, qutrit=0, c1=1).amplitudes
    assert np.allclose(out, StateVector.basis(space, qutrit=1, c1=1).amplitudes)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12))
def test_ladder_commutator_below_top(dim):
    a = annihilation(dim).toarray()
    c = a.conj().T @ a - a @ a.conj().T
    assert np.allclose(c[:-1, :-1], -np.eye(dim - 1))


@settings(max_examples=25, deadline=None)
@given(dims_st, st.data())
def test_embed_preserves_spectrum(dims, data):
    labels = [f"s{i}" for i in range(len(dims))]
    space = HilbertSpace(dims, labels)
    which = data.draw(st.sampled_from(labels))
    d = space.dim_of(which)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    A = rng.normal(size=(d, d))
    A = A + A.T
    ev = np.sort(np.linalg.eigvalsh(A))
    big = np.sort(np.linalg.eigvalsh(embed(A, space, which).toarray()))
    assert np.allclose(big, np.sort(np.repeat(ev, space.dim // d)), atol=1e-10)


# --- states ---------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(dims_st, st.integers(0, 2**32 - 1))
def test_normalize_gives_unit_norm(dims, seed):
    space = HilbertSpace(dims)
    rng = np.random.default_rng(seed)
    psi = StateVector(space, rng.normal(size=space.dim) * 7.3 + 0.1j)
    assert abs(psi.normalize().norm() - 1) < 1e-9


def test_normalize_zero_raises():
    with pytest.raises(HilbertError):
        StateVector(HilbertSpace([2]), np.zeros(2)).normalize()


def test_tensor_states_order():
    space = HilbertSpace([3, 2], ["qutrit", "c1"])
    psi = tensor_states(space, [np.array([0, 1, 0]), np.array([0, 1])])
    assert psi.amplitudes[space.basis_index(qutrit=1, c1=1)] == 1


def test_density_matrix_checks():
    space = HilbertSpace([2])
    DensityMatrix(space, np.eye(2) / 2).check()
    with pytest.raises(HilbertError):
        DensityMatrix(space, np.diag([1.2, -0.2])).check()
    with pytest.raises(HilbertError):
        DensityMatrix(space, np.array([[0.5, 0.5], [0, 0.5]])).check()
    with pytest.raises(HilbertError):
        DensityMatrix(space, np.eye(2)).check()


# --- coherent states ------------------------------------------------------------

def test_coherent_state_leakage_and_error():
    st_ = coherent_state(1.2, 18)
    assert st_.meta["leakage"] < 1e-6
    assert abs(st_.norm() - 1) < 1e-12
    with pytest.raises(TruncationError) as exc:
        coherent_state(3.0, 6)
    assert exc.value.leakage > 1e-4


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 2.5))
def test_leakage_decreases_with_dim(alpha):
    leaks = [coherent_state(alpha, d, max_leakage=1.0).meta["leakage"] for d in range(3, 25)]
    assert all(b <= a + 1e-14 for a, b in zip(leaks, leaks[1:]))


def test_default_cutoff():
    # ceil(nbar + 5 sqrt(nbar)) + 4
    assert default_cutoff(4 * 1.2**2) == 22
    assert default_cutoff(1.44) == 12
    assert default_cutoff(4 * 1.86**2) == 37


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=2.0))
def test_displacement_vacuum_is_poisson(alpha):
    dim = default_cutoff(abs(alpha) ** 2) + 4
    vac = np.zeros(dim)
    vac[0] = 1
    probs = np.abs(displacement(alpha, dim).toarray() @ vac) ** 2
    nmax = min(int(dim - 5 * abs(alpha)), dim - 1)
    ref = poisson.pmf(np.arange(nmax + 1), abs(alpha) ** 2)
    assert np.allclose(probs[: nmax + 1], ref, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=2.0))
def test_displacement_inverse(alpha):
    dim = 45
    D = displacement(alpha, dim).toarray()
    Dm = displacement(-alpha, dim).toarray()
    assert np.allclose((Dm @ D)[:8, :8], np.eye(8), atol=1e-8)


def test_displacement_matches_expm_oracle():
    # independent oracle: scipy expm in a large space, cropped
    alpha = 0.7 - 0.4j
    a = np.diag(np.sqrt(np.arange(1, 60)), 1)
    ref = sla.expm(alpha * a.T - np.conj(alpha) * a)[:12, :12]
    assert np.allclose(displacement(alpha, 12).toarray(), ref, atol=1e-12)


def test_coherent_overlap():
    assert abs(coherent_overlap(1.86, -1.86)) == pytest.approx(math.exp(-2 * 1.86**2))
    a = coherent_state(0.5, 20).amplitudes
    b = coherent_state(-0.3j, 20).amplitudes
    assert np.vdot(a, b) == pytest.approx(coherent_overlap(0.5, -0.3j), abs=1e-12)


# --- fidelity and traces --------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(dims_st, st.integers(0, 2**32 - 1))
def test_fidelity_pure_is_overlap_modulus(dims, seed):
    space = HilbertSpace(dims)
    rng = np.random.default_rng(seed)
    psi, phi = random_state(space, rng), random_state(space, rng)
    F = fidelity(psi, phi.to_dm())
    assert F == pytest.approx(abs(psi.overlap(phi)), abs=1e-10)
    assert 0 <= F <= 1


def test_fidelity_clamp_warns():
    space = HilbertSpace([2])
    psi = StateVector(space, [1, 0])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        F = fidelity(psi, DensityMatrix(space, np.diag([1.01, 0])))
    assert F == 1.0
    assert any(issubclass(w.category, FidelityClampWarning) for w in rec)


def test_partial_trace_bell_is_mixed():
    space = HilbertSpace([2, 2], ["a", "b"])
    bell = StateVector(space, np.array([1, 0, 0, 1]) / math.sqrt(2))
    red = partial_trace(bell, ["a"])
    assert np.allclose(red.matrix, np.eye(2) / 2)
    assert entanglement_entropy(bell, ["a"]) == pytest.approx(math.log(2))
    red_dm = partial_trace(bell.to_dm(), ["b"])
    assert np.allclose(red_dm.matrix, np.eye(2) / 2)


def test_cat_register_purity_bound():
    # (|a,a> + |-a,-a>)/N traced onto both CS modes stays pure; onto one mode the
    # purity is bounded by the coherent-state overlap.
    alpha = 1.2
    space = HilbertSpace([12, 12], ["c1p", "c2p"])
    a, m = coherent_state(alpha, 12).amplitudes, coherent_state(-alpha, 12).amplitudes
    psi = StateVector(space, np.kron(a, a) + np.kron(m, m)).normalize()
    assert partial_trace(psi, ["c1p", "c2p"]).purity() == pytest.approx(1.0, abs=1e-12)
    assert partial_trace(psi, ["c1p"]).purity() >= 0.5 - 1e-9
    assert partial_trace(psi, ["c1p", "c2p"]).purity() >= 1 - 2 * math.exp(-2 * alpha**2)


@settings(max_examples=20, deadline=None)
@given(dims_st, st.integers(0, 2**32 - 1))
def test_partial_trace_is_valid_state(dims, seed):
    space = HilbertSpace(dims)
    rng = np.random.default_rng(seed)
    psi = random_state(space, rng)
    red = partial_trace(psi.to_dm(), [space.labels[0]])
    red.check(1e-9)


def test_text_round_trip():
    space = HilbertSpace([3, 2], ["qutrit", "c1"])
    rng = np.random.default_rng(3)
    psi = random_state(space, rng)
    back = from_text(to_text(psi))
    assert back.space == space and np.allclose(back.amplitudes, psi.amplitudes, atol=0)
    op = number(2)
    op2 = embed(op, space, "c1")
    back = from_text(to_text(op2))
    assert np.allclose(back.toarray(), op2.toarray())
    dm = psi.to_dm()
    assert np.allclose(from_text(to_text(dm)).matrix, dm.matrix)
