import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fockcollapse import dynamics, models
from fockcollapse.dynamics import InteractionModel, Term, parse_ops
from fockcollapse.errors import AccuracyError, CapacityError, ConvergenceError, ModelError
from fockcollapse.fock import BasisState, Mode, ParticleSpecies, Registry, StateVector, basis_vector

PU = BasisState.of(Mode("Pu"))
PSQ = BasisState.of(Mode("Ps"), Mode("Q"))


def pair_index(model):
    idx = {b: i for i, b in enumerate(model.basis)}
    return idx[PU], idx[PSQ]


def test_free_model_h0_eigenvalues():
    reg = Registry([ParticleSpecies("x", max_occupation=3)], n_max=3)
    m = InteractionModel(reg, [(Mode("x"), 0.7)], [])
    H0, H1 = m.hamiltonians()
    for i, b in enumerate(m.basis):
        assert H0[i, i] == pytest.approx(0.7 * b.count(Mode("x")))
    assert not np.any(H1)


def test_decay_h1_entries():
    g = 0.13
    m = models.decay_toy(g)
    H0, H1 = m.hamiltonians()
    i, j = pair_index(m)
    assert np.count_nonzero(H1) == 2
    assert H1[i, j] == pytest.approx(g) and H1[j, i] == pytest.approx(g)


def test_boson_ladder_factor_in_h1():
    # a+(b)a+(b) a(c) from |c> gives sqrt(2)|2b>
    reg = Registry([ParticleSpecies("b"), ParticleSpecies("c")], n_max=2)
    m = InteractionModel(reg, [], [Term(0.5, parse_ops("b^ b^ c", reg))])
    _, H1 = m.hamiltonians()
    idx = {b: i for i, b in enumerate(m.basis)}
    two_b = BasisState.from_map({Mode("b"): 2})
    assert H1[idx[two_b], idx[BasisState.of(Mode("c"))]] == pytest.approx(0.5 * math.sqrt(2))


def test_non_hermitian_rejected():
    reg = Registry([ParticleSpecies("b"), ParticleSpecies("c")], n_max=2)
    m = InteractionModel(reg, [], [Term(0.5, parse_ops("b^ c", reg))], hermitize=False)
    with pytest.raises(ModelError):
        m.hamiltonians()


def test_capacity_error():
    reg = Registry([ParticleSpecies(s) for s in "abcdef"], n_max=6)
    m = InteractionModel(reg, [], [], dim_cap=50)
    with pytest.raises(CapacityError):
        m.hamiltonians()


def test_evolve_identity_and_phases():
    m = models.decay_toy(0.0)
    H0, _ = m.hamiltonians()
    s = basis_vector(m.registry, PU)
    assert (dynamics.evolve_exact(H0, 0.0, s, m.basis) - s).norm() < 1e-14
    out = dynamics.evolve_exact(H0, 1.7, s, m.basis)
    assert out.amplitude(PU) == pytest.approx(np.exp(-1j * 2.0 * 1.7))


@pytest.mark.parametrize("g,detuning", [(0.05, 0.0), (0.05, 0.2), (0.02, 0.1)])
def test_rabi_oracle(g, detuning):
    m = models.decay_toy(g, detuning)
    H0, H1 = m.hamiltonians()
    omega = math.sqrt(detuning ** 2 + 4 * g ** 2)
    for t in (0.0, 3.0, 17.0, 60.0):
        out = dynamics.evolve_exact(H0 + H1, t, basis_vector(m.registry, PU), m.basis)
        survival = 1 - (4 * g ** 2 / omega ** 2) * math.sin(omega * t / 2) ** 2
        assert abs(out.amplitude(PU)) ** 2 == pytest.approx(survival, abs=1e-12)


def test_energy_conserved():
    m = models.pair_production_toy()
    H0, H1 = m.hamiltonians()
    H = H0 + H1
    rng = np.random.default_rng(0)
    v = rng.normal(size=H.shape[0]) + 1j * rng.normal(size=H.shape[0])
    v /= np.linalg.norm(v)
    e0 = np.vdot(v, H @ v).real
    for t in (1.0, 10.0, 100.0):
        w = dynamics.propagator(H, t) @ v
        assert abs(np.vdot(w, H @ w).real - e0) < 1e-9 * abs(e0)


def test_interaction_picture_basics():
    free = models.decay_toy(0.0)
    assert np.allclose(dynamics.interaction_picture_U(free, -3.0, 5.0), np.eye(len(free.basis)))
    m = models.decay_toy(0.1, 0.3)
    assert np.allclose(dynamics.interaction_picture_U(m, 2.0, 2.0), np.eye(len(m.basis)), atol=1e-13)


def test_composition(rng):
    for m in (models.decay_toy(0.1, 0.3), models.pair_production_toy()):
        for _ in range(5):
            t0, t1, t2 = rng.uniform(-30, 30, 3)
            U = dynamics.interaction_picture_U
            assert np.linalg.norm(U(m, t1, t2) @ U(m, t0, t1) - U(m, t0, t2), 2) < 1e-10


def test_dyson_order0_and_order1():
    m = models.decay_toy(0.1, 0.4)
    assert np.array_equal(dynamics.dyson_truncated(m, 0, 0.0, 5.0), np.eye(len(m.basis)))
    # first order: -i g int_0^tau exp(i*delta*t) dt on the Pu <- PsQ element (E_Pu - E_PsQ = 0.4)
    tau, g, d = 5.0, 0.1, 0.4
    D1 = dynamics.dyson_truncated(m, 1, 0.0, tau, tol=1e-10)
    i, j = pair_index(m)
    exact = -1j * g * (np.exp(1j * d * tau) - 1) / (1j * d)
    assert D1[i, j] == pytest.approx(exact, abs=1e-9)
    resonant = models.decay_toy(0.1, 0.0)
    D1r = dynamics.dyson_truncated(resonant, 1, 0.0, tau, tol=1e-10)
    assert D1r[i, j] == pytest.approx(-1j * g * tau, abs=1e-12)


def test_dyson_slope():
    base = models.decay_toy(1.0)
    gs = [0.02, 0.04, 0.08, 0.16]
    defects = []
    for g in gs:
        m = base.with_coupling_scale(g)
        U = dynamics.interaction_picture_U(m, 0.0, 10.0)
        defects.append(np.linalg.norm(dynamics.dyson_truncated(m, 2, 0.0, 10.0) - U, 2))
    slope = np.polyfit(np.log(gs), np.log(defects), 1)[0]
    assert abs(slope - 3) < 0.3


def test_dyson_accuracy_error():
    with pytest.raises(AccuracyError):
        dynamics.dyson_truncated(models.decay_toy(0.1, 0.4), 2, 0.0, 50.0, step=5.0, tol=1e-12)


def test_s_matrix_free_is_identity():
    S = dynamics.extract_s_matrix(models.decay_toy(0.0), 100.0)
    assert np.array_equal(S.entries, np.eye(len(S.basis_index)))
    assert dynamics.transition_probability(S, PU, PU) == 1.0
    assert dynamics.transition_probability(S, PU, PSQ) == 0.0


def test_s_matrix_resonant_closed_form():
    # at resonance H1 acts on a degenerate pair, so U = exp(-i H1 int f) with int f = 2/eps
    g, eps = 0.1, 0.05
    S = dynamics.extract_s_matrix(models.decay_toy(g, 0.0, eps), 500.0)
    p = dynamics.transition_probability(S, PU, PSQ)
    assert p == pytest.approx(math.sin(2 * g / eps) ** 2, abs=1e-8)
    assert 0 < p < 1


def test_s_matrix_solve_ivp_oracle():
    g, d, eps = 0.1, 0.3, 0.05
    m = models.decay_toy(g, d, eps)
    S = dynamics.extract_s_matrix(m, 500.0)
    T = S.T

    def rhs(t, y):
        f = g * math.exp(-eps * abs(t))
        c = f * np.exp(1j * d * t)         # <Pu|H_I(t)|PsQ>
        return -1j * np.array([c * y[1], np.conj(c) * y[0]])

    sol = solve_ivp(rhs, (-T, T), np.array([1.0 + 0j, 0j]), method="DOP853", rtol=1e-11, atol=1e-13)
    p_oracle = abs(sol.y[1, -1]) ** 2
    assert dynamics.transition_probability(S, PU, PSQ) == pytest.approx(p_oracle, abs=1e-7)


@pytest.mark.parametrize("factory", [models.decay_toy, models.absorption_toy, models.pair_production_toy])
def test_s_matrix_unitary_and_columns(factory):
    S = dynamics.extract_s_matrix(factory(), 500.0)
    assert S.unitarity_defect < 1e-10
    assert S.recompute_defect() == pytest.approx(S.unitarity_defect)
    cols = (np.abs(S.entries) ** 2).sum(axis=0)
    assert np.all(np.abs(cols - 1) < 1e-9)


def test_charge_superselection():
    m = models.absorption_toy()
    assert m.charge_conserving()
    S = dynamics.extract_s_matrix(m, 500.0)
    q = np.array([m.registry.charge(b) for b in S.basis_index])
    mask = q[:, None] != q[None, :]
    assert np.abs(S.entries[mask]).max(initial=0) < 1e-10


def test_convergence_error_has_diagnostics():
    with pytest.raises(ConvergenceError) as info:
        dynamics.extract_s_matrix(models.decay_toy(0.1, 0.0, 0.001), 20.0)
    assert info.value.diagnostics


def test_out_state_matches_column():
    m = models.pair_production_toy()
    S = dynamics.extract_s_matrix(m, 500.0)
    b = BasisState.of(Mode("gamma"))
    out = S.out_state(b)
    assert out.norm() == pytest.approx(1.0, abs=1e-9)
    assert out.amplitude(b) == pytest.approx(S.entries[S.index(b), S.index(b)])
