import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockcollapse import collapse, dynamics, models
from fockcollapse.collapse import CollapseSampler, collapse_sample, gamma_from_s, is_unistochastic
from fockcollapse.errors import DegenerateStateError, InputError, SectorIndexError
from fockcollapse.fock import BOSON, FERMION, BasisState, Mode, ParticleSpecies, Registry, StateVector
from fockcollapse.sectors import ContentSignature, is_cross_sector_superposition, signature

G = Mode("gamma")
GAMMA = BasisState.of(G)
PAIR = BasisState.of(Mode("e"), Mode("e+"))


@pytest.fixture
def reg():
    return Registry([ParticleSpecies("gamma", BOSON), ParticleSpecies("e", FERMION),
                     ParticleSpecies("e+", FERMION)], n_max=2)


def test_sector_probabilities(reg):
    s = StateVector({GAMMA: 0.6, PAIR: 0.8}, reg)
    p = collapse.sector_probabilities(s)
    assert p[ContentSignature.of("gamma")] == pytest.approx(0.36)
    assert p[ContentSignature.of("e", "e+")] == pytest.approx(0.64)
    assert list(collapse.sector_probabilities(StateVector({GAMMA: 1.0}, reg)).values()) == [pytest.approx(1.0)]
    with pytest.raises(DegenerateStateError):
        collapse.sector_probabilities(StateVector({}, reg))


def test_single_sector_is_deterministic(reg):
    s = StateVector({GAMMA: 0.6, BasisState.from_map({G: 2}): 0.8j}, reg)
    ev = collapse_sample(np.random.default_rng(0), s, signature(GAMMA))
    assert ev.post_state is s
    assert ev.chosen_signature == ContentSignature.of("gamma")
    assert not ev.content_changed
    assert ev.sector_probability == pytest.approx(1.0)


def test_intra_sector_superposition_preserved(reg):
    a, b, c = 0.3, 0.4j, math.sqrt(1 - 0.25)
    s = StateVector({GAMMA: a, BasisState.from_map({G: 2}): b, PAIR: c}, reg)
    sampler = CollapseSampler(s)
    k = sampler.signatures.index(ContentSignature.of("gamma"))
    post = sampler.event(k).post_state
    n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    assert post.amplitude(GAMMA) == pytest.approx(a / n)
    assert post.amplitude(BasisState.from_map({G: 2})) == pytest.approx(b / n)
    assert sampler.event(k).sector_probability == pytest.approx(0.25, abs=1e-12)


def test_frequency_oracle(reg):
    s = StateVector({GAMMA: 0.6, PAIR: 0.8}, reg)
    n = 100_000
    batch = CollapseSampler(s).batch(7, n)
    f = batch.frequencies()[ContentSignature.of("gamma")]
    assert abs(f - 0.36) < 3 * math.sqrt(0.36 * 0.64 / n)
    ev = batch.event(5000)
    assert ev.seed_path == "7/1/904"
    assert not is_cross_sector_superposition(ev.post_state)


def test_collapse_idempotent(reg):
    s = StateVector({GAMMA: 0.6, PAIR: 0.8}, reg)
    rng = np.random.default_rng(3)
    for _ in range(20):
        ev = collapse_sample(rng, s)
        again = collapse_sample(rng, ev.post_state)
        assert again.post_state is ev.post_state
        assert {signature(b) for b in ev.post_state.support} == {ev.chosen_signature}


def test_batch_reproducible(reg):
    s = StateVector({GAMMA: 0.6, PAIR: 0.8}, reg)
    a = CollapseSampler(s).batch(11, 9000).choices
    b = CollapseSampler(s).batch(11, 9000).choices
    assert np.array_equal(a, b)
    # trial i depends only on (root, i): a longer batch shares the prefix
    c = CollapseSampler(s).batch(11, 12000).choices
    assert np.array_equal(a, c[:9000])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.05, 0.95))
def test_frequencies_converge(seed, p):
    reg = Registry([ParticleSpecies("gamma"), ParticleSpecies("e", FERMION), ParticleSpecies("e+", FERMION)])
    s = StateVector({GAMMA: math.sqrt(p), PAIR: math.sqrt(1 - p)}, reg)
    n = 10_000
    f = CollapseSampler(s).batch(seed, n).frequencies()[ContentSignature.of("gamma")]
    assert abs(f - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_gamma_identity():
    S = dynamics.extract_s_matrix(models.decay_toy(0.0), 100.0)
    g = gamma_from_s(S)
    assert g.row_labels == g.col_labels
    assert np.array_equal(g.entries, np.eye(len(g.row_labels)))


def test_gamma_rows_stochastic():
    S = dynamics.extract_s_matrix(models.pair_production_toy(), 500.0)
    g = gamma_from_s(S)
    assert np.abs(g.row_sums() - 1).max() < 1e-9
    assert g.is_stochastic()


def test_gamma_decay_oracle():
    S = dynamics.extract_s_matrix(models.decay_toy(0.1, 0.3), 500.0)
    pu, psq = BasisState.of(Mode("Pu")), BasisState.of(Mode("Ps"), Mode("Q"))
    g = gamma_from_s(S, weights={pu: 1.0})
    p = dynamics.transition_probability(S, pu, psq)
    assert g[signature(pu), signature(psq)] == pytest.approx(p, abs=1e-14)
    assert g[signature(pu), signature(pu)] == pytest.approx(1 - p, abs=1e-9)


def test_gamma_index_error():
    S = dynamics.extract_s_matrix(models.decay_toy(0.0), 100.0)
    with pytest.raises(SectorIndexError):
        gamma_from_s(S, rows=[ContentSignature.of("nothing")])


def test_unistochastic_identity_and_2x2():
    res = is_unistochastic(np.eye(3))
    assert res.verdict is True and res.witness_error < 1e-12
    for p in (0.0, 0.17, 0.5, 1.0):
        G = np.array([[p, 1 - p], [1 - p, p]])
        res = is_unistochastic(G)
        assert res.verdict is True
        U = res.witness
        assert np.allclose(U @ U.conj().T, np.eye(2))
        assert np.abs(np.abs(U) ** 2 - G).max() < 1e-8


def test_circulant_rejected():
    G = np.array([[0, .5, .5], [.5, 0, .5], [.5, .5, 0]])
    res = is_unistochastic(G)
    assert res.verdict is False and res.witness is None


def test_not_doubly_stochastic_false():
    assert is_unistochastic(np.array([[1.0, 0.0], [1.0, 0.0]])).verdict is False


@pytest.mark.parametrize("bad", [np.ones((2, 3)) / 3, np.array([[0.5, 0.6], [0.5, 0.5]]),
                                 np.array([[1.2, -0.2], [-0.2, 1.2]])])
def test_unistochastic_input_errors(bad):
    with pytest.raises(InputError):
        is_unistochastic(bad)


@pytest.mark.parametrize("n", [3, 4])
def test_witness_for_random_unitary(n):
    from scipy.stats import unitary_group
    U = unitary_group.rvs(n, random_state=n)
    G = np.abs(U) ** 2
    res = is_unistochastic(G)
    assert res.verdict is True
    assert np.abs(np.abs(res.witness) ** 2 - G).max() < 1e-8


def test_van_der_waerden_3x3_true():
    res = is_unistochastic(np.full((3, 3), 1 / 3))
    assert res.verdict is True
    assert res.witness_error < 1e-8


def test_gamma_table_roundtrip(tmp_path):
    G = np.array([[0.25, 0.75], [0.75, 0.25]])
    p = tmp_path / "g.txt"
    collapse.write_gamma_table(p, G, ["{gamma}", "{e,e+}"])
    back, labels = collapse.read_gamma_table(p)
    assert np.array_equal(back, G)
    assert labels == ["{gamma}", "{e,e+}"]
