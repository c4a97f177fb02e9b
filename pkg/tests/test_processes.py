import math

import numpy as np
import pytest

from fockcollapse import dynamics, models, processes
from fockcollapse.errors import InputError, ModelError
from fockcollapse.fock import BasisState, Mode
from fockcollapse.processes import DecaySpec
from fockcollapse.sectors import ContentSignature, is_cross_sector_superposition

PU = BasisState.of(Mode("Pu"))
PSQ = BasisState.of(Mode("Ps"), Mode("Q"))


def test_decay_unitary_state():
    s0 = processes.decay_unitary_state(0.1, 0.0)
    assert s0.amplitude(PU) == 1.0 and s0.amplitude(PSQ) == 0.0
    for t in (0.5, 3.0, 20.0):
        s = processes.decay_unitary_state(0.1, t)
        assert abs(s.amplitude(PU)) ** 2 == pytest.approx(math.exp(-0.2 * t), rel=1e-12)
        assert s.norm() == pytest.approx(1.0, abs=1e-14)
    late = processes.decay_unitary_state(0.1, 7 / 0.1 + 1)
    assert abs(late.amplitude(PSQ)) ** 2 > 1 - 1e-6
    with pytest.raises(ValueError):
        processes.decay_unitary_state(0.1, -1.0)


def test_decay_spec_validation():
    with pytest.raises(ValueError):
        DecaySpec(0.1, 1.0, 2.0)
    with pytest.raises(ValueError):
        DecaySpec(-0.1, 10.0, 1.0)


def test_jump_time_moments():
    spec = DecaySpec(0.05, 1e6, 5.0)
    t = processes.decay_jump_times(spec, 42, 100_000)
    sd = (1 / spec.rate) / math.sqrt(len(t))
    assert abs(t.mean() - 1 / spec.rate) < 4 * sd


def test_survival_ks_and_band():
    spec = DecaySpec(0.05, 200.0, 5.0)
    t = processes.decay_jump_times(spec, 1, 100_000)
    assert processes.survival_ks(t, spec)[1] > 0.01
    grid = np.linspace(0, 200, 21)
    emp = processes.empirical_survival(t, grid)
    assert np.abs(emp - np.exp(-spec.rate * grid)).max() < processes.survival_band(len(t))


def test_collapse_records():
    spec = DecaySpec(0.05, 50.0, 5.0)
    recs = processes.decay_collapse_sim(spec, 3, 200)
    assert recs[0].seed_path == "3/0/0"
    clipped = 0
    for r in recs:
        flags = [a for _, a in r.observations]
        assert all(x >= y for x, y in zip(flags, flags[1:]))
        if r.jump_time is None:
            clipped += 1
            assert all(flags)
        else:
            assert processes.decay_state_at(r, r.jump_time - 1e-9, spec).amplitude(PU) == 1
            assert processes.decay_state_at(r, r.jump_time + 1e-9, spec).amplitude(PSQ) == 1
    assert 0 < clipped < 200     # exp(-5) of the trials outlive the horizon


def test_interaction_window_delays_switch():
    spec = DecaySpec(0.05, 50.0, 5.0, interaction_window=2.0)
    r = processes.TrajectoryRecord(10.0, ())
    assert processes.decay_state_at(r, 11.0, spec).amplitude(PU) == 1
    assert processes.decay_state_at(r, 12.5, spec).amplitude(PSQ) == 1


def test_time_translation_diagnostic():
    spec = DecaySpec(0.05, 200.0, 5.0)
    rep = processes.time_translation_diagnostic(spec, [0.0, 1 / 0.05], rng=5, trials=100_000)
    assert rep.unitary_ratio == pytest.approx(math.e ** 2, rel=1e-12)
    assert rep.rows[0].collapse_conditional == rep.rows[1].collapse_conditional
    assert rep.max_abs_z < 3.0
    tiny = processes.time_translation_diagnostic(DecaySpec(0.05, 200.0, 1e-12), [0.0, 10.0])
    assert all(r.collapse_conditional < 1e-12 and r.unitary_window_weight < 1e-12 for r in tiny.rows)
    with pytest.raises(InputError):
        processes.time_translation_diagnostic(spec, [199.0])


def test_absorption_zero_coupling():
    m = models.absorption_toy(g=0.0)
    ev = processes.absorption_scenario(m, np.random.default_rng(0))
    assert ev.chosen_signature == ContentSignature.of("A", "gamma")
    assert ev.sector_probability == 1.0


def test_absorption_frequencies():
    m = models.absorption_toy()
    sampler = processes.absorption_sampler(m)
    assert set(sampler.signatures) == {ContentSignature.of("A", "gamma"), ContentSignature.of("A+", "e")}
    rep, _ = processes.sampler_report(sampler, 9, 10_000)
    assert max(abs(z) for z in rep.z_scores) < 3
    assert rep.cross_sector_posts == 0
    assert not any(is_cross_sector_superposition(p) for p in sampler.post_states)


def test_absorption_missing_species():
    with pytest.raises(ModelError):
        processes.absorption_scenario(models.decay_toy(), np.random.default_rng(0))


def test_pair_production():
    rep = processes.pair_production_scenario(models.pair_production_toy(), 0, 100_000)
    assert len(rep.signatures) == 3
    assert sum(rep.probabilities) == pytest.approx(1.0, abs=1e-9)
    assert sum(rep.counts) == rep.trials
    assert rep.cross_sector_posts == 0
    assert max(abs(z) for z in rep.z_scores) < 4


def test_pair_production_symmetric_couplings():
    m = models.pair_production_toy(g_e=0.1, g_mu=0.1, m_e=1.0, m_mu=1.0)
    rep = processes.pair_production_scenario(m, 1, 100_000)
    p = dict(zip(rep.signatures, rep.probabilities))
    pe, pm = p[ContentSignature.of("e", "e+")], p[ContentSignature.of("mu", "mu^c")]
    assert pe == pytest.approx(pm, abs=1e-9)
    c = dict(zip(rep.signatures, rep.counts))
    ne, nm = c[ContentSignature.of("e", "e+")], c[ContentSignature.of("mu", "mu^c")]
    assert abs(ne - nm) < 3 * math.sqrt(ne + nm)
