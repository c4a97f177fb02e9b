import math

import numpy as np
import pytest

from fockcollapse import measurement as ms
from fockcollapse.errors import InputError, ScenarioError
from fockcollapse.fock import BasisState, Mode, StateVector, basis_vector
from fockcollapse.sectors import is_cross_sector_superposition, signatures_of


def test_spin_up_deterministic():
    scn = ms.spin_scenario()
    up = basis_vector(scn.registry, BasisState.of(scn.input_modes[0]))
    for seed in range(5):
        rec = ms.run_measurement(scn, up, np.random.default_rng(seed))
        assert rec.fired_region == "up" and rec.reported_eigenvalue == 0.5
        assert rec.collapse_event.sector_probability == pytest.approx(1.0)


def test_record_fields():
    scn = ms.splitter_scenario()
    rec = ms.run_measurement(scn, ms.polarization_state(scn, 0.4), np.random.default_rng(1), "9/0/3")
    assert rec.reported_eigenvalue == scn.record_map[rec.fired_region]
    assert len(rec.amplification_tag) == 12
    assert rec.collapse_event.content_changed
    assert not is_cross_sector_superposition(rec.collapse_event.post_state)


def test_coupling_stage_keeps_content():
    scn = ms.splitter_scenario()
    psi = ms.polarization_state(scn, 0.7)
    coupled = ms.coupling_stage(scn, psi)
    assert len(signatures_of(coupled)) == 1
    assert coupled.norm() == pytest.approx(1.0)
    assert len(signatures_of(ms.pipeline_out_state(scn, psi))) == 2


@pytest.mark.parametrize("deg", [0, 22.5, 45, 67.5, 90])
def test_polarization_born_weights(deg):
    scn = ms.splitter_scenario()
    th = math.radians(deg)
    n = 10_000
    b = ms.run_measurement_batch(scn, ms.polarization_state(scn, th), int(deg * 10), n)
    assert b.max_fired_per_run() == b.min_fired_per_run() == 1
    p = math.cos(th) ** 2
    sd = math.sqrt(p * (1 - p) / n)
    f = b.counts()["H"] / n
    assert abs(f - p) <= 3 * sd + 1e-12


def test_non_unitary_coupling_rejected():
    with pytest.raises(ScenarioError):
        ms.splitter_scenario(coupling=np.array([[1.0, 0.0], [0.0, 0.5]]))


def test_detector_without_content_change_rejected():
    base = ms.splitter_scenario()
    # a detector that puts the absorber straight back changes nothing
    d = base.detectors[0]
    dud = ms.Detector(d.region, d.probe, d.absorber, (d.absorber,), consumes_probe=False)
    with pytest.raises(ScenarioError):
        ms.MeasurementScenario(base.registry, base.input_modes, base.region_modes, base.coupling,
                               (dud, base.detectors[1]), base.record_map)


def test_scenario_validation():
    base = ms.splitter_scenario()
    with pytest.raises(ScenarioError):
        ms.MeasurementScenario(base.registry, base.input_modes, base.region_modes, base.coupling,
                               base.detectors, {"H": 1})
    with pytest.raises(ScenarioError):
        ms.MeasurementScenario(base.registry, base.input_modes, base.region_modes, base.coupling,
                               (base.detectors[0], base.detectors[0]), base.record_map)


def test_unnormalized_input_rejected():
    scn = ms.splitter_scenario()
    psi = StateVector({BasisState.of(scn.input_modes[0]): 2.0}, scn.registry)
    with pytest.raises(InputError):
        ms.pipeline_out_state(scn, psi)


def test_double_slit():
    prof = ms.two_slit_profile(40)
    h = ms.double_slit_scenario(40, prof, 0, 100_000)
    assert h.hits_per_trial == 1
    assert h.counts.sum() == 100_000
    assert np.abs(h.z_scores).max() < 3
    assert h.chi_square()[1] > 0.001


def test_double_slit_single_path_flat():
    h = ms.double_slit_scenario(10, ms.single_path_profile(10), 4, 50_000)
    assert np.allclose(h.probabilities, 0.1)
    assert h.chi_square()[1] > 0.001


def test_double_slit_bad_profile():
    with pytest.raises(InputError):
        ms.double_slit_scenario(4, np.ones(4), 0, 10)
    with pytest.raises(InputError):
        ms.double_slit_scenario(5, ms.single_path_profile(4), 0, 10)


def test_trajectory():
    assert ms.trajectory_scenario(0, ms.drift_step(2), 0) == []
    step = ms.drift_step(2, spread=1.0)
    events = ms.trajectory_scenario(30, step, 11)
    assert len(events) == 30
    assert all(len({ev.chosen_signature}) == 1 and not is_cross_sector_superposition(ev.post_state)
               for ev in events)
    drift = ms.infer_drift(events)
    assert abs(drift - 2) < 4 * step.offset_sd / math.sqrt(30)
    assert events[3].seed_path == "step/3"


def test_step_model_validation():
    with pytest.raises(InputError):
        ms.StepModel((0, 1), (1.0, 1.0))
    with pytest.raises(InputError):
        ms.trajectory_scenario(3, [ms.drift_step(1)], 0)


def test_epr_equal_angles_perfect_correlation():
    r = ms.epr_scenario((0.3, 0.3), 0, 20_000)
    assert r.counts[0, 1] == r.counts[1, 0] == 0
    assert r.correlation == 1.0
    assert r.detectors_per_wing == (1, 1)


def test_epr_born_table():
    r = ms.epr_scenario((0.0, math.pi / 8), 2, 100_000)
    assert r.born.sum() == pytest.approx(1.0)
    assert r.born_correlation == pytest.approx(math.cos(math.pi / 4))
    assert r.chi_square < 16.27     # chi2(3) at p = 0.001


def test_epr_marginal_independent():
    n = 100_000
    a = [ms.epr_scenario((0.0, tb), s, n).marginal_a_plus for s, tb in enumerate((0.0, 0.5, 1.2))]
    sd = math.sqrt(0.25 / n)
    assert all(abs(x - 0.5) < 3 * sd for x in a)
