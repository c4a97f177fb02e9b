"""Invariant batteries behind ``fockcollapse check``. Every check uses
fixed seeds, so a suite's verdict is reproducible."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import collapse, dynamics, fock, locality, measurement, models, processes

SUITES = ("algebra", "dynamics", "collapse", "locality", "measurement", "all")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float
    relation: str = "<"

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.suite}.{self.name}: {self.value:.6g} {self.relation} {self.threshold:g}"

    def as_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed,
                "value": self.value, "threshold": self.threshold, "relation": self.relation}


def _lt(suite, name, value, thr):
    return CheckResult(suite, name, bool(value < thr), float(value), thr, "<")


def _gt(suite, name, value, thr):
    return CheckResult(suite, name, bool(value > thr), float(value), thr, ">")


def algebra(n_registries: int = 50, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    worst, dims = 0.0, []
    for _ in range(n_registries):
        reg = fock.random_registry(rng, max_dim=1024)
        dims.append(reg.dimension())
        worst = max(worst, fock.commutator_defect_matrix(reg))
    # <x, a y> = <a^dagger x, y> on random states
    adj = 0.0
    for _ in range(10):
        reg = fock.random_registry(rng, max_dim=256)
        basis = reg.basis()
        x = fock.StateVector.from_dense(rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis)), reg, basis)
        y = fock.StateVector.from_dense(rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis)), reg, basis)
        for m in reg.modes:
            lhs = fock.inner_product(x, fock.annihilate(y, m))
            rhs = fock.inner_product(fock.create(x, m), y)
            # truncation can drop created amplitude only above n_max, where y has none
            adj = max(adj, abs(lhs - rhs))
    return [_lt("algebra", "commutator_defect", worst, 1e-12),
            _lt("algebra", "max_dimension", max(dims), 1025),
            _lt("algebra", "adjointness_defect", adj, 1e-10)]


def _models():
    return [models.decay_toy(), models.absorption_toy(), models.pair_production_toy()]


def dynamics_suite(seed: int = 0) -> list:
    out = []
    rng = np.random.default_rng(seed)
    worst_u, worst_s, worst_col, worst_comp = 0.0, 0.0, 0.0, 0.0
    for m in _models():
        H0, H1 = m.hamiltonians()
        for _ in range(3):
            t0, t1, t2 = np.sort(rng.uniform(-20, 20, 3))
            worst_u = max(worst_u, dynamics.unitarity_defect(dynamics.propagator(H0 + H1, t2 - t0, m.eig())),
                          dynamics.unitarity_defect(dynamics.interaction_picture_U(m, t0, t2)))
            comp = dynamics.interaction_picture_U(m, t1, t2) @ dynamics.interaction_picture_U(m, t0, t1)
            worst_comp = max(worst_comp, float(np.linalg.norm(comp - dynamics.interaction_picture_U(m, t0, t2), 2)))
        S = dynamics.extract_s_matrix(m, 500.0)
        worst_s = max(worst_s, S.unitarity_defect)
        worst_col = max(worst_col, float(np.abs((np.abs(S.entries) ** 2).sum(axis=0) - 1).max()))
    out.append(_lt("dynamics", "unitarity_defect", worst_u, 1e-10))
    out.append(_lt("dynamics", "composition_defect", worst_comp, 1e-10))
    out.append(_lt("dynamics", "s_matrix_unitarity", worst_s, 1e-10))
    out.append(_lt("dynamics", "column_sum_error", worst_col, 1e-9))
    slope = dyson_slope()
    out.append(_lt("dynamics", "dyson_order2_slope_error", abs(slope - 3.0), 0.3))
    return out


def dyson_slope(order: int = 2, couplings=(0.02, 0.04, 0.08, 0.16), tau0: float = 0.0, tau: float = 10.0) -> float:
    base = models.decay_toy(1.0)
    defects = []
    for g in couplings:
        m = base.with_coupling_scale(g)
        U = dynamics.interaction_picture_U(m, tau0, tau)
        D = dynamics.dyson_truncated(m, order, tau0, tau)
        defects.append(np.linalg.norm(D - U, 2))
    return float(np.polyfit(np.log(couplings), np.log(defects), 1)[0])


def collapse_suite(seed: int = 0, trials: int = 100_000) -> list:
    out = []
    sampler = processes.pair_production_sampler(models.pair_production_toy())
    worst_z, crossed = 0.0, 0
    for s in range(3):
        rep, _ = processes.sampler_report(sampler, seed + s, trials)
        worst_z = max(worst_z, max(abs(z) for z in rep.z_scores))
        crossed += rep.cross_sector_posts
    out.append(_lt("collapse", "pair_production_max_z", worst_z, 4.0))
    out.append(_lt("collapse", "cross_sector_post_states", crossed, 0.5))
    # collapsing a post-state again is deterministic
    post = sampler.post_states[0]
    again = collapse.CollapseSampler(post)
    out.append(_lt("collapse", "post_state_resample_sectors", len(again.signatures), 1.5))
    spec = processes.DecaySpec(0.05, 200.0, 5.0)
    t = processes.decay_jump_times(spec, seed, trials)
    out.append(_gt("collapse", "decay_ks_pvalue", processes.survival_ks(t, spec)[1], 0.01))
    rep = processes.time_translation_diagnostic(spec, [0, 10, 20, 40, 80], jump_times=t)
    out.append(_lt("collapse", "memoryless_max_z", rep.max_abs_z, 3.0))
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(100):
        a = rng.uniform()
        G = np.array([[a, 1 - a], [1 - a, a]])
        res = collapse.is_unistochastic(G)
        ok &= res.verdict is True
        worst = max(worst, res.witness_error)
    out.append(_lt("collapse", "unistochastic_2x2_witness_error", worst if ok else math.inf, 1e-8))
    circ = collapse.is_unistochastic(np.array([[0, .5, .5], [.5, 0, .5], [.5, .5, 0]]))
    out.append(_lt("collapse", "circulant_rejected", 0.0 if circ.verdict is False else 1.0, 0.5))
    return out


def locality_suite(seed: int = 0, trials: int = 100_000) -> list:
    from scipy.stats import unitary_group
    out = []
    worst, idem = 0.0, 0.0
    for k in range(5):
        n = 2 + k % 2
        U = unitary_group.rvs(n ** 3, random_state=seed + k)
        d = locality.cluster_decompose_3(U, cells=(n, n, n))
        worst = max(worst, float(np.abs(d.reassemble() - U).max()))
        p1 = locality.spacelike_prune(d, [(2, 3)])
        p2 = locality.spacelike_prune(p1, [(2, 3)])
        idem = max(idem, float(np.abs(p1.reassemble() - p2.reassemble()).max()))
    out.append(_lt("locality", "reassembly_defect", worst, 1e-10))
    out.append(_lt("locality", "prune_idempotence", idem, 1e-15))
    bad = 0
    for q in [(1,), (-2,), (1, 0, 0), (0, 1, -1)]:
        bad += locality.momentum_exclusivity_check(q, grid_bounds=1).simultaneous_feasible
    out.append(_lt("locality", "simultaneous_branches_feasible", bad, 0.5))
    eng = locality.engine_no_signaling(trials, seed)
    out.append(_lt("locality", "engine_signaling_z", abs(eng.z_statistic), 3.0))
    hyp = locality.no_signaling_mc(0.2, trials, seed)
    out.append(_gt("locality", "hypothetical_pM_0.2_z", abs(hyp.z_statistic), 5.0))
    return out


def measurement_suite(seed: int = 0, trials: int = 100_000) -> list:
    out = []
    scn = measurement.splitter_scenario()
    worst_z, fired = 0.0, set()
    for k, deg in enumerate((0, 22.5, 45, 67.5, 90)):
        th = math.radians(deg)
        b = measurement.run_measurement_batch(scn, measurement.polarization_state(scn, th), seed + k, trials)
        fired |= {b.min_fired_per_run(), b.max_fired_per_run()}
        p = math.cos(th) ** 2
        sd = math.sqrt(p * (1 - p) / trials)
        f = b.counts()["H"] / trials
        worst_z = max(worst_z, 0.0 if sd == 0 else abs(f - p) / sd)
    out.append(_lt("measurement", "polarization_max_z", worst_z, 3.0))
    eq = measurement.epr_scenario((0.3, 0.3), seed, trials)
    out.append(_lt("measurement", "epr_equal_angle_mismatches", eq.counts[0, 1] + eq.counts[1, 0], 0.5))
    fired |= set(eq.detectors_per_wing)
    a1 = measurement.epr_scenario((0.0, 0.0), seed + 1, trials).marginal_a_plus
    a2 = measurement.epr_scenario((0.0, math.pi / 3), seed + 2, trials).marginal_a_plus
    sd = math.sqrt(2 * 0.25 / trials)
    out.append(_lt("measurement", "epr_marginal_shift_z", abs(a1 - a2) / sd, 3.0))
    h = measurement.double_slit_scenario(40, measurement.two_slit_profile(40), seed, trials)
    fired.add(h.hits_per_trial)
    out.append(_lt("measurement", "double_slit_max_z", float(np.abs(h.z_scores).max()), 3.0))
    out.append(_lt("measurement", "detectors_fired_per_run_not_one", float(fired != {1}), 0.5))
    return out


def run_suite(name: str) -> list:
    table = {"algebra": algebra, "dynamics": dynamics_suite, "collapse": collapse_suite,
             "locality": locality_suite, "measurement": measurement_suite}
    if name == "all":
        return [r for key in ("algebra", "dynamics", "collapse", "locality", "measurement") for r in table[key]()]
    return table[name]()
