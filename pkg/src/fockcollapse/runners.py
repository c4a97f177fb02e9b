"""One runner per ``process.kind``. Each returns a ``RunResult`` holding a
CSV table, a JSON summary and any extra files, all computed in memory
so nothing is written unless the whole run succeeds."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import collapse, dynamics, locality, measurement, processes, streams
from .config import ScenarioConfig, build_model
from .errors import InputError
from .fock import BasisState
from .sectors import signature


@dataclass
class RunResult:
    columns: list
    rows: list
    summary: dict
    files: dict = field(default_factory=dict)   # extra name -> text


def _sub_seed(root: int, k: int) -> int:
    return int(np.random.SeedSequence([int(root), int(k)]).generate_state(1)[0])


def _s_matrix(cfg, model):
    sched = model.t_schedule or (500.0,)
    return dynamics.extract_s_matrix(model, sched[0], schedule=sched, dt=cfg.data["model"]["dt"],
                                     tol=cfg.tolerances["s_matrix"])


def run_decay(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    spec = processes.DecaySpec(p["tau"], p["horizon"], p["window"], p["interaction_window"])
    seed, n = ex["seed"], ex["trials"]
    t = processes.decay_jump_times(spec, seed, n)
    ks, pv = processes.survival_ks(t, spec)
    grid = np.linspace(0.0, spec.horizon, p["survival_points"])
    emp = processes.empirical_survival(t, grid)
    band = processes.survival_band(n)
    theory = np.exp(-spec.rate * grid)
    rep = processes.time_translation_diagnostic(spec, p["s_grid"], jump_times=t)
    summary = {
        "kind": "decay", "tau": spec.tau, "rate": spec.rate, "trials": n, "root_seed": seed,
        "jumped": int(np.sum(~np.isnan(t))),
        "ks_statistic": ks, "ks_pvalue": pv,
        "survival": {"t": grid.tolist(), "empirical": emp.tolist(), "theory": theory.tolist(),
                     "dkw_halfwidth": band, "max_abs_error": float(np.abs(emp - theory).max())},
        "windows": [{"s": r.s, "collapse_conditional": r.collapse_conditional,
                     "mc_conditional": r.mc_conditional, "mc_sigma": r.mc_sigma, "z": r.z,
                     "unitary_window_weight": r.unitary_window_weight} for r in rep.rows],
        "max_window_z": rep.max_abs_z,
    }
    rows = []
    if ex["write_runs"]:
        rows = [(i, "" if math.isnan(x) else float(x), streams.seed_path(seed, i)) for i, x in enumerate(t)]
    return RunResult(["run_id", "jump_time", "seed_path"], rows, summary)


def _in_state(cfg, model) -> BasisState:
    """``gamma + A`` for absorption, a lone photon otherwise."""
    if cfg.kind == "absorption" or "A" in model.registry.species:
        return processes.absorption_in_state(model)
    processes.require_species(model, ["gamma"])
    return BasisState.of(model.registry.modes_of("gamma")[0])


def run_sectors(cfg: ScenarioConfig) -> RunResult:
    model = build_model(cfg)
    S = _s_matrix(cfg, model)
    b_in = _in_state(cfg, model)
    sampler = collapse.CollapseSampler(S.out_state(b_in), signature(b_in), S.T,
                                       cfg.tolerances["sector_eps"])
    ex = cfg.execution
    report, batch = processes.sampler_report(sampler, ex["seed"], ex["trials"])
    summary = {"kind": cfg.kind, "model": model.name, "in_state": str(b_in), "T": S.T,
               "unitarity_defect": S.unitarity_defect}
    summary.update(report.as_dict())
    rows = []
    if ex["write_runs"]:
        labels = [str(s) for s in sampler.signatures]
        rows = [(i, labels[k], streams.seed_path(ex["seed"], i)) for i, k in enumerate(batch.choices.tolist())]
    return RunResult(["run_id", "sector", "seed_path"], rows, summary)


def run_dyson(cfg: ScenarioConfig) -> RunResult:
    p = cfg.params
    base = build_model(cfg)
    scales = p.get("couplings") or [1.0]
    rows = []
    for c in scales:
        m = base.with_coupling_scale(c) if c != 1.0 else base
        U = dynamics.interaction_picture_U(m, p["tau0"], p["tau"])
        D = dynamics.dyson_truncated(m, p["order"], p["tau0"], p["tau"], tol=cfg.tolerances["dyson"])
        rows.append((float(c), float(np.linalg.norm(D - U, 2))))
    slope = None
    if len(rows) >= 2:
        x = np.log([r[0] for r in rows])
        y = np.log([r[1] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
    summary = {"kind": "dyson", "order": p["order"], "tau0": p["tau0"], "tau": p["tau"],
               "rows": [{"coupling": c, "defect": d} for c, d in rows], "slope": slope,
               "defect": rows[0][1] if len(rows) == 1 else None}
    return RunResult(["coupling", "defect"], rows, summary)


def run_unitarity(cfg: ScenarioConfig) -> RunResult:
    model = build_model(cfg)
    t0, t1, t2 = cfg.params["times"]
    H0, H1 = model.hamiltonians()
    exact = dynamics.unitarity_defect(dynamics.propagator(H0 + H1, t2 - t0, model.eig()))
    U20 = dynamics.interaction_picture_U(model, t0, t2)
    comp = dynamics.interaction_picture_U(model, t1, t2) @ dynamics.interaction_picture_U(model, t0, t1)
    S = _s_matrix(cfg, model)
    col = np.abs(np.sum(np.abs(S.entries) ** 2, axis=0) - 1.0).max()
    summary = {"kind": "unitarity", "model": model.name, "dimension": int(H0.shape[0]),
               "exact_defect": exact,
               "interaction_picture_defect": dynamics.unitarity_defect(U20),
               "composition_defect": float(np.linalg.norm(comp - U20, 2)),
               "s_matrix_defect": S.unitarity_defect,
               "max_column_sum_error": float(col), "T": S.T}
    rows = [(k, v) for k, v in summary.items() if isinstance(v, float)]
    return RunResult(["quantity", "value"], rows, summary)


def run_gamma(cfg: ScenarioConfig) -> RunResult:
    model = build_model(cfg)
    S = _s_matrix(cfg, model)
    p = cfg.params
    if p["block"] == "in_state":
        b_in = _in_state(cfg, model)
        S = S.block(S.component(b_in))
    G = collapse.gamma_from_s(S)
    res = collapse.is_unistochastic(G.entries, tol=cfg.tolerances["unistochastic"], seed=cfg.execution["seed"])
    labels = [str(s) for s in G.col_labels]
    rows = [(labels[i], labels[j], float(G.entries[i, j]))
            for i in range(G.entries.shape[0]) for j in range(G.entries.shape[1])]
    summary = {"kind": "gamma", "model": model.name, "block": p["block"], "labels": labels,
               "row_sums": G.row_sums().tolist(), "verdict": res.label, "reason": res.reason,
               "witness_error": res.witness_error}
    name = p["table"]
    return RunResult(["row", "column", "gamma"], rows, summary,
                     {name: collapse.format_gamma_table(G.entries, labels)})


def run_polarization(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    scn = measurement.splitter_scenario() if p["splitter"] == "polarization" else measurement.spin_scenario()
    angles = []
    rows = []
    for k, deg in enumerate(p["angles_deg"]):
        seed = _sub_seed(ex["seed"], k)
        th = math.radians(deg)
        batch = measurement.run_measurement_batch(scn, measurement.polarization_state(scn, th), seed, ex["trials"])
        counts = batch.counts()
        first = scn.labels[0]
        born = math.cos(th) ** 2
        f = counts[first] / ex["trials"]
        sd = math.sqrt(born * (1 - born) / ex["trials"])
        angles.append({"angle_deg": float(deg), "seed": seed, "counts": counts, "frequency_" + first: f,
                       "born": born, "z": 0.0 if sd == 0 else (f - born) / sd,
                       "max_fired_per_run": batch.max_fired_per_run(),
                       "min_fired_per_run": batch.min_fired_per_run()})
        if ex["write_runs"]:
            for i, r in enumerate(batch.fired()):
                rows.append((i, float(deg), r, scn.record_map[r], streams.seed_path(seed, i)))
    summary = {"kind": "polarization", "splitter": p["splitter"], "trials": ex["trials"],
               "root_seed": ex["seed"], "angles": angles}
    return RunResult(["run_id", "angle_deg", "fired_region", "eigenvalue", "seed_path"], rows, summary)


def run_double_slit(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    if p["profile"] == "two_slit":
        prof = measurement.two_slit_profile(p["cells"], p["separation"], p["width"], p["wavenumber"])
    elif p["profile"] == "single_path":
        prof = measurement.single_path_profile(p["cells"])
    else:
        if "amplitudes" not in p:
            raise InputError("profile 'custom' needs amplitudes")
        prof = np.asarray(p["amplitudes"], dtype=float)
    h = measurement.double_slit_scenario(p["cells"], prof, ex["seed"], ex["trials"])
    z = h.z_scores
    chi2, chi2_p = h.chi_square()
    rows = [(c, float(h.probabilities[c]), int(h.counts[c]), float(h.frequencies[c]), float(z[c]))
            for c in range(p["cells"])]
    summary = {"kind": "double_slit", "cells": p["cells"], "profile": p["profile"], "trials": ex["trials"],
               "root_seed": ex["seed"], "hits_per_trial": h.hits_per_trial,
               "max_abs_z": float(np.abs(z).max()), "cells_beyond_3_sigma": int(np.sum(np.abs(z) > 3)),
               "chi_square": chi2, "chi_square_pvalue": chi2_p}
    return RunResult(["cell", "probability", "count", "frequency", "z"], rows, summary)


def run_trajectory(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    step = measurement.drift_step(p["drift"], p["spread"])
    drifts, rows = [], []
    for i in range(ex["trials"]):
        g = streams.trial_generator(ex["seed"], i)
        events = measurement.trajectory_scenario(p["n_steps"], step, g, p["start_cell"])
        cells = measurement.trajectory_cells(events)
        if cells:
            drifts.append(measurement.infer_drift(events, p["start_cell"]))
        if ex["write_runs"]:
            rows += [(i, k, c, f"{streams.seed_path(ex['seed'], i)}/{ev.seed_path}")
                     for k, (c, ev) in enumerate(zip(cells, events))]
    mean = float(np.mean(drifts)) if drifts else None
    sd = float(np.std(drifts, ddof=1)) if len(drifts) > 1 else None
    z = None
    if drifts and p["n_steps"]:
        # per-chain drift sd is step sd / sqrt(n_steps)
        se = step.offset_sd / math.sqrt(p["n_steps"] * len(drifts))
        z = (mean - p["drift"]) / se
    summary = {"kind": "trajectory", "n_steps": p["n_steps"], "drift": p["drift"], "spread": p["spread"],
               "trials": ex["trials"], "root_seed": ex["seed"], "mean_inferred_drift": mean,
               "sd_inferred_drift": sd, "drift_z": z}
    return RunResult(["run_id", "step", "cell", "seed_path"], rows, summary)


def run_epr(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    rep, batch = measurement.epr_batch([math.radians(a) for a in p["angles_deg"]], ex["seed"], ex["trials"])
    rows = []
    if ex["write_runs"]:
        eig = {"+": 1, "-": -1}
        rows = [(i, a, b, eig[a], eig[b], streams.seed_path(ex["seed"], i))
                for i, (a, b) in enumerate(zip(batch.fired(0), batch.fired(1)))]
    summary = {"kind": "epr"}
    summary.update(rep.as_dict())
    summary["detectors_per_wing"] = list(rep.detectors_per_wing)
    return RunResult(["run_id", "fired_a", "fired_b", "eigenvalue_a", "eigenvalue_b", "seed_path"], rows, summary)


def run_no_signaling(cfg: ScenarioConfig) -> RunResult:
    p, ex = cfg.params, cfg.execution
    reports = [locality.no_signaling_mc(pm, ex["trials"], _sub_seed(ex["seed"], k)) for k, pm in enumerate(p["p_M"])]
    if p["engine"]:
        reports.append(locality.engine_no_signaling(ex["trials"], _sub_seed(ex["seed"], len(reports))))
    rows = [(r.source, r.p_M, r.p_both_on, r.p_one_off, r.z_statistic, r.trials) for r in reports]
    return RunResult(["source", "p_M", "p_both_on", "p_one_off", "z_statistic", "trials"], rows,
                     {"kind": "no_signaling", "reports": [r.as_dict() for r in reports]})


def run_cluster(cfg: ScenarioConfig) -> RunResult:
    from scipy.stats import unitary_group
    p = cfg.params
    n = p["cells"]
    U = unitary_group.rvs(n ** 3, random_state=cfg.execution["seed"]) if n > 1 else np.array([[1.0 + 0j]])
    d = locality.cluster_decompose_3(U, cells=(n, n, n))
    defect = float(np.abs(d.reassemble() - U).max())
    sep = [tuple(x) for x in p["separated"]]
    pruned = locality.spacelike_prune(d, sep)
    verdict = locality.momentum_exclusivity_check(p["q1"], grid_bounds=1)
    rows = [(name, float(np.abs(M).max())) for name, M in pruned.terms().items()]
    summary = {"kind": "cluster", "cells": n, "reassembly_defect": defect, "separated": [list(s) for s in sep],
               "surviving_terms": pruned.nonzero_terms(),
               "exclusivity": {"q1": list(verdict.q1), "simultaneous_feasible": verdict.simultaneous_feasible,
                               "outcomes_checked": verdict.outcomes_checked}}
    return RunResult(["term", "max_abs"], rows, summary)


RUNNERS = {
    "decay": run_decay,
    "absorption": run_sectors,
    "pair_production": run_sectors,
    "dyson": run_dyson,
    "unitarity": run_unitarity,
    "gamma": run_gamma,
    "polarization": run_polarization,
    "double_slit": run_double_slit,
    "trajectory": run_trajectory,
    "epr": run_epr,
    "no_signaling": run_no_signaling,
    "cluster": run_cluster,
}


def execute(cfg: ScenarioConfig) -> RunResult:
    return RUNNERS[cfg.kind](cfg)
