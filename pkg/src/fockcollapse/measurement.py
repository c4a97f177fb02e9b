"""Three-stage measurement pipeline: a unitary coupling stage that routes
eigenvalues to separate regions, a content-changing detector stage, and a
record stage that reads the eigenvalue off the fired region.

Bundled instances: polarization/spin splitting, the double slit, an
ionization-chamber trajectory and EPR polarization correlations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import math
from typing import Mapping, Sequence

import numpy as np

from . import streams
from .collapse import CollapseEvent, CollapseSampler
from .errors import InputError, ScenarioError
from .fock import (BOSON, FERMION, BasisState, Mode, ParticleSpecies, Registry, StateVector,
                   add, annihilate, apply_string, basis_vector, create, scale)
from .sectors import ContentSignature, signature, signatures_of


@dataclass(frozen=True)
class Detector:
    """Ideal detector at one region.

    When the region's ``probe`` mode and the ``absorber`` are both occupied
    the absorber is replaced by ``products`` (and the probe is removed if
    ``consumes_probe``). ``marker`` is the product species whose presence
    identifies this detector as fired.
    """

    region: str
    probe: Mode
    absorber: Mode
    products: tuple
    consumes_probe: bool = True

    @property
    def marker(self) -> str:
        return self.products[-1].species

    def fire_ops(self) -> tuple:
        ops = tuple((m, True) for m in self.products) + ((self.absorber, False),)
        if self.consumes_probe:
            ops += ((self.probe, False),)
        return ops


@dataclass(frozen=True)
class MeasurementScenario:
    registry: Registry
    input_modes: tuple
    region_modes: tuple
    coupling: np.ndarray        # shape (regions, inputs), an isometry
    detectors: tuple
    record_map: Mapping
    name: str = ""

    def __post_init__(self):
        labels = [d.region for d in self.detectors]
        if len(set(labels)) != len(labels):
            raise ScenarioError("region labels must be distinct")
        U = np.asarray(self.coupling, dtype=complex)
        object.__setattr__(self, "coupling", U)
        if U.shape != (len(self.region_modes), len(self.input_modes)):
            raise ScenarioError("coupling shape must be (regions, inputs)")
        if np.abs(U.conj().T @ U - np.eye(U.shape[1])).max() > 1e-10:
            raise ScenarioError("coupling stage is not unitary (isometric)")
        if len(self.detectors) != len(self.region_modes):
            raise ScenarioError("need exactly one detector per region")
        if set(self.record_map) != set(labels):
            raise ScenarioError("record_map must cover every region exactly once")
        in_species = {m.species for m in self.input_modes}
        if not {m.species for m in self.region_modes} <= in_species:
            raise ScenarioError("coupling stage may not change particle species")
        markers = [d.marker for d in self.detectors]
        if len(set(markers)) != len(markers):
            raise ScenarioError("each detector needs its own marker species")
        for d in self.detectors:
            if d.probe not in self.region_modes:
                raise ScenarioError(f"detector {d.region}: probe is not a region mode")
            tmpl = basis_vector(self.registry, BasisState.of(d.probe, d.absorber))
            fired = apply_string(tmpl, d.fire_ops())
            if fired.is_zero() or signatures_of(fired) == signatures_of(tmpl):
                raise ScenarioError(f"detector {d.region} does not change particles content; "
                                    "the scheme needs a non-unitary stage")

    @property
    def labels(self) -> tuple:
        return tuple(d.region for d in self.detectors)


def _couple(scn: MeasurementScenario, s: StateVector) -> StateVector:
    out = None
    in_set = set(scn.input_modes)
    for b, amp in s.items():
        occupied = [(m, c) for m, c in b.occupations if m in in_set]
        n = sum(c for _, c in occupied)
        piece = basis_vector(s.registry, b, amp)
        if n == 0:
            term = piece
        elif n == 1:
            p = occupied[0][0]
            k = scn.input_modes.index(p)
            lowered = annihilate(piece, p)
            term = None
            for r, mode in enumerate(scn.region_modes):
                if scn.coupling[r, k] != 0:
                    t = scale(create(lowered, mode), scn.coupling[r, k])
                    term = t if term is None else add(term, t)
        else:
            raise ScenarioError("coupling stage handles one particle per scenario")
        if term is not None:
            out = term if out is None else add(out, term)
    return out


def _detect(detectors: Sequence[Detector], s: StateVector) -> StateVector:
    out = None
    for b, amp in s.items():
        piece = basis_vector(s.registry, b, amp)
        for d in detectors:
            if b.count(d.probe) and b.count(d.absorber):
                piece = apply_string(piece, d.fire_ops())
                break
        out = piece if out is None else add(out, piece)
    return out


def _with_absorbers(scenarios, s: StateVector) -> StateVector:
    acc = {}
    for b, amp in s.items():
        occ = dict(b.occupations)
        for scn in scenarios:
            for d in scn.detectors:
                occ.setdefault(d.absorber, 1)
        acc[BasisState.from_map(occ)] = amp
    return StateVector(acc, s.registry)


def coupling_stage(scenarios, in_state: StateVector) -> StateVector:
    """Unitary stage only: detectors loaded, particle routed to regions."""
    if isinstance(scenarios, MeasurementScenario):
        scenarios = [scenarios]
    s = _with_absorbers(scenarios, in_state)
    for scn in scenarios:
        s = _couple(scn, s)
    return s


def pipeline_out_state(scenarios, in_state: StateVector) -> StateVector:
    """Coupling stage followed by every detector bank (before collapse)."""
    if isinstance(scenarios, MeasurementScenario):
        scenarios = [scenarios]
    if abs(in_state.norm() - 1.0) > 1e-9:
        raise InputError("input state must be normalized")
    s = coupling_stage(scenarios, in_state)
    for scn in scenarios:
        s = _detect(scn.detectors, s)
    return s


def fired_regions(scn: MeasurementScenario, sig: ContentSignature) -> tuple:
    return tuple(d.region for d in scn.detectors if d.marker in sig)


@dataclass(frozen=True)
class MeasurementRecord:
    fired_region: str
    reported_eigenvalue: object
    collapse_event: CollapseEvent
    amplification_tag: str


def _tag(seed_path: str, region: str) -> str:
    return hashlib.sha1(f"{seed_path}|{region}".encode()).hexdigest()[:12]


def _record(scn, event):
    regions = fired_regions(scn, event.chosen_signature)
    if len(regions) != 1:
        raise ScenarioError(f"expected exactly one fired detector, got {regions}")
    r = regions[0]
    return MeasurementRecord(r, scn.record_map[r], event, _tag(event.seed_path, r))


def run_measurement(scenario: MeasurementScenario, in_state: StateVector, rng,
                    seed_path: str = "") -> MeasurementRecord:
    """One run of the three-stage scheme.

    The eigenvalue is taken from the region whose detector fired, never
    from the state itself.
    """
    out = pipeline_out_state(scenario, in_state)
    sampler = CollapseSampler(out, signature_of_state(in_state, scenario))
    return _record(scenario, sampler.sample(rng, seed_path))


def signature_of_state(s: StateVector, scenario=None) -> ContentSignature:
    sigs = signatures_of(s)
    species = set()
    for sig in sigs:
        species |= set(sig.species)
    if scenario is not None:
        scns = scenario if isinstance(scenario, (list, tuple)) else [scenario]
        for scn in scns:
            species |= {d.absorber.species for d in scn.detectors}
    return ContentSignature(tuple(species))


@dataclass(frozen=True)
class MeasurementBatch:
    labels: tuple
    sector_regions: tuple    # fired regions for each sampler sector, per scenario
    choices: np.ndarray
    sampler: CollapseSampler
    root_seed: int

    def fired(self, which: int = 0) -> list:
        """Fired region label per run for scenario ``which``."""
        regs = [r[which] for r in self.sector_regions]
        return [regs[k][0] for k in self.choices]

    def counts(self, which: int = 0) -> dict:
        labels = self.labels[which]
        per_sector = [labels.index(r[which][0]) for r in self.sector_regions]
        idx = np.asarray(per_sector)[self.choices]
        c = np.bincount(idx, minlength=len(labels))
        return {lab: int(n) for lab, n in zip(labels, c)}

    def max_fired_per_run(self) -> int:
        return max(max(len(x) for x in r) for r in self.sector_regions)

    def min_fired_per_run(self) -> int:
        return min(min(len(x) for x in r) for r in self.sector_regions)


def run_measurement_batch(scenarios, in_state: StateVector, root_seed: int, trials: int) -> MeasurementBatch:
    """Many independent runs; the pre-collapse state is computed once."""
    if isinstance(scenarios, MeasurementScenario):
        scenarios = [scenarios]
    out = pipeline_out_state(scenarios, in_state)
    sampler = CollapseSampler(out, signature_of_state(in_state, scenarios))
    regions = tuple(tuple(fired_regions(scn, sig) for scn in scenarios) for sig in sampler.signatures)
    for r in regions:
        if any(len(x) != 1 for x in r):
            raise ScenarioError(f"a sector fires {r} detectors; each wing must fire exactly one")
    batch = sampler.batch(root_seed, trials)
    return MeasurementBatch(tuple(scn.labels for scn in scenarios), regions, batch.choices,
                            sampler, int(root_seed))


# -- bundled scenarios --------------------------------------------------------

def splitter_scenario(labels=("H", "V"), eigenvalues=(1, -1), particle: str = "gamma",
                      coupling=None, name: str = "polarization", extra_species=(), prefix="D"):
    """Two-channel splitter (polarizer or Stern-Gerlach).

    Input modes are ``particle[0]@0`` and ``particle[0]@1``; region ``k``
    is ``particle[k+1]@k``; each region has a detector atom ``{prefix}_<label>``
    that ionises into ``e`` + ``{prefix}_<label>+``.
    """
    n = len(labels)
    species = [ParticleSpecies(particle, BOSON, mass=0.0), ParticleSpecies("e", FERMION, charge=-1)]
    for lab in labels:
        species += [ParticleSpecies(f"{prefix}_{lab}", BOSON, max_occupation=1),
                    ParticleSpecies(f"{prefix}_{lab}+", BOSON, charge=1, max_occupation=1)]
    species += list(extra_species)
    in_modes = tuple(Mode(particle, (0,), k) for k in range(n))
    reg_modes = tuple(Mode(particle, (k + 1,), k) for k in range(n))
    modes = list(in_modes) + list(reg_modes) + [Mode("e")]
    modes += [Mode(f"{prefix}_{lab}") for lab in labels] + [Mode(f"{prefix}_{lab}+") for lab in labels]
    for s in extra_species:
        modes.append(Mode(s.id))
    reg = Registry(species, modes, n_max=2 * n + 4)
    dets = tuple(Detector(lab, reg_modes[k], Mode(f"{prefix}_{lab}"), (Mode("e"), Mode(f"{prefix}_{lab}+")))
                 for k, lab in enumerate(labels))
    U = np.eye(n) if coupling is None else coupling
    return MeasurementScenario(reg, in_modes, reg_modes, U, dets, dict(zip(labels, eigenvalues)), name)


def polarization_state(scenario: MeasurementScenario, theta: float) -> StateVector:
    """Photon linearly polarized at ``theta`` (radians) to the analyzer."""
    h, v = scenario.input_modes[:2]
    return StateVector({BasisState.of(h): math.cos(theta), BasisState.of(v): math.sin(theta)},
                       scenario.registry)


def spin_scenario():
    return splitter_scenario(("up", "down"), (0.5, -0.5), particle="n", name="spin-z")


def double_slit_scenario_model(amplitude_profile, name="double-slit") -> MeasurementScenario:
    a = np.asarray(amplitude_profile, dtype=complex).ravel()
    if a.size == 0:
        raise InputError("empty amplitude profile")
    if abs(float(np.sum(np.abs(a) ** 2)) - 1.0) > 1e-9:
        raise InputError("amplitude profile must be normalized over the screen cells")
    n = a.size
    labels = tuple(str(c) for c in range(n))
    species = [ParticleSpecies("gamma", BOSON), ParticleSpecies("e", FERMION, charge=-1)]
    species += [ParticleSpecies(f"S{c}", BOSON, max_occupation=1) for c in range(n)]
    species += [ParticleSpecies(f"S{c}+", BOSON, charge=1, max_occupation=1) for c in range(n)]
    slit = Mode("gamma", (-1,))
    cells = tuple(Mode("gamma", (c,)) for c in range(n))
    modes = [slit, *cells, Mode("e")] + [Mode(f"S{c}") for c in range(n)] + [Mode(f"S{c}+") for c in range(n)]
    reg = Registry(species, modes, n_max=n + 2)
    dets = tuple(Detector(labels[c], cells[c], Mode(f"S{c}"), (Mode("e"), Mode(f"S{c}+"))) for c in range(n))
    return MeasurementScenario(reg, (slit,), cells, a.reshape(n, 1), dets,
                               {lab: c for c, lab in enumerate(labels)}, name)


def two_slit_profile(cells: int, separation: float = 6.0, width: float = 8.0,
                     wavenumber: float = 0.9) -> np.ndarray:
    """Normalized two-path interference amplitudes on ``cells`` screen cells."""
    x = np.arange(cells) - (cells - 1) / 2.0
    envelope = np.exp(-x ** 2 / (2 * width ** 2))
    amp = envelope * (np.exp(1j * wavenumber * separation * x / width) +
                      np.exp(-1j * wavenumber * separation * x / width))
    return amp / np.linalg.norm(amp)


def single_path_profile(cells: int) -> np.ndarray:
    return np.full(cells, 1.0 / math.sqrt(cells), dtype=complex)


@dataclass(frozen=True)
class HitHistogram:
    counts: np.ndarray
    probabilities: np.ndarray
    trials: int
    root_seed: int
    hits_per_trial: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.trials

    def chi_square(self) -> tuple:
        """Pearson statistic and p-value over cells with nonzero weight."""
        from scipy import stats
        exp = self.probabilities * self.trials
        mask = exp > 0
        stat = float(np.sum((self.counts[mask] - exp[mask]) ** 2 / exp[mask]))
        if np.any(self.counts[~mask]):
            return math.inf, 0.0
        dof = max(int(mask.sum()) - 1, 1)
        return stat, float(stats.chi2.sf(stat, dof))

    @property
    def z_scores(self) -> np.ndarray:
        p = self.probabilities
        sd = np.sqrt(p * (1 - p) / self.trials)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, (self.frequencies - p) / sd, 0.0)
        return z


def double_slit_scenario(screen_cells: int, amplitude_profile, rng, trials: int) -> HitHistogram:
    """Screen hit histogram; each trial absorbs the photon at exactly one
    cell. ``rng`` is the root seed."""
    a = np.asarray(amplitude_profile)
    if a.size != screen_cells:
        raise InputError("profile length must equal screen_cells")
    scn = double_slit_scenario_model(a)
    in_state = basis_vector(scn.registry, BasisState.of(scn.input_modes[0]))
    batch = run_measurement_batch(scn, in_state, int(rng), trials)
    counts = np.array([batch.counts()[lab] for lab in scn.labels])
    probs = np.abs(a) ** 2
    return HitHistogram(counts, probs, trials, int(rng), batch.max_fired_per_run())


# -- ionization-chamber trajectory -----------------------------------------------

@dataclass(frozen=True)
class StepModel:
    """Propagation kernel between consecutive ionizations: amplitude for
    moving by each integer cell offset."""

    offsets: tuple
    amplitudes: tuple

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if len(self.offsets) != len(a) or len(set(self.offsets)) != len(self.offsets):
            raise InputError("offsets must be distinct and match amplitudes")
        if abs(float(np.sum(np.abs(a) ** 2)) - 1.0) > 1e-9:
            raise InputError("step kernel must be normalized")

    @property
    def mean_offset(self) -> float:
        p = np.abs(np.asarray(self.amplitudes)) ** 2
        return float(np.dot(p, self.offsets))

    @property
    def offset_sd(self) -> float:
        p = np.abs(np.asarray(self.amplitudes)) ** 2
        o = np.asarray(self.offsets, dtype=float)
        return float(math.sqrt(np.dot(p, (o - self.mean_offset) ** 2)))


def drift_step(drift: int, spread: float = 1.0, reach: int = 3) -> StepModel:
    """Gaussian kernel centred on ``drift`` cells per step (straight line)."""
    r = max(1, int(math.ceil(reach * spread)))
    offs = tuple(range(drift - r, drift + r + 1))
    a = np.exp(-((np.array(offs) - drift) ** 2) / (4.0 * spread ** 2))
    a = a / np.linalg.norm(a)
    return StepModel(offs, tuple(a))


def _ionization_step(cell: int, model: StepModel):
    targets = [cell + o for o in model.offsets]
    species = [ParticleSpecies("P", BOSON, mass=1.0), ParticleSpecies("e", FERMION, charge=-1)]
    species += [ParticleSpecies(f"A{c}", BOSON, max_occupation=1) for c in targets]
    species += [ParticleSpecies(f"A{c}+", BOSON, charge=1, max_occupation=1) for c in targets]
    src = Mode("P", (cell,), 1)
    region = tuple(Mode("P", (c,)) for c in targets)
    modes = [src, *region, Mode("e")] + [Mode(f"A{c}") for c in targets] + [Mode(f"A{c}+") for c in targets]
    reg = Registry(species, modes, n_max=len(targets) + 3)
    dets = tuple(Detector(str(c), region[k], Mode(f"A{c}"), (Mode("e"), Mode(f"A{c}+")),
                          consumes_probe=False) for k, c in enumerate(targets))
    scn = MeasurementScenario(reg, (src,), region, np.asarray(model.amplitudes).reshape(-1, 1),
                              dets, {str(c): c for c in targets}, "ionization")
    return scn, basis_vector(reg, BasisState.of(src))


def trajectory_scenario(n_steps: int, step_models, rng, start_cell: int = 0) -> list:
    """Chain of ``n_steps`` ionization collapses.

    ``step_models`` is one ``StepModel`` (reused every step) or a sequence
    of them. Each step propagates the particle from the last ionized cell
    with the kernel, ionizes exactly one atom, and collapses there.
    """
    if isinstance(step_models, StepModel):
        step_models = [step_models] * n_steps
    step_models = list(step_models)
    if len(step_models) < n_steps:
        raise InputError("fewer step models than steps")
    if not isinstance(rng, np.random.Generator):
        rng = streams.trial_generator(int(rng), 0)
    events = []
    cell = int(start_cell)
    for k in range(n_steps):
        scn, psi = _ionization_step(cell, step_models[k])
        out = pipeline_out_state(scn, psi)
        sampler = CollapseSampler(out, signature_of_state(psi, scn), time_tag=float(k + 1))
        ev = sampler.sample(rng, f"step/{k}")
        rec = _record(scn, ev)
        events.append(ev)
        cell = int(rec.reported_eigenvalue)
    return events


def trajectory_cells(events) -> list:
    cells = []
    for ev in events:
        fired = [s for s in ev.chosen_signature.species if s.startswith("A") and s.endswith("+")]
        if len(fired) != 1:
            raise ScenarioError("event is not localized to one cell")
        cells.append(int(fired[0][1:-1]))
    return cells


def infer_drift(events, start_cell: int = 0) -> float:
    """Momentum proxy: mean displacement per step computed from detections."""
    cells = trajectory_cells(events)
    if not cells:
        return float("nan")
    return (cells[-1] - start_cell) / len(cells)


# -- EPR ------------------------------------------------------------------------

def epr_wings(theta_a: float, theta_b: float):
    """Two polarization analyzers sharing one registry (photons ``ga``, ``gb``)."""
    def rot(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, s], [-s, c]])

    labels = ("+", "-")
    species = [ParticleSpecies("ga", BOSON), ParticleSpecies("gb", BOSON), ParticleSpecies("e", FERMION, charge=-1)]
    names = {}
    for w in ("a", "b"):
        for lab, tag in zip(labels, ("p", "m")):
            names[w, lab] = f"D{w}{tag}"
            species += [ParticleSpecies(f"D{w}{tag}", BOSON, max_occupation=1),
                        ParticleSpecies(f"D{w}{tag}+", BOSON, charge=1, max_occupation=1)]
    modes = [Mode("e", (1,)), Mode("e", (2,))]
    wings = {}
    for w, photon in (("a", "ga"), ("b", "gb")):
        inm = (Mode(photon, (0,), 0), Mode(photon, (0,), 1))
        regm = (Mode(photon, (1,), 0), Mode(photon, (2,), 1))
        modes += list(inm) + list(regm)
        modes += [Mode(names[w, lab]) for lab in labels] + [Mode(names[w, lab] + "+") for lab in labels]
        wings[w] = (inm, regm)
    reg = Registry(species, modes, n_max=8)
    out = []
    for cell, (w, theta) in enumerate((("a", theta_a), ("b", theta_b)), start=1):
        inm, regm = wings[w]
        # separate electron cells per wing, otherwise the second ionization is Pauli-blocked
        dets = tuple(Detector(lab, regm[k], Mode(names[w, lab]), (Mode("e", (cell,)), Mode(names[w, lab] + "+")))
                     for k, lab in enumerate(labels))
        out.append(MeasurementScenario(reg, inm, regm, rot(theta), dets, {"+": 1, "-": -1}, f"wing-{w}"))
    return out


def bell_state(wings) -> StateVector:
    """``(|H_a H_b> + |V_a V_b>)/sqrt(2)``: one sector, four modes."""
    a, b = wings
    r = 1 / math.sqrt(2)
    return StateVector({BasisState.of(a.input_modes[0], b.input_modes[0]): r,
                        BasisState.of(a.input_modes[1], b.input_modes[1]): r}, a.registry)


@dataclass(frozen=True)
class CorrelationReport:
    angles: tuple
    counts: np.ndarray          # [a outcome (+,-), b outcome (+,-)]
    born: np.ndarray
    trials: int
    root_seed: int
    detectors_per_wing: tuple   # (min, max) fired per wing per run

    @property
    def correlation(self) -> float:
        c = self.counts
        return float((c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]) / self.trials)

    @property
    def born_correlation(self) -> float:
        b = self.born
        return float(b[0, 0] + b[1, 1] - b[0, 1] - b[1, 0])

    @property
    def marginal_a_plus(self) -> float:
        return float(self.counts[0].sum() / self.trials)

    @property
    def chi_square(self) -> float:
        exp = self.born.ravel() * self.trials
        obs = self.counts.ravel()
        mask = exp > 0
        extra = float(obs[~mask].sum())
        return float(np.sum((obs[mask] - exp[mask]) ** 2 / exp[mask])) + (math.inf if extra else 0.0)

    def as_dict(self) -> dict:
        return {
            "angles_rad": list(self.angles),
            "counts": self.counts.tolist(),
            "born": self.born.tolist(),
            "trials": self.trials,
            "root_seed": self.root_seed,
            "correlation": self.correlation,
            "born_correlation": self.born_correlation,
            "marginal_a_plus": self.marginal_a_plus,
            "chi_square": self.chi_square,
        }


def epr_scenario(analyzer_angles, rng, trials: int) -> CorrelationReport:
    """Joint collapse of both wings per run; ``rng`` is the root seed."""
    return epr_batch(analyzer_angles, rng, trials)[0]


def epr_batch(analyzer_angles, rng, trials: int):
    """``(CorrelationReport, MeasurementBatch)`` for per-run output."""
    ta, tb = (float(x) for x in analyzer_angles)
    wings = epr_wings(ta, tb)
    batch = run_measurement_batch(wings, bell_state(wings), int(rng), trials)
    fa = np.array([0 if x == "+" else 1 for x in batch.fired(0)])
    fb = np.array([0 if x == "+" else 1 for x in batch.fired(1)])
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (fa, fb), 1)
    d = ta - tb
    same = math.cos(d) ** 2 / 2
    diff = math.sin(d) ** 2 / 2
    born = np.array([[same, diff], [diff, same]])
    report = CorrelationReport((ta, tb), counts, born, trials, int(rng),
                               (batch.min_fired_per_run(), batch.max_fired_per_run()))
    return report, batch
