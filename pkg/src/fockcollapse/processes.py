"""Decay, absorption and pair-production case studies, each available in a
unitary description and a collapse description."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Sequence

import numpy as np
from scipy import stats

from . import streams
from .collapse import CollapseEvent, CollapseSampler, collapse_sample
from .dynamics import InteractionModel, extract_s_matrix
from .errors import InputError, ModelError
from .fock import BOSON, BasisState, Mode, ParticleSpecies, Registry, StateVector
from .sectors import ContentSignature, is_cross_sector_superposition, sector_decompose, signature

DEFAULT_T = 500.0


# -- decay ------------------------------------------------------------------

@lru_cache(maxsize=1)
def decay_registry() -> Registry:
    return Registry([ParticleSpecies("Pu", BOSON, mass=2.0),
                     ParticleSpecies("Ps", BOSON, mass=1.2),
                     ParticleSpecies("Q", BOSON, mass=0.8)], n_max=2)


def decay_unitary_state(tau: float, t: float, registry: Registry | None = None) -> StateVector:
    """``exp(-tau t)|Pu> + sqrt(1 - exp(-2 tau t))|Ps>|Q>``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if tau <= 0:
        raise ValueError("tau must be positive")
    reg = registry or decay_registry()
    pu = BasisState.of(Mode("Pu"))
    psq = BasisState.of(Mode("Ps"), Mode("Q"))
    a = math.exp(-tau * t)
    b = math.sqrt(-math.expm1(-2.0 * tau * t))
    return StateVector({pu: a, psq: b}, reg)


@dataclass(frozen=True)
class DecaySpec:
    """``tau``: amplitude decay constant (jump rate is ``2 tau``);
    ``window``: detection interval; ``interaction_window``: duration of the
    jump itself, zero by default."""

    tau: float
    horizon: float
    window: float
    interaction_window: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not self.horizon >= self.window > 0:
            raise ValueError("need horizon >= window > 0")
        if self.interaction_window < 0:
            raise ValueError("interaction_window must be nonnegative")

    @property
    def rate(self) -> float:
        return 2.0 * self.tau


@dataclass(frozen=True)
class TrajectoryRecord:
    jump_time: float | None
    observations: tuple  # ((time, survived), ...)
    seed_path: str = ""

    @property
    def settled_time(self):
        return self.jump_time


def decay_jump_times(spec: DecaySpec, rng, trials: int) -> np.ndarray:
    """Jump times ``~ Exponential(rate 2 tau)``; NaN where no jump happens
    before the horizon. ``rng`` is a root seed (split streams) or a
    ``numpy.random.Generator``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scale = 1.0 / spec.rate
    if isinstance(rng, np.random.Generator):
        t = rng.exponential(scale, trials)
    else:
        t = np.empty(trials)
        for k, start in enumerate(range(0, trials, streams.BLOCK)):
            stop = min(start + streams.BLOCK, trials)
            t[start:stop] = streams.block_generator(int(rng), k).exponential(scale, stop - start)
    t[t > spec.horizon] = np.nan
    return t


def observation_grid(spec: DecaySpec) -> np.ndarray:
    n = int(math.floor(spec.horizon / spec.window + 1e-9))
    return np.arange(n + 1) * spec.window


def decay_collapse_sim(spec: DecaySpec, rng, trials: int,
                       obs_times: Sequence[float] | None = None) -> list:
    """Collapse description: ``|Pu>`` until the jump, ``|Ps>|Q>`` after.

    Each record's observation series samples the survival indicator on
    ``obs_times`` (default: multiples of ``spec.window`` up to the horizon).
    """
    times = decay_jump_times(spec, rng, trials)
    grid = np.asarray(obs_times if obs_times is not None else observation_grid(spec), dtype=float)
    seeded = not isinstance(rng, np.random.Generator)
    out = []
    for i, td in enumerate(times):
        jt = None if np.isnan(td) else float(td)
        alive = grid <= td if jt is not None else np.ones_like(grid, dtype=bool)
        obs = tuple(zip(grid.tolist(), alive.astype(int).tolist()))
        out.append(TrajectoryRecord(jt, obs, streams.seed_path(int(rng), i) if seeded else ""))
    return out


def decay_state_at(record: TrajectoryRecord, t: float, spec: DecaySpec) -> StateVector:
    """Definite state of one collapse trajectory at time ``t``."""
    reg = decay_registry()
    if record.jump_time is None or t <= record.jump_time:
        return StateVector({BasisState.of(Mode("Pu")): 1.0}, reg)
    if t <= record.jump_time + spec.interaction_window:
        return StateVector({BasisState.of(Mode("Pu")): 1.0}, reg)
    return StateVector({BasisState.of(Mode("Ps"), Mode("Q")): 1.0}, reg)


def jump_times_of(records) -> np.ndarray:
    return np.array([np.nan if r.jump_time is None else r.jump_time for r in records])


def survival_ks(jump_times, spec: DecaySpec):
    """KS test of observed jump times against the exponential law,
    conditioned on jumping before the horizon."""
    t = np.asarray(jump_times, dtype=float)
    t = t[~np.isnan(t)]
    norm = -math.expm1(-spec.rate * spec.horizon)
    res = stats.kstest(t, lambda x: -np.expm1(-spec.rate * np.asarray(x)) / norm)
    return float(res.statistic), float(res.pvalue)


def empirical_survival(jump_times, times) -> np.ndarray:
    t = np.asarray(jump_times, dtype=float)
    alive_forever = np.isnan(t)
    return np.array([np.mean(alive_forever | (t > s)) for s in np.asarray(times, dtype=float)])


def survival_band(n: int, alpha: float = 0.01) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width at confidence ``1 - alpha``."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


@dataclass(frozen=True)
class WindowRow:
    s: float
    collapse_conditional: float      # 1 - exp(-2 tau window), independent of s
    unitary_window_weight: float     # exp(-2 tau s) - exp(-2 tau (s + window))
    mc_conditional: float = float("nan")
    mc_sigma: float = float("nan")
    at_risk: int = 0

    @property
    def z(self) -> float:
        return (self.mc_conditional - self.collapse_conditional) / self.mc_sigma


@dataclass(frozen=True)
class TimeTranslationReport:
    spec: DecaySpec
    rows: tuple

    @property
    def max_abs_z(self) -> float:
        zs = [abs(r.z) for r in self.rows if r.at_risk]
        return max(zs) if zs else float("nan")

    @property
    def unitary_ratio(self) -> float:
        w = [r.unitary_window_weight for r in self.rows]
        return w[0] / w[-1]


def time_translation_diagnostic(spec: DecaySpec, s_values: Sequence[float], rng=None,
                                trials: int = 100_000, jump_times=None) -> TimeTranslationReport:
    """Window probabilities at each start time ``s``.

    The collapse description gives ``P(jump in [s, s+window] | survived to s)``
    which does not depend on ``s``; the unitary description's window weight
    ``exp(-2 tau s) - exp(-2 tau (s+window))`` does. If ``rng`` (or
    precomputed ``jump_times``) is given, the conditional probability is
    also estimated by Monte Carlo with its binomial sigma.
    """
    s_values = [float(s) for s in s_values]
    if any(s < 0 or s + spec.window > spec.horizon for s in s_values):
        raise InputError("every s must satisfy 0 <= s and s + window <= horizon")
    if jump_times is None and rng is not None:
        jump_times = decay_jump_times(spec, rng, trials)
    p_const = -math.expm1(-spec.rate * spec.window)
    rows = []
    for s in s_values:
        unitary = math.exp(-spec.rate * s) - math.exp(-spec.rate * (s + spec.window))
        if jump_times is None:
            rows.append(WindowRow(s, p_const, unitary))
            continue
        t = np.asarray(jump_times)
        alive = np.isnan(t) | (t > s)
        n = int(alive.sum())
        hits = int(np.sum(alive & ~np.isnan(t) & (t <= s + spec.window)))
        p_hat = hits / n if n else float("nan")
        sigma = math.sqrt(p_const * (1 - p_const) / n) if n else float("nan")
        rows.append(WindowRow(s, p_const, unitary, p_hat, sigma, n))
    return TimeTranslationReport(spec, tuple(rows))


# -- absorption ---------------------------------------------------------------

ABSORPTION_ROLES = {"photon": "gamma", "atom": "A", "electron": "e", "ion": "A+"}
PAIR_ROLES = {"photon": "gamma", "e": "e", "e+": "e+", "mu": "mu", "mu^c": "mu^c"}


def require_species(model: InteractionModel, species: Sequence[str]):
    missing = [s for s in species if s not in model.registry.species]
    if missing:
        raise ModelError(f"model lacks required species {missing}")


def absorption_in_state(model: InteractionModel, roles=ABSORPTION_ROLES) -> BasisState:
    require_species(model, roles.values())
    reg = model.registry
    return BasisState.of(reg.modes_of(roles["photon"])[0], reg.modes_of(roles["atom"])[0])


def absorption_sampler(model: InteractionModel, T: float = DEFAULT_T,
                       roles=ABSORPTION_ROLES) -> CollapseSampler:
    b_in = absorption_in_state(model, roles)
    S = extract_s_matrix(model, T)
    return CollapseSampler(S.out_state(b_in), signature(b_in), time_tag=S.T)


def absorption_scenario(model: InteractionModel, rng, T: float = DEFAULT_T,
                        roles=ABSORPTION_ROLES, seed_path: str = "") -> CollapseEvent:
    """``gamma + A`` scattered by the model's S-matrix, then collapsed."""
    return absorption_sampler(model, T, roles).sample(rng, seed_path)


# -- pair production ------------------------------------------------------------

@dataclass(frozen=True)
class SectorFrequencyReport:
    signatures: tuple
    probabilities: tuple
    counts: tuple
    trials: int
    root_seed: int
    cross_sector_posts: int
    unitary_sector_count: int

    @property
    def frequencies(self) -> tuple:
        return tuple(c / self.trials for c in self.counts)

    @property
    def z_scores(self) -> tuple:
        out = []
        for p, f in zip(self.probabilities, self.frequencies):
            sd = math.sqrt(p * (1 - p) / self.trials)
            out.append(0.0 if sd == 0 else (f - p) / sd)
        return tuple(out)

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "root_seed": self.root_seed,
            "sectors": [str(s) for s in self.signatures],
            "probabilities": list(self.probabilities),
            "counts": list(self.counts),
            "frequencies": list(self.frequencies),
            "z_scores": list(self.z_scores),
            "probability_sum": float(sum(self.probabilities)),
            "cross_sector_post_states": self.cross_sector_posts,
            "unitary_out_state_sectors": self.unitary_sector_count,
        }


def sampler_report(sampler: CollapseSampler, root_seed: int, trials: int):
    batch = sampler.batch(root_seed, trials)
    counts = batch.counts()
    crossed = sum(int(is_cross_sector_superposition(p)) * counts[s]
                  for s, p in zip(sampler.signatures, sampler.post_states))
    report = SectorFrequencyReport(tuple(sampler.signatures), tuple(float(p) for p in sampler.probabilities),
                                   tuple(counts[s] for s in sampler.signatures), trials, int(root_seed),
                                   crossed, len(sampler.signatures))
    return report, batch


def pair_production_sampler(model: InteractionModel, T: float = DEFAULT_T,
                            roles=PAIR_ROLES) -> CollapseSampler:
    require_species(model, roles.values())
    b_in = BasisState.of(model.registry.modes_of(roles["photon"])[0])
    S = extract_s_matrix(model, T)
    return CollapseSampler(S.out_state(b_in), signature(b_in), time_tag=S.T)


def pair_production_scenario(model: InteractionModel, rng, trials: int, T: float = DEFAULT_T,
                             roles=PAIR_ROLES) -> SectorFrequencyReport:
    """Photon in, S-matrix out-state, one collapse per trial.

    ``rng`` is the root seed for the split streams.
    """
    sampler = pair_production_sampler(model, T, roles)
    return sampler_report(sampler, int(rng), trials)[0]
