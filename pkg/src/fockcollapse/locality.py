"""Locality checks for three distinguishable particles: cluster
decomposition of the S-matrix, momentum-conservation exclusivity of two
scattering branches, and a no-signaling Monte Carlo.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
import math
from typing import Mapping, Sequence

import numpy as np

from . import streams
from .collapse import CollapseSampler
from .errors import InputError
from .fock import BOSON, FERMION, BasisState, Mode, ParticleSpecies, Registry, StateVector
from .measurement import Detector, MeasurementScenario, pipeline_out_state, signature_of_state

PAIRS = ((2, 3), (1, 3), (1, 2))   # connected pair -> spectator is the missing index


class DegenerateFrameError(InputError):
    """The exclusivity argument needs a nonzero incoming momentum."""


def _spectator(pair):
    return ({1, 2, 3} - set(pair)).pop()


def _embed(C: np.ndarray, pair, cells) -> np.ndarray:
    """``delta(q'_k - q_k) * C_ij`` on the 3-particle grid (C-order q1,q2,q3)."""
    i, j = pair
    k = _spectator(pair)
    n = dict(zip((1, 2, 3), cells))
    C4 = C.reshape(n[i], n[j], n[i], n[j])
    eye = np.eye(n[k])
    letters = {1: "a", 2: "b", 3: "c"}
    primed = {1: "d", 2: "e", 3: "f"}
    spec = (f"{primed[i]}{primed[j]}{letters[i]}{letters[j]},{primed[k]}{letters[k]}"
            f"->def" + "abc")
    N = int(np.prod(cells))
    return np.einsum(spec, C4, eye).reshape(N, N)


@dataclass(frozen=True)
class ClusterDecomposition:
    """``S = C123 + d1*C23 + d2*C13 + d3*C12 + I`` on a 3-particle grid."""

    cells: tuple
    connected_3: np.ndarray
    connected_2: Mapping            # {(i, j): two-particle connected block}
    identity_term: bool = True
    labels: tuple = ("1", "2", "3")

    @property
    def connected_2_list(self) -> list:
        return [(pair, self.connected_2[pair]) for pair in PAIRS]

    def terms(self) -> dict:
        N = int(np.prod(self.cells))
        out = {"C123": self.connected_3}
        for pair in PAIRS:
            k = _spectator(pair)
            out[f"C{pair[0]}{pair[1]}*d{k}"] = _embed(self.connected_2[pair], pair, self.cells)
        out["I"] = np.eye(N) if self.identity_term else np.zeros((N, N))
        return out

    def reassemble(self) -> np.ndarray:
        return sum(self.terms().values())

    def nonzero_terms(self, tol: float = 1e-12) -> list:
        return [name for name, M in self.terms().items() if np.abs(M).max() > tol]

    def as_tables(self) -> dict:
        """Numeric blocks for inspection (real/imag split, JSON friendly)."""
        def t(M):
            return {"re": np.real(M).tolist(), "im": np.imag(M).tolist()}
        return {"cells": list(self.cells), "identity_term": self.identity_term,
                "connected_3": t(self.connected_3),
                "connected_2": {f"{i}{j}": t(self.connected_2[(i, j)]) for i, j in PAIRS}}


def _three_body_block(S, particle_labels):
    """Restrict an SMatrix to the sector with one particle of each label."""
    if len(particle_labels) != 3 or len(set(particle_labels)) != 3:
        raise InputError("need three distinct particle species")
    reg = S.registry
    grids = []
    for lab in particle_labels:
        if lab not in reg.species:
            raise InputError(f"unknown species {lab!r}")
        grids.append(reg.modes_of(lab))
    idx = []
    for combo in product(*grids):
        b = BasisState.of(*combo)
        if b not in S.basis_index:
            raise InputError("S-matrix basis lacks the 3-particle sector")
        idx.append(S.basis_index[b])
    idx = np.asarray(idx)
    return np.asarray(S.entries)[np.ix_(idx, idx)], tuple(len(g) for g in grids)


def _pair_key(pair, labels):
    """Accept ``(1, 3)`` or label tuples; return sorted 1-based indices."""
    out = []
    for p in pair:
        if isinstance(p, (int, np.integer)):
            out.append(int(p))
        else:
            if p not in labels:
                raise InputError(f"unknown particle {p!r}")
            out.append(labels.index(p) + 1)
    out = tuple(sorted(out))
    if out not in PAIRS:
        raise InputError(f"bad particle pair {pair!r}")
    return out


def cluster_decompose_3(S, particle_labels=("1", "2", "3"), pair_s: Mapping | None = None,
                        cells: Sequence[int] | None = None) -> ClusterDecomposition:
    """Connected components of a 3-particle S-matrix.

    ``S`` is an ``SMatrix`` (restricted here to the sector holding one
    particle of each labelled species) or a square array on the product grid
    with ``cells = (n1, n2, n3)``. ``pair_s`` gives the two-particle
    S-matrices ``{(i, j): S_ij}`` in ``(qi, qj)`` C-order; missing pairs are
    non-interacting (identity). The connected 2-blocks are ``S_ij - I`` and
    the 3-block is what remains, so reassembly is exact by construction.
    """
    labels = tuple(str(x) for x in particle_labels)
    if hasattr(S, "entries"):
        M, cells = _three_body_block(S, particle_labels)
    else:
        M = np.asarray(S, dtype=complex)
        if cells is None:
            n = round(M.shape[0] ** (1 / 3))
            if n ** 3 != M.shape[0]:
                raise InputError("give cells for a non-cubic grid")
            cells = (n, n, n)
        cells = tuple(int(c) for c in cells)
        if len(cells) != 3 or M.shape != (int(np.prod(cells)),) * 2:
            raise InputError("S is not a 3-particle block on the given grid")
    n = dict(zip((1, 2, 3), cells))
    conn2 = {}
    given = {_pair_key(k, labels): np.asarray(v, dtype=complex) for k, v in (pair_s or {}).items()}
    for pair in PAIRS:
        d = n[pair[0]] * n[pair[1]]
        S2 = given.get(pair, np.eye(d))
        if S2.shape != (d, d):
            raise InputError(f"pair {pair}: expected a {d}x{d} two-particle S-matrix")
        conn2[pair] = S2 - np.eye(d)
    N = int(np.prod(cells))
    C3 = M - np.eye(N) - sum(_embed(conn2[p], p, cells) for p in PAIRS)
    return ClusterDecomposition(cells, C3, conn2, True, labels)


def spacelike_prune(decomp: ClusterDecomposition, separation_flags) -> ClusterDecomposition:
    """Impose cluster decomposition for space-like separated pairs.

    ``separation_flags``: iterable of separated pairs, or a mapping
    ``{pair: bool}``. Any separation kills the 3-connected block; each
    separated pair loses its 2-connected block.
    """
    if isinstance(separation_flags, Mapping):
        separation_flags = [p for p, on in separation_flags.items() if on]
    sep = {_pair_key(p, decomp.labels) for p in separation_flags}
    if not sep:
        return decomp
    conn2 = {p: (np.zeros_like(C) if p in sep else C) for p, C in decomp.connected_2.items()}
    return replace(decomp, connected_3=np.zeros_like(decomp.connected_3), connected_2=conn2)


# -- momentum exclusivity --------------------------------------------------------

@dataclass(frozen=True)
class ExclusivityVerdict:
    q1: tuple
    simultaneous_feasible: bool
    outcomes_checked: int
    feasible_branches: tuple = ()       # for the given outcome, if any
    outcome: tuple | None = None


def _branch_13(q1, q2p, q3p):
    # particle 2 spectator: q'2 = q2 = 0 and q1 + q3 = q'1 + q'3 with q3 = q'1 = 0
    return not np.any(q2p) and np.array_equal(q3p, q1)


def _branch_12(q1, q2p, q3p):
    return not np.any(q3p) and np.array_equal(q2p, q1)


def momentum_exclusivity_check(q1, outcome=None, grid_bounds: int = 2) -> ExclusivityVerdict:
    """Can the (1,3) and (1,2) scattering branches hold together?

    Frame: particle 1 carries ``q1``; ``q2 = q3 = q'1 = 0``. Every outcome
    ``(q'2, q'3)`` on the grid ``[-grid_bounds, grid_bounds]^d`` is checked
    against both conservation laws. ``outcome``, if given, is a pair
    ``(q'2, q'3)`` whose feasible branches are reported.
    """
    q1 = np.atleast_1d(np.asarray(q1, dtype=int))
    if not np.any(q1):
        raise DegenerateFrameError("q1 = 0: the exclusivity argument needs a moving particle 1")
    d = q1.size
    r = max(int(grid_bounds), int(np.abs(q1).max()))
    axis = range(-r, r + 1)
    both = False
    count = 0
    for q2p in product(axis, repeat=d):
        for q3p in product(axis, repeat=d):
            a, b = np.array(q2p), np.array(q3p)
            count += 1
            if _branch_13(q1, a, b) and _branch_12(q1, a, b):
                both = True
    branches = ()
    if outcome is not None:
        a = np.atleast_1d(np.asarray(outcome[0], dtype=int))
        b = np.atleast_1d(np.asarray(outcome[1], dtype=int))
        branches = tuple(name for name, ok in (("1-3", _branch_13(q1, a, b)),
                                               ("1-2", _branch_12(q1, a, b))) if ok)
        outcome = (tuple(a.tolist()), tuple(b.tolist()))
    return ExclusivityVerdict(tuple(q1.tolist()), both, count, branches, outcome)


# -- no signaling ---------------------------------------------------------------

@dataclass(frozen=True)
class SignalingReport:
    p_M: float
    p_both_on: float
    p_one_off: float
    z_statistic: float
    trials: int
    root_seed: int = 0
    source: str = "hypothetical"

    def as_dict(self) -> dict:
        return {"source": self.source, "p_M": self.p_M, "p_both_on": self.p_both_on,
                "p_one_off": self.p_one_off, "z_statistic": self.z_statistic,
                "trials": self.trials, "root_seed": self.root_seed}


def _two_sample_z(k1, k2, n):
    p = (k1 + k2) / (2 * n)
    sd = math.sqrt(p * (1 - p) * 2 / n)
    if sd == 0:
        return 0.0 if k1 == k2 else math.inf
    return (k1 / n - k2 / n) / sd


def _arm_seeds(root: int):
    a, b = np.random.SeedSequence(int(root)).generate_state(2)
    return int(a), int(b)


def no_signaling_mc(p_M: float, trials: int, rng) -> SignalingReport:
    """Hypothetical mutual-detection process.

    With both detectors on, each run ends in {both fire: p_M, only 1:
    p_S, only 2: p_S} with ``p_S = (1 - p_M)/2``, so detector 1 fires with
    ``1/2 + p_M/2``. With detector 2 off it fires with 1/2. ``rng`` is a
    root seed; the two arms use independent derived streams.
    """
    p_M = float(p_M)
    if not 0.0 <= p_M <= 1.0:
        raise InputError("p_M must be in [0, 1]")
    p_S = (1.0 - p_M) / 2.0
    sa, sb = _arm_seeds(int(rng))
    cdf = np.array([p_M, p_M + p_S, 1.0])
    u = streams.uniforms(sa, trials)[:, 0]
    outcome = np.searchsorted(cdf, u, side="right")
    k_on = int(np.sum(outcome <= 1))
    k_off = int(np.sum(streams.uniforms(sb, trials)[:, 0] < 0.5))
    return SignalingReport(p_M, k_on / trials, k_off / trials, _two_sample_z(k_on, k_off, trials),
                           trials, int(rng))


def two_detector_scenario(right_on: bool = True) -> MeasurementScenario:
    """A photon split between two regions, L and R, each with an ionizable
    atom. With ``right_on=False`` the R atom is absent, so the R branch
    leaves the content untouched."""
    species = [ParticleSpecies("gamma", BOSON), ParticleSpecies("e", FERMION, charge=-1),
               ParticleSpecies("DL", BOSON, max_occupation=1), ParticleSpecies("DL+", BOSON, charge=1, max_occupation=1),
               ParticleSpecies("DR", BOSON, max_occupation=1), ParticleSpecies("DR+", BOSON, charge=1, max_occupation=1)]
    src = Mode("gamma", (0,))
    L, R = Mode("gamma", (-1,)), Mode("gamma", (1,))
    modes = [src, L, R, Mode("e"), Mode("DL"), Mode("DL+"), Mode("DR"), Mode("DR+")]
    reg = Registry(species, modes, n_max=6)
    r = 1 / math.sqrt(2)
    dets = [Detector("L", L, Mode("DL"), (Mode("e"), Mode("DL+")))]
    if right_on:
        dets.append(Detector("R", R, Mode("DR"), (Mode("e"), Mode("DR+"))))
        return MeasurementScenario(reg, (src,), (L, R), np.array([[r], [r]]), tuple(dets),
                                   {"L": "L", "R": "R"}, "two-detector")
    return MeasurementScenario(reg, (src,), (L,), np.array([[1.0]]), tuple(dets), {"L": "L"}, "left-only")


def _left_frequency(right_on: bool, root: int, trials: int) -> int:
    from .measurement import coupling_stage, _detect
    scn = two_detector_scenario(True)
    psi = StateVector({BasisState.of(scn.input_modes[0]): 1.0}, scn.registry)
    out = coupling_stage(scn, psi)
    dets = scn.detectors if right_on else scn.detectors[:1]
    if not right_on:
        # remove the right atom from every component: detector R switched off
        out = StateVector({b.with_count(Mode("DR"), 0): a for b, a in out.items()}, scn.registry)
    out = _detect(dets, out)
    sampler = CollapseSampler(out, signature_of_state(psi, scn))
    batch = sampler.batch(root, trials)
    fired_left = np.array(["DL+" in sig for sig in sampler.signatures])
    return int(np.sum(fired_left[batch.choices]))


def engine_no_signaling(trials: int, rng) -> SignalingReport:
    """Same comparison driven by the engine's own collapse rule.

    Momentum exclusivity forbids the mutual branch (``p_M = 0``), so the
    single photon fires at most one detector; detector L's rate must not
    depend on whether R is on.
    """
    verdict = momentum_exclusivity_check((1,))
    if verdict.simultaneous_feasible:
        raise AssertionError("mutual detection branch should be infeasible")
    sa, sb = _arm_seeds(int(rng))
    k_on = _left_frequency(True, sa, trials)
    k_off = _left_frequency(False, sb, trials)
    return SignalingReport(0.0, k_on / trials, k_off / trials, _two_sample_z(k_on, k_off, trials),
                           trials, int(rng), source="engine")
