"""Stochastic selection of a single content sector, the sector-level
transition matrix Gamma, and the unistochasticity checker."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import kernels, streams
from .dynamics import SMatrix
from .errors import InputError, SectorIndexError
from .fock import BasisState, StateVector
from .sectors import SECTOR_EPS, ContentSignature, sector_decompose, signature

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class CollapseEvent:
    time_tag: float
    in_signature: ContentSignature
    chosen_signature: ContentSignature
    sector_probability: float
    post_state: StateVector
    seed_path: str = ""

    @property
    def content_changed(self) -> bool:
        return set(self.in_signature.species) != set(self.chosen_signature.species)


def sector_probabilities(out_state: StateVector, eps: float = SECTOR_EPS) -> dict:
    """``{signature: probability}`` in canonical signature order."""
    return sector_decompose(out_state, eps).probabilities()


class CollapseSampler:
    """Pre-decomposed out-state, ready to be sampled many times.

    Single-sector states are passed through untouched and consume no
    randomness.
    """

    def __init__(self, out_state: StateVector, in_signature: ContentSignature | None = None,
                 time_tag: float = 0.0, eps: float = SECTOR_EPS):
        dec = sector_decompose(out_state, eps)
        self.out_state = out_state
        self.in_signature = in_signature if in_signature is not None else ContentSignature()
        self.time_tag = float(time_tag)
        self.signatures = list(dec.parts)
        self.probabilities = np.array([dec[s].probability for s in self.signatures])
        if len(self.signatures) == 1:
            self.post_states = [out_state]
        else:
            self.post_states = [dec[s].component for s in self.signatures]
        cdf = np.cumsum(self.probabilities)
        cdf[-1] = 1.0
        self.cdf = cdf

    @property
    def deterministic(self) -> bool:
        return len(self.signatures) == 1

    def event(self, k: int, seed_path: str = "") -> CollapseEvent:
        return CollapseEvent(self.time_tag, self.in_signature, self.signatures[k],
                             float(self.probabilities[k]), self.post_states[k], seed_path)

    def sample(self, rng: np.random.Generator, seed_path: str = "") -> CollapseEvent:
        if self.deterministic:
            return self.event(0, seed_path)
        k = int(kernels.draw_categorical(self.cdf, np.array([rng.random()]))[0])
        return self.event(k, seed_path)

    def batch(self, root_seed: int, trials: int) -> "CollapseBatch":
        """Sample ``trials`` independent collapses on split streams."""
        if self.deterministic:
            choices = np.zeros(trials, dtype=np.int64)
        else:
            u = streams.uniforms(root_seed, trials)[:, 0]
            choices = np.asarray(kernels.draw_categorical(self.cdf, u), dtype=np.int64)
        return CollapseBatch(self, int(root_seed), choices)


@dataclass(frozen=True)
class CollapseBatch:
    sampler: CollapseSampler
    root_seed: int
    choices: np.ndarray

    def __len__(self):
        return len(self.choices)

    def counts(self) -> dict:
        c = np.bincount(self.choices, minlength=len(self.sampler.signatures))
        return {sig: int(n) for sig, n in zip(self.sampler.signatures, c)}

    def frequencies(self) -> dict:
        n = len(self.choices)
        return {sig: c / n for sig, c in self.counts().items()}

    def event(self, i: int) -> CollapseEvent:
        return self.sampler.event(int(self.choices[i]), streams.seed_path(self.root_seed, i))

    def events(self):
        for i in range(len(self.choices)):
            yield self.event(i)


def collapse_sample(rng: np.random.Generator, out_state: StateVector,
                    in_signature: ContentSignature | None = None, time_tag: float = 0.0,
                    seed_path: str = "", eps: float = SECTOR_EPS) -> CollapseEvent:
    """Select one content sector of ``out_state`` with its Born weight.

    The returned post-state is that sector's component renormalised; any
    superposition inside the sector is kept as is.
    """
    return CollapseSampler(out_state, in_signature, time_tag, eps).sample(rng, seed_path)


# -- Gamma ----------------------------------------------------------------

@dataclass(frozen=True)
class GammaMatrix:
    row_labels: tuple
    col_labels: tuple
    entries: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def is_stochastic(self, tol: float = STOCHASTIC_TOL) -> bool:
        return bool(np.all(self.entries >= -tol) and np.all(np.abs(self.row_sums() - 1) <= tol))

    def __getitem__(self, key):
        r, c = key
        return float(self.entries[self.row_labels.index(r), self.col_labels.index(c)])


def gamma_from_s(S: SMatrix, weights: Mapping[BasisState, float] | None = None,
                 rows: Sequence[ContentSignature] | None = None) -> GammaMatrix:
    """Aggregate ``|S_ba|^2`` into sector-to-sector probabilities.

    ``Gamma[in][out] = sum_{a in in} w_a sum_{b in out} |S_ba|^2`` with the
    weights normalised inside each in-sector. Default weights are uniform
    over every in-sector; pass a point mass to condition on one in-state.
    """
    sigs = [signature(b) for b in S.basis_index]
    cols = tuple(sorted(set(sigs)))
    P = np.abs(S.entries) ** 2
    col_of = np.array([cols.index(s) for s in sigs])
    # out-sector aggregation: A[sector, alpha] = sum_{beta in sector} P[beta, alpha]
    A = np.zeros((len(cols), P.shape[1]))
    np.add.at(A, col_of, P)
    if weights is None:
        w = np.ones(len(sigs))
    else:
        w = np.zeros(len(sigs))
        for b, x in weights.items():
            w[S.index(b)] = float(x)
        if np.any(w < 0):
            raise InputError("input weights must be nonnegative")
    if rows is None:
        rows = sorted({sigs[i] for i in np.flatnonzero(w > 0)})
    rows = tuple(rows)
    out = np.zeros((len(rows), len(cols)))
    for r, sig in enumerate(rows):
        members = np.array([i for i, s in enumerate(sigs) if s == sig and w[i] > 0], dtype=int)
        if members.size == 0:
            raise SectorIndexError(f"in-sector {sig} has no weighted basis states")
        wm = w[members] / w[members].sum()
        out[r] = A[:, members] @ wm
    return GammaMatrix(rows, cols, out)


# -- unistochasticity --------------------------------------------------------

@dataclass(frozen=True)
class UnistochasticResult:
    verdict: bool | None  # None: undecided
    witness: np.ndarray | None = None
    reason: str = ""
    witness_error: float = float("nan")

    @property
    def label(self) -> str:
        return {True: "true", False: "false", None: "undecided"}[self.verdict]


def _validate_stochastic(G, tol):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise InputError(f"expected a square matrix, got shape {G.shape}")
    if np.any(G < -tol):
        raise InputError("stochastic matrix has negative entries")
    if np.any(np.abs(G.sum(axis=1) - 1.0) > max(tol, STOCHASTIC_TOL)):
        raise InputError("rows do not sum to 1")
    return np.clip(G, 0.0, None)


def _chain_links(moduli, tol):
    """A closed polygon with these side lengths exists."""
    m = np.asarray(moduli)
    return bool(2 * m.max(initial=0.0) <= m.sum() + tol)


def _witness_error(U, G):
    return float(np.abs(np.abs(U) ** 2 - G).max())


def _three_by_three(G):
    r = np.sqrt(G[0] * G[1])
    phi = np.zeros(3)
    if r[0] > 0 and r[1] > 0:
        c = np.clip((r[2] ** 2 - r[0] ** 2 - r[1] ** 2) / (2 * r[0] * r[1]), -1.0, 1.0)
        phi[1] = math.acos(c)
        z = -(r[0] + r[1] * np.exp(1j * phi[1]))
        phi[2] = np.angle(z) if abs(z) > 0 else 0.0
    elif r[0] == 0:
        phi[1], phi[2] = 0.0, math.pi
    else:
        phi[1], phi[2] = 0.0, math.pi
    u1 = np.sqrt(G[0]).astype(complex)
    u2 = np.sqrt(G[1]) * np.exp(1j * phi)
    u3 = np.conj(np.cross(u1, u2))
    return np.array([u1, u2, u3])


def _phase_search(G, tol, seed, restarts):
    n = G.shape[0]
    amp = np.sqrt(G)
    iu = np.triu_indices(n, 1)

    def build(x):
        phases = np.zeros((n, n))
        phases[1:, 1:] = x.reshape(n - 1, n - 1)
        return amp * np.exp(1j * phases)

    def resid(x):
        M = build(x)
        off = (M @ M.conj().T)[iu]
        return np.concatenate([off.real, off.imag])

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        x0 = rng.uniform(-math.pi, math.pi, (n - 1) ** 2)
        sol = least_squares(resid, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        M = build(sol.x)
        W, _, Vh = np.linalg.svd(M)
        U = W @ Vh
        err = _witness_error(U, G)
        if best is None or err < best[1]:
            best = (U, err)
        if err < tol:
            break
    return best


def is_unistochastic(G, tol: float = 1e-8, seed: int = 0, restarts: int = 24) -> UnistochasticResult:
    """Decide whether ``G_ij = |U_ij|^2`` for some unitary ``U``.

    2x2: always true when doubly stochastic (rotation witness). 3x3: the
    row- and column-pair polygon conditions decide, and a witness is built
    from them. Larger: the polygon conditions can only refute; otherwise a
    numerical phase search either finds a witness or returns undecided.
    Any returned witness satisfies ``max |(|U_ij|^2 - G_ij)| < tol``.
    """
    G = _validate_stochastic(G, tol)
    n = G.shape[0]
    if np.any(np.abs(G.sum(axis=0) - 1.0) > max(tol, STOCHASTIC_TOL)):
        return UnistochasticResult(False, reason="not doubly stochastic")
    if n == 1:
        return UnistochasticResult(True, np.ones((1, 1), dtype=complex), "trivial", 0.0)
    if n == 2:
        p = G[0, 0]
        U = np.array([[math.sqrt(p), math.sqrt(1 - p)], [-math.sqrt(1 - p), math.sqrt(p)]], dtype=complex)
        err = _witness_error(U, G)
        return UnistochasticResult(True, U, "2x2 rotation", err)
    for i in range(n):
        for j in range(i + 1, n):
            if not _chain_links(np.sqrt(G[i] * G[j]), 1e-12):
                return UnistochasticResult(False, reason=f"rows {i},{j} cannot be orthogonal")
            if not _chain_links(np.sqrt(G[:, i] * G[:, j]), 1e-12):
                return UnistochasticResult(False, reason=f"columns {i},{j} cannot be orthogonal")
    if n == 3:
        U = _three_by_three(G)
        err = _witness_error(U, G)
        if err < tol and np.allclose(U @ U.conj().T, np.eye(3), atol=1e-10):
            return UnistochasticResult(True, U, "3x3 polygon construction", err)
    found = _phase_search(G, tol, seed, restarts)
    if found is not None and found[1] < tol:
        return UnistochasticResult(True, found[0], "numerical phase search", found[1])
    if n == 3:
        # polygon conditions are sufficient at n = 3
        return UnistochasticResult(True, None, "3x3 polygon conditions hold; no witness within tol")
    return UnistochasticResult(None, reason="phase search found no witness")


# -- plain-text Gamma tables ------------------------------------------------

def format_gamma_table(entries, labels: Sequence | None = None) -> str:
    entries = np.asarray(entries, dtype=float)
    lines = []
    if labels is not None:
        lines.append("# " + " ".join(str(l) for l in labels))
    for row in entries:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def write_gamma_table(path, entries, labels: Sequence | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_gamma_table(entries, labels))


def read_gamma_table(path):
    """Return ``(matrix, labels or None)`` from a whitespace-separated table."""
    labels = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if labels is None and not rows:
                    labels = text[1:].split()
                continue
            try:
                rows.append([float(x) for x in text.split()])
            except ValueError:
                raise InputError(f"line {lineno}: non-numeric entry") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise InputError("table rows are empty or ragged")
    M = np.array(rows)
    if labels is not None and len(labels) != M.shape[1]:
        raise InputError("label header does not match the column count")
    return M, labels
