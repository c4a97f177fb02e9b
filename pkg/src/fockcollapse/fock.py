"""Truncated Fock space: species, modes, occupation-number basis states,
sparse state vectors, and the creation/annihilation operator algebra.

Conventions
-----------
* Modes are totally ordered by ``(species, momentum, spin)``. Fermionic
  signs use this order: ``a†(m)`` and ``a(m)`` pick up ``(-1)**k`` where
  ``k`` is the number of fermions occupying modes that precede ``m``.
  Bosonic modes never contribute to the sign.
* Bosonic ladder factors are the standard ``sqrt(n+1)`` / ``sqrt(n)``.
* Components pushed past a per-mode cap or the global particle cap
  ``n_max`` are dropped and the result carries ``truncated=True``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import math
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from . import kernels
from .errors import BoundaryError, CapacityError, DegenerateStateError, RegistryError

BOSON = "boson"
FERMION = "fermion"

#: amplitudes with modulus below this are pruned from sparse states
DROP_TOL = 1e-14
DEFAULT_DIM_CAP = 4096


@dataclass(frozen=True)
class ParticleSpecies:
    """A particle type. Fermions always have ``max_occupation == 1``."""

    id: str
    statistics: str = BOSON
    mass: float = 0.0
    charge: int = 0
    max_occupation: int = 2

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str):
            raise RegistryError(f"species id must be a non-empty string, got {self.id!r}")
        if self.statistics not in (BOSON, FERMION):
            raise RegistryError(f"species {self.id}: statistics must be 'boson' or 'fermion'")
        if self.mass < 0:
            raise RegistryError(f"species {self.id}: mass must be nonnegative")
        if self.statistics == FERMION:
            object.__setattr__(self, "max_occupation", 1)
        if int(self.max_occupation) < 1:
            raise RegistryError(f"species {self.id}: max_occupation must be >= 1")
        object.__setattr__(self, "max_occupation", int(self.max_occupation))
        object.__setattr__(self, "charge", int(self.charge))

    @property
    def is_fermion(self) -> bool:
        return self.statistics == FERMION


@dataclass(frozen=True, order=True)
class Mode:
    """One single-particle mode: species, momentum cell, spin index."""

    species: str
    momentum: tuple = (0,)
    spin: int = 0

    def __post_init__(self):
        mom = self.momentum
        if isinstance(mom, (int, np.integer)):
            mom = (int(mom),)
        object.__setattr__(self, "momentum", tuple(int(p) for p in mom))
        object.__setattr__(self, "spin", int(self.spin))

    def __str__(self):
        mom = ",".join(str(p) for p in self.momentum)
        return f"{self.species}[{mom}]@{self.spin}"


@dataclass(frozen=True)
class BasisState:
    """Occupation-number basis state.

    Stored as a canonically sorted tuple of ``(mode, count)`` pairs with
    zero counts removed, so two states are equal exactly when their
    occupations agree.
    """

    occupations: tuple = ()

    def __post_init__(self):
        merged: dict = {}
        for mode, count in self.occupations:
            merged[mode] = merged.get(mode, 0) + int(count)
        if any(c < 0 for c in merged.values()):
            raise RegistryError("negative occupation")
        canon = tuple(sorted((m, c) for m, c in merged.items() if c > 0))
        object.__setattr__(self, "occupations", canon)

    @classmethod
    def of(cls, *modes: Mode) -> "BasisState":
        """Basis state with one particle per listed mode (repeats allowed)."""
        return cls(tuple((m, 1) for m in modes))

    @classmethod
    def from_map(cls, occ: Mapping[Mode, int]) -> "BasisState":
        return cls(tuple(occ.items()))

    def count(self, mode: Mode) -> int:
        for m, c in self.occupations:
            if m == mode:
                return c
        return 0

    @property
    def total(self) -> int:
        return sum(c for _, c in self.occupations)

    @property
    def modes(self) -> tuple:
        return tuple(m for m, _ in self.occupations)

    def with_count(self, mode: Mode, count: int) -> "BasisState":
        occ = dict(self.occupations)
        occ[mode] = count
        return BasisState(tuple(occ.items()))

    def __str__(self):
        if not self.occupations:
            return "|0>"
        parts = [f"{c}:{m}" if c > 1 else str(m) for m, c in self.occupations]
        return "|" + " ".join(parts) + ">"


VACUUM = BasisState()


class Registry:
    """Species, declared modes, and truncation settings.

    Parameters
    ----------
    species : iterable of ParticleSpecies
    modes : iterable of Mode, optional
        Defaults to one mode per species at momentum ``(0,)``, spin 0.
    n_max : int
        Global cap on the total particle number.
    momentum_bounds : sequence of (lo, hi) pairs, optional
        Inclusive bounds per momentum component. If omitted every declared
        momentum is accepted.
    """

    def __init__(self, species: Iterable[ParticleSpecies], modes: Iterable[Mode] | None = None,
                 n_max: int = 2, momentum_bounds=None):
        species = list(species)
        ids = [s.id for s in species]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise RegistryError(f"duplicate species ids: {sorted(dup)}")
        self.species = MappingProxyType({s.id: s for s in species})
        if modes is None:
            modes = [Mode(s.id) for s in species]
        modes = sorted(set(modes))
        if not modes:
            raise RegistryError("registry declares no modes")
        if int(n_max) < 0:
            raise RegistryError("n_max must be nonnegative")
        self.n_max = int(n_max)
        self.momentum_bounds = None
        if momentum_bounds is not None:
            self.momentum_bounds = tuple((int(lo), int(hi)) for lo, hi in momentum_bounds)
        for m in modes:
            if m.species not in self.species:
                raise RegistryError(f"mode {m} refers to unknown species {m.species!r}")
            if self.momentum_bounds is not None:
                if len(m.momentum) != len(self.momentum_bounds):
                    raise RegistryError(f"mode {m}: momentum has wrong dimension")
                for p, (lo, hi) in zip(m.momentum, self.momentum_bounds):
                    if not lo <= p <= hi:
                        raise RegistryError(f"mode {m}: momentum outside grid bounds")
        self.modes = tuple(modes)
        self._mode_index = {m: k for k, m in enumerate(self.modes)}

    def __repr__(self):
        return (f"Registry(species={list(self.species)}, n_modes={len(self.modes)}, "
                f"n_max={self.n_max})")

    # -- lookups ---------------------------------------------------------

    def mode(self, species: str, momentum=(0,), spin: int = 0) -> Mode:
        m = Mode(species, momentum, spin)
        self.check_mode(m)
        return m

    def modes_of(self, species: str) -> tuple:
        return tuple(m for m in self.modes if m.species == species)

    def check_mode(self, mode: Mode) -> int:
        try:
            return self._mode_index[mode]
        except (KeyError, TypeError):
            raise RegistryError(f"unknown mode {mode}") from None

    def cap(self, mode: Mode) -> int:
        return min(self.species[mode.species].max_occupation, self.n_max)

    def is_fermion(self, mode: Mode) -> bool:
        return self.species[mode.species].is_fermion

    def check_state(self, b: BasisState) -> None:
        for m, c in b.occupations:
            self.check_mode(m)
            if c > self.cap(m):
                raise RegistryError(f"{b}: occupation of {m} exceeds its cap")
        if b.total > self.n_max:
            raise RegistryError(f"{b}: total particle number exceeds n_max={self.n_max}")

    def charge(self, b: BasisState) -> int:
        return sum(self.species[m.species].charge * c for m, c in b.occupations)

    # -- enumerated basis ------------------------------------------------

    def dimension(self) -> int:
        """Size of the truncated basis, counted without enumerating it."""
        counts = [1] + [0] * self.n_max  # counts[k]: configurations with k particles
        for m in self.modes:
            cap = self.cap(m)
            new = [0] * (self.n_max + 1)
            for k, c in enumerate(counts):
                if c:
                    for n in range(min(cap, self.n_max - k) + 1):
                        new[k + n] += c
            counts = new
        return sum(counts)

    def basis(self, dim_cap: int = DEFAULT_DIM_CAP) -> tuple:
        """All basis states, ordered by particle number then occupations."""
        dim = self.dimension()
        if dim > dim_cap:
            raise CapacityError(f"truncated basis has dimension {dim} > cap {dim_cap}")
        return self._basis

    @cached_property
    def _occ_table(self) -> np.ndarray:
        caps = [self.cap(m) for m in self.modes]
        rows = []

        def rec(prefix, k, left):
            if k == len(caps):
                rows.append(tuple(prefix))
                return
            for n in range(min(caps[k], left) + 1):
                prefix.append(n)
                rec(prefix, k + 1, left - n)
                prefix.pop()

        rec([], 0, self.n_max)
        rows.sort(key=lambda r: (sum(r), tuple(-x for x in r)))
        return np.array(rows, dtype=np.int64).reshape(len(rows), len(caps))

    @cached_property
    def _basis(self) -> tuple:
        return tuple(self.basis_state(row) for row in self._occ_table)

    @cached_property
    def _index(self) -> dict:
        return {b: i for i, b in enumerate(self._basis)}

    def occupation_table(self, dim_cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
        self.basis(dim_cap)
        return self._occ_table

    def basis_state(self, occ) -> BasisState:
        return BasisState(tuple((m, int(n)) for m, n in zip(self.modes, occ) if n))

    def occupation_vector(self, b: BasisState) -> np.ndarray:
        v = np.zeros(len(self.modes), dtype=np.int64)
        for m, c in b.occupations:
            v[self.check_mode(m)] = c
        return v

    def index_of(self, b: BasisState) -> int:
        try:
            return self._index[b]
        except KeyError:
            raise RegistryError(f"{b} is not in the truncated basis") from None

    # -- operator matrices -----------------------------------------------

    @cached_property
    def _kernel_tables(self):
        occ = self._occ_table
        caps = np.array([self.cap(m) for m in self.modes], dtype=np.int64)
        weights = np.ones(len(caps), dtype=np.int64)
        for k in range(len(caps) - 2, -1, -1):
            weights[k] = weights[k + 1] * (caps[k + 1] + 1)
        codes = occ @ weights
        order = np.argsort(codes, kind="stable").astype(np.int64)
        fermion = np.array([self.is_fermion(m) for m in self.modes], dtype=np.int8)
        return occ, codes, codes[order].copy(), order, weights, caps, fermion

    def ladder_matrix(self, mode: Mode, dagger: bool, dim_cap: int = DEFAULT_DIM_CAP):
        """Sparse matrix of ``a†(mode)`` (``dagger=True``) or ``a(mode)``
        on the enumerated basis. Returns ``(matrix, truncation_lost)``."""
        self.basis(dim_cap)
        k = self.check_mode(mode)
        return self._ladder(k, bool(dagger))

    def _ladder(self, k, dagger):
        cache = self.__dict__.setdefault("_ladder_cache", {})
        key = (k, dagger)
        if key not in cache:
            occ, codes, sorted_codes, order, weights, caps, fermion = self._kernel_tables
            rows, cols, vals, lost = kernels.ladder_matrix(
                occ, codes, sorted_codes, order, weights, caps, fermion,
                self.n_max, k, dagger)
            dim = occ.shape[0]
            mat = sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
            cache[key] = (mat, bool(lost))
        return cache[key]


class StateVector:
    """Immutable sparse superposition of basis states.

    ``truncated`` records that some amplitude was lost to the truncation
    while producing this state.
    """

    __slots__ = ("_amps", "registry", "truncated")

    def __init__(self, amplitudes: Mapping[BasisState, complex], registry: Registry,
                 truncated: bool = False, drop_tol: float = DROP_TOL, validate: bool = True):
        amps = {}
        for b, a in amplitudes.items():
            a = complex(a)
            if abs(a) < drop_tol:
                continue
            if validate:
                registry.check_state(b)
            amps[b] = a
        self._amps = MappingProxyType(dict(sorted(amps.items(), key=_state_key)))
        self.registry = registry
        self.truncated = bool(truncated)

    # mapping-ish interface
    @property
    def amplitudes(self) -> Mapping[BasisState, complex]:
        return self._amps

    def __len__(self):
        return len(self._amps)

    def __iter__(self):
        return iter(self._amps)

    def items(self):
        return self._amps.items()

    def amplitude(self, b: BasisState) -> complex:
        return self._amps.get(b, 0j)

    @property
    def support(self) -> tuple:
        return tuple(self._amps)

    def is_zero(self) -> bool:
        return not self._amps

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self._amps.values()))

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.registry is other.registry and dict(self._amps) == dict(other._amps)

    __hash__ = None

    def __add__(self, other: "StateVector") -> "StateVector":
        return add(self, other)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return add(self, scale(other, -1.0))

    def __mul__(self, c) -> "StateVector":
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        terms = " + ".join(f"({a:.4g}){b}" for b, a in list(self._amps.items())[:6])
        more = " + ..." if len(self._amps) > 6 else ""
        return f"StateVector({terms or '0'}{more})"

    def to_dense(self, basis_index: Mapping[BasisState, int] | None = None) -> np.ndarray:
        """Dense amplitude vector over the registry's enumerated basis."""
        reg = self.registry
        index = basis_index if basis_index is not None else None
        if index is None:
            reg.basis()
            index = reg._index
        vec = np.zeros(len(index), dtype=complex)
        for b, a in self._amps.items():
            try:
                vec[index[b]] = a
            except KeyError:
                raise RegistryError(f"{b} is not in the basis") from None
        return vec

    @classmethod
    def from_dense(cls, vec, registry: Registry, basis=None) -> "StateVector":
        basis = registry.basis() if basis is None else basis
        vec = np.asarray(vec)
        nz = np.flatnonzero(np.abs(vec) >= DROP_TOL)
        return cls({basis[i]: vec[i] for i in nz}, registry, validate=False)


def _state_key(item):
    b = item[0]
    return (b.total, b.occupations)


# -- constructors ----------------------------------------------------------

def vacuum(registry: Registry) -> StateVector:
    return StateVector({VACUUM: 1.0}, registry)


def basis_vector(registry: Registry, b: BasisState, amplitude: complex = 1.0) -> StateVector:
    return StateVector({b: amplitude}, registry)


def state(registry: Registry, terms: Mapping[BasisState, complex] | Iterable) -> StateVector:
    """Build a state from ``{basis_state: amplitude}`` or ``[(amplitude, basis_state)]``."""
    if isinstance(terms, Mapping):
        return StateVector(terms, registry)
    acc: dict = {}
    for amp, b in terms:
        acc[b] = acc.get(b, 0) + amp
    return StateVector(acc, registry)


# -- ladder operators --------------------------------------------------------

def _fermion_sign(registry: Registry, b: BasisState, mode: Mode) -> int:
    before = 0
    for m, c in b.occupations:
        if m >= mode:
            break
        if registry.is_fermion(m):
            before += c
    return -1 if before % 2 else 1


def _ladder(s: StateVector, mode: Mode, dagger: bool) -> StateVector:
    reg = s.registry
    reg.check_mode(mode)
    cap = reg.cap(mode)
    fermion = reg.is_fermion(mode)
    out: dict = {}
    lost = s.truncated
    for b, amp in s.items():
        n = b.count(mode)
        if dagger:
            if n + 1 > cap or b.total + 1 > reg.n_max:
                if not (fermion and n == 1):
                    lost = True
                continue
            factor = math.sqrt(n + 1)
            nb = b.with_count(mode, n + 1)
        else:
            if n == 0:
                continue
            factor = math.sqrt(n)
            nb = b.with_count(mode, n - 1)
        if fermion:
            factor = _fermion_sign(reg, b, mode)
        out[nb] = out.get(nb, 0) + factor * amp
    return StateVector(out, reg, truncated=lost, validate=False)


def create(s: StateVector, mode: Mode) -> StateVector:
    """Apply ``a†(mode)``."""
    return _ladder(s, mode, True)


def annihilate(s: StateVector, mode: Mode) -> StateVector:
    """Apply ``a(mode)``."""
    return _ladder(s, mode, False)


def apply_string(s: StateVector, ops) -> StateVector:
    """Apply an operator string ``[(mode, dagger), ...]``; the rightmost
    factor acts first, as in the written product."""
    for mode, dagger in reversed(list(ops)):
        s = _ladder(s, mode, dagger)
    return s


# -- linear algebra plumbing ------------------------------------------------

def _same_registry(x: StateVector, y: StateVector):
    if x.registry is not y.registry:
        raise RegistryError("states belong to different registries")


def inner_product(x: StateVector, y: StateVector) -> complex:
    """``<x|y>``, antilinear in ``x``."""
    _same_registry(x, y)
    if len(x) > len(y):
        return sum(x.amplitude(b).conjugate() * a for b, a in y.items())
    return sum(a.conjugate() * y.amplitude(b) for b, a in x.items())


def norm(x: StateVector) -> float:
    return x.norm()


def normalize(x: StateVector) -> StateVector:
    n = x.norm()
    if n == 0.0:
        raise DegenerateStateError("cannot normalize the zero vector")
    return StateVector({b: a / n for b, a in x.items()}, x.registry,
                       truncated=x.truncated, validate=False)


def add(x: StateVector, y: StateVector) -> StateVector:
    _same_registry(x, y)
    acc = dict(x.items())
    for b, a in y.items():
        acc[b] = acc.get(b, 0) + a
    return StateVector(acc, x.registry, truncated=x.truncated or y.truncated, validate=False)


def scale(x: StateVector, c: complex) -> StateVector:
    return StateVector({b: c * a for b, a in x.items()}, x.registry,
                       truncated=x.truncated, validate=False)


# -- algebra checks ----------------------------------------------------------

def _check_interior(registry: Registry, probe: BasisState, mode_a: Mode, mode_b: Mode):
    registry.check_state(probe)
    if probe.total > registry.n_max - 2:
        raise BoundaryError(f"probe {probe} has {probe.total} particles; "
                            f"interior requires <= n_max - 2 = {registry.n_max - 2}")
    need = 2 if mode_a == mode_b else 1
    for m in {mode_a, mode_b}:
        if not registry.is_fermion(m) and probe.count(m) > registry.cap(m) - need:
            raise BoundaryError(f"probe {probe} is at the occupation cap of {m}")


def commutator_defect(registry: Registry, mode_a: Mode, mode_b: Mode,
                      probe_states: Iterable[BasisState]) -> float:
    """Largest residual of the canonical (anti)commutation relations.

    Checks ``[a(a), a†(b)] - δ_ab``, ``[a(a), a(b)]`` and ``[a†(a), a†(b)]``
    on every probe; anticommutators are used when both modes are fermionic.
    Probes must sit strictly inside the truncation (``BoundaryError``
    otherwise), since the relations genuinely fail on the boundary.
    """
    registry.check_mode(mode_a)
    registry.check_mode(mode_b)
    sign = 1.0 if registry.is_fermion(mode_a) and registry.is_fermion(mode_b) else -1.0
    delta = 1.0 if mode_a == mode_b else 0.0
    worst = 0.0
    for probe in probe_states:
        _check_interior(registry, probe, mode_a, mode_b)
        psi = basis_vector(registry, probe)
        pairs = (
            (((mode_a, False), (mode_b, True)), ((mode_b, True), (mode_a, False)), delta),
            (((mode_a, False), (mode_b, False)), ((mode_b, False), (mode_a, False)), 0.0),
            (((mode_a, True), (mode_b, True)), ((mode_b, True), (mode_a, True)), 0.0),
        )
        for first, second, d in pairs:
            r = apply_string(psi, first) + sign * apply_string(psi, second) - d * psi
            worst = max(worst, r.norm())
    return worst


def interior_probes(registry: Registry, mode_a: Mode, mode_b: Mode,
                    dim_cap: int = DEFAULT_DIM_CAP) -> list:
    """All basis states on which ``commutator_defect`` is well posed."""
    out = []
    for b in registry.basis(dim_cap):
        try:
            _check_interior(registry, b, mode_a, mode_b)
        except BoundaryError:
            continue
        out.append(b)
    return out


def commutator_defect_matrix(registry: Registry, dim_cap: int = DEFAULT_DIM_CAP) -> float:
    """Same check as ``commutator_defect`` for every mode pair, using the
    sparse ladder matrices and all interior basis states at once."""
    occ = registry.occupation_table(dim_cap)
    total = occ.sum(axis=1)
    modes = registry.modes
    worst = 0.0
    mats = {}
    for m in modes:
        mats[m, True] = registry.ladder_matrix(m, True, dim_cap)[0]
        mats[m, False] = registry.ladder_matrix(m, False, dim_cap)[0]
    ident = sparse.identity(occ.shape[0], format="csr")
    for i, ma in enumerate(modes):
        for j in range(i, len(modes)):
            mb = modes[j]
            need = 2 if i == j else 1
            ok = total <= registry.n_max - 2
            for k, m in ((i, ma), (j, mb)):
                if not registry.is_fermion(m):
                    ok &= occ[:, k] <= registry.cap(m) - need
            cols = np.flatnonzero(ok)
            if cols.size == 0:
                continue
            sign = 1.0 if registry.is_fermion(ma) and registry.is_fermion(mb) else -1.0
            for x, y, d in (((ma, False), (mb, True), 1.0 if i == j else 0.0),
                            ((ma, False), (mb, False), 0.0),
                            ((ma, True), (mb, True), 0.0)):
                r = mats[x] @ mats[y] + sign * (mats[y] @ mats[x]) - d * ident
                r = r[:, cols]
                if r.nnz:
                    col_norms = np.sqrt(np.asarray(abs(r).power(2).sum(axis=0))).ravel()
                    worst = max(worst, float(col_norms.max()))
            # [a(b), a†(a)] for a != b is covered by symmetry of the pair loop
            if i != j:
                r = mats[mb, False] @ mats[ma, True] + sign * (mats[ma, True] @ mats[mb, False])
                r = r[:, cols]
                if r.nnz:
                    col_norms = np.sqrt(np.asarray(abs(r).power(2).sum(axis=0))).ravel()
                    worst = max(worst, float(col_norms.max()))
    return worst


def random_registry(rng: np.random.Generator, max_dim: int = 1024) -> Registry:
    """Random small registry for property tests; dimension stays <= max_dim."""
    while True:
        n_species = int(rng.integers(1, 4))
        species = []
        for k in range(n_species):
            stats = FERMION if rng.random() < 0.5 else BOSON
            species.append(ParticleSpecies(f"s{k}", stats, mass=float(rng.random()),
                                           charge=int(rng.integers(-1, 2)),
                                           max_occupation=int(rng.integers(2, 5))))
        modes = []
        for s in species:
            n_cells = int(rng.integers(1, 4))
            n_spins = int(rng.integers(1, 3))
            modes += [Mode(s.id, (p,), sp) for p, sp in itertools.product(range(n_cells), range(n_spins))]
        reg = Registry(species, modes, n_max=int(rng.integers(2, 5)),
                       momentum_bounds=[(0, 2)])
        if reg.dimension() <= max_dim:
            return reg
