"""Particles-content signatures and superselection-sector decomposition.

A state's content signature is the *set* of species present, so changing
how many identical particles there are never changes the signature.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Iterable

from .errors import DegenerateStateError
from .fock import BasisState, StateVector

#: sectors lighter than this are treated as numerical noise
SECTOR_EPS = 1e-12


@dataclass(frozen=True, order=True)
class ContentSignature:
    species: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(sorted(set(self.species))))

    @classmethod
    def of(cls, *species: str) -> "ContentSignature":
        return cls(species)

    @property
    def is_vacuum(self) -> bool:
        return not self.species

    def __contains__(self, sid):
        return sid in self.species

    def __str__(self):
        return "{" + ",".join(self.species) + "}"

    @classmethod
    def parse(cls, text: str) -> "ContentSignature":
        text = text.strip()
        if text.startswith("{") and text.endswith("}"):
            text = text[1:-1]
        return cls(tuple(s.strip() for s in text.split(",") if s.strip()))


def signature(b: BasisState) -> ContentSignature:
    return ContentSignature(tuple(m.species for m, c in b.occupations if c > 0))


def content_changed(in_sig: ContentSignature, out_sig: ContentSignature) -> bool:
    """True when some species is present on one side and absent on the other."""
    return set(in_sig.species) != set(out_sig.species)


@dataclass(frozen=True)
class SectorPart:
    probability: float
    component: StateVector
    weight: float  # unredistributed squared norm in the input


class SectorDecomposition:
    """Mapping ``ContentSignature -> SectorPart`` in canonical signature order."""

    def __init__(self, parts: dict, dropped: float = 0.0, input_norm: float = 1.0):
        self.parts = dict(sorted(parts.items()))
        self.dropped = dropped
        self.input_norm = input_norm

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, sig):
        return self.parts[sig]

    def items(self):
        return self.parts.items()

    def probabilities(self) -> dict:
        return {sig: part.probability for sig, part in self.parts.items()}

    def recombine(self) -> StateVector:
        """Inverse of decomposition: ``sum_k sqrt(w_k) * component_k``."""
        parts = list(self.parts.values())
        acc = parts[0].component * math.sqrt(parts[0].weight)
        for part in parts[1:]:
            acc = acc + part.component * math.sqrt(part.weight)
        return acc


def sector_decompose(s: StateVector, eps: float = SECTOR_EPS) -> SectorDecomposition:
    """Split ``s`` by content signature.

    Probabilities are squared component norms relative to ``|s|^2``.
    Sectors with probability below ``eps`` are dropped and the remaining
    probabilities rescaled to sum to one.
    """
    if s.is_zero():
        raise DegenerateStateError("cannot decompose the zero vector")
    groups: dict = {}
    for b, a in s.items():
        groups.setdefault(signature(b), {})[b] = a
    total = sum(abs(a) ** 2 for a in s.amplitudes.values())
    parts = {}
    dropped = 0.0
    for sig, amps in groups.items():
        w = sum(abs(a) ** 2 for a in amps.values())
        if w / total < eps:
            dropped += w / total
            continue
        n = math.sqrt(w)
        comp = StateVector({b: a / n for b, a in amps.items()}, s.registry, validate=False)
        parts[sig] = (w, comp)
    kept = sum(w for w, _ in parts.values())
    out = {sig: SectorPart(w / kept, comp, w) for sig, (w, comp) in parts.items()}
    return SectorDecomposition(out, dropped=dropped, input_norm=math.sqrt(total))


def signatures_of(s: StateVector) -> set:
    return {signature(b) for b in s.support}


def is_cross_sector_superposition(s: StateVector, eps: float = SECTOR_EPS) -> bool:
    return len(sector_decompose(s, eps)) >= 2


def canonical_signatures(sigs: Iterable[ContentSignature]) -> list:
    return sorted(set(sigs))
