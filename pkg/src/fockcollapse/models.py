"""Bundled toy models used by the processes, the check suites and the
example scenario files."""
from __future__ import annotations

from .dynamics import InteractionModel, Term
from .fock import BOSON, FERMION, Mode, ParticleSpecies, Registry


def _model(species, terms, n_max=2, name="", eps=0.05, free=None, modes=None, t_schedule=None):
    reg = Registry(species, modes=modes, n_max=n_max)
    if free is None:
        free = [(m, reg.species[m.species].mass) for m in reg.modes]
    ops = [Term(g, tuple((Mode(sp), dag) for sp, dag in string)) for g, string in terms]
    return InteractionModel(reg, free, ops, switching_epsilon=eps, name=name, t_schedule=t_schedule)


def decay_toy(g: float = 0.1, detuning: float = 0.0, eps: float = 0.05) -> InteractionModel:
    """``Pu -> Ps + Q`` with ``H1 = g (a†(Ps) a†(Q) a(Pu) + h.c.)``.

    With ``n_max = 2`` the coupling connects only ``|Pu>`` and
    ``|Ps, Q>``, an isolated two-level block with energy gap ``detuning``.
    """
    species = [ParticleSpecies("Pu", BOSON, mass=2.0),
               ParticleSpecies("Ps", BOSON, mass=1.2),
               ParticleSpecies("Q", BOSON, mass=0.8 - detuning)]
    return _model(species, [(g, [("Ps", True), ("Q", True), ("Pu", False)])],
                  name="decay", eps=eps)


def absorption_toy(g: float = 0.05, eps: float = 0.05) -> InteractionModel:
    """Photoionisation ``gamma + A -> e + A+`` on resonance."""
    species = [ParticleSpecies("gamma", BOSON, mass=1.5),
               ParticleSpecies("A", BOSON, mass=10.0, max_occupation=1),
               ParticleSpecies("e", FERMION, mass=0.5, charge=-1),
               ParticleSpecies("A+", BOSON, mass=11.0, charge=1, max_occupation=1)]
    return _model(species, [(g, [("e", True), ("A+", True), ("A", False), ("gamma", False)])],
                  name="absorption", eps=eps)


def pair_production_toy(g_e: float = 0.1, g_mu: float = 0.1, m_e: float = 1.0,
                        m_mu: float = 1.0, eps: float = 0.05) -> InteractionModel:
    """``gamma -> e e+`` and ``gamma -> mu mu^c`` from one photon mode.

    Equal couplings and masses make the two pair channels symmetric.
    """
    species = [ParticleSpecies("gamma", BOSON, mass=2.0),
               ParticleSpecies("e", FERMION, mass=m_e, charge=-1),
               ParticleSpecies("e+", FERMION, mass=m_e, charge=1),
               ParticleSpecies("mu", FERMION, mass=m_mu, charge=-1),
               ParticleSpecies("mu^c", FERMION, mass=m_mu, charge=1)]
    return _model(species, [(g_e, [("e", True), ("e+", True), ("gamma", False)]),
                            (g_mu, [("mu", True), ("mu^c", True), ("gamma", False)])],
                  name="pair_production", eps=eps)


BUNDLED = {
    "decay": decay_toy,
    "absorption": absorption_toy,
    "pair_production": pair_production_toy,
}
