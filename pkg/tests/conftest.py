import numpy as np
import pytest

from fockcollapse.fock import BOSON, FERMION, Mode, ParticleSpecies, Registry


@pytest.fixture
def mixed_registry():
    """Two boson modes and three fermion modes, n_max = 4."""
    species = [ParticleSpecies("b", BOSON, max_occupation=3), ParticleSpecies("f", FERMION)]
    modes = [Mode("b", (0,)), Mode("b", (1,)), Mode("f", (0,), 0), Mode("f", (0,), 1), Mode("f", (1,), 0)]
    return Registry(species, modes, n_max=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
