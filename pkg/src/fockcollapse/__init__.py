"""Truncated Fock-space engine contrasting unitary S-matrix evolution
with stochastic collapse onto particle-content sectors."""

__version__ = "0.1.0"

from .errors import (AccuracyError, BoundaryError, CapacityError, ConfigError, ConvergenceError,
                     DegenerateStateError, FockCollapseError, InputError, ModelError, RegistryError,
                     ScenarioError, SectorIndexError)
from .fock import (BOSON, FERMION, BasisState, Mode, ParticleSpecies, Registry, StateVector,
                   annihilate, apply_string, basis_vector, commutator_defect, create, inner_product,
                   normalize, vacuum)
from .sectors import ContentSignature, SectorDecomposition, sector_decompose, signature
from .dynamics import (InteractionModel, SMatrix, Term, dyson_truncated, extract_s_matrix,
                       interaction_picture_U, transition_probability)
from .collapse import (CollapseEvent, CollapseSampler, GammaMatrix, collapse_sample, gamma_from_s,
                       is_unistochastic, sector_probabilities)
from .kernels import BACKEND

__all__ = [name for name in dir() if not name.startswith("_")]
