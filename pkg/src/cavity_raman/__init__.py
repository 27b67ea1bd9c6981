"""Simulation of Raman photon emission by an atom crossing a two-mode cavity."""

__version__ = "0.1.0"

from .fockspace import (  # noqa: E402
    DegenerateConditionError,
    DensityOperator,
    FockSpaceConfig,
    LinearOperator,
    StateVector,
    TruncationError,
    basis_index,
    basis_label,
    build_atomic_operator,
    build_mode_operator,
    compose_initial_state,
    conditional_field_state,
    expectation,
    make_field_state,
    photon_distribution,
)
from .model import (  # noqa: E402
    DetuningSchedule,
    LindbladModel,
    SystemParams,
    build_lindblad_model,
    coupling_at,
    detuning_at,
    hamiltonian_at,
    khz,
    lindblad_dissipators,
    to_khz,
)
from .evolve import (  # noqa: E402
    IntegrationAccuracyError,
    ObservableTrace,
    SectorState,
    StepperSettings,
    evolve_density,
    evolve_structured,
    evolve_unitary,
)
from ._backend import COMPILED_AVAILABLE  # noqa: E402
