"""Simulation and analysis of a trapped-ion qubit coupled to quantized motion."""

__version__ = "0.1.0"

from .errors import IllConditionedError, IonLostError, PreconditionError, TruncationError, TruncationWarning
from .fockspace import (
    FockSpace,
    HybridState,
    InternalLevel,
    MotionalDensityMatrix,
    coherent_amplitudes,
    coherent_state,
    displacement_matrix,
    fidelity,
    motional_populations,
)
from .dynamics import CouplingParams, PulseSpec, Transition, evolve_pulse, rabi_frequency

__all__ = [
    "__version__",
    "CouplingParams",
    "FockSpace",
    "HybridState",
    "IllConditionedError",
    "InternalLevel",
    "IonLostError",
    "MotionalDensityMatrix",
    "PreconditionError",
    "PulseSpec",
    "Transition",
    "TruncationError",
    "TruncationWarning",
    "coherent_amplitudes",
    "coherent_state",
    "displacement_matrix",
    "evolve_pulse",
    "fidelity",
    "motional_populations",
    "rabi_frequency",
]
