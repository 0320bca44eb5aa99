"""Quantum trajectories from repeated interactions.

Discrete collision-model samplers, their diffusive and jump stochastic
Schrodinger limits, the Lindblad master-equation oracle and the statistics
that compare them.
"""

__version__ = "0.1.0"

from .discrete import (
    MeasurementScheme,
    branch_average,
    collective_commutator_check,
    conditional_maps,
    floquet_unitary,
    run_discrete_ensemble,
    run_discrete_trajectory,
    unconditioned_state,
)
from .model import (
    ItoCoefficients,
    LindbladGenerator,
    SystemModel,
    canonical_qubit_model,
    decoupled_model,
    ito_coefficients,
    ito_coefficients_series,
    lindblad_generator,
    random_model,
    unitarity_residual,
    validate_model,
)
from .numerics import ValidationError, trace_distance
from .sse import (
    integrate_diffusive,
    integrate_jump,
    integrate_jump_offset,
    master_evolve,
    run_sse_ensemble,
)

__all__ = [
    "ItoCoefficients",
    "LindbladGenerator",
    "MeasurementScheme",
    "SystemModel",
    "ValidationError",
    "branch_average",
    "canonical_qubit_model",
    "collective_commutator_check",
    "conditional_maps",
    "decoupled_model",
    "floquet_unitary",
    "integrate_diffusive",
    "integrate_jump",
    "integrate_jump_offset",
    "ito_coefficients",
    "ito_coefficients_series",
    "lindblad_generator",
    "master_evolve",
    "random_model",
    "run_discrete_ensemble",
    "run_discrete_trajectory",
    "run_sse_ensemble",
    "trace_distance",
    "unconditioned_state",
    "unitarity_residual",
    "validate_model",
]
