"""Hamiltonians, states, propagation and the laser channel."""

from .hamiltonian import DriveParams, HamiltonianSpec, build_segment_hamiltonian, dipolar_pairs
from .laser import LaserParams, apply_laser_channel, depolarization_probability
from .propagation import (
    DEFAULT_CACHE,
    PropagatorCache,
    chebyshev_expm_action,
    factorized_free_action,
    propagate,
    propagator,
    rotate_electron,
)
from .state import (
    BACKENDS,
    KAPPA_DEFAULT,
    EngineOptions,
    Observables,
    QuantumState,
    electron_bloch,
    initial_state,
    measure,
    nuclear_reduced_state,
    total_z_magnetization,
)

__all__ = [
    "BACKENDS",
    "DEFAULT_CACHE",
    "DriveParams",
    "EngineOptions",
    "HamiltonianSpec",
    "KAPPA_DEFAULT",
    "LaserParams",
    "Observables",
    "PropagatorCache",
    "QuantumState",
    "apply_laser_channel",
    "build_segment_hamiltonian",
    "chebyshev_expm_action",
    "depolarization_probability",
    "dipolar_pairs",
    "electron_bloch",
    "factorized_free_action",
    "initial_state",
    "measure",
    "nuclear_reduced_state",
    "propagate",
    "propagator",
    "rotate_electron",
    "total_z_magnetization",
]
