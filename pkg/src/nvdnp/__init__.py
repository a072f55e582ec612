"""Central-spin simulator for NV-centre dynamical nuclear polarization.

Subpackages: :mod:`nvdnp.bathgen` (13C baths), :mod:`nvdnp.engine` (states,
Hamiltonians, propagation, laser channel), :mod:`nvdnp.pulsedsl` (pulse
programs), :mod:`nvdnp.experiments` (canned protocols), :mod:`nvdnp.analysis`
(fits and quasistatic oracles) and :mod:`nvdnp.cli`.
"""

__version__ = "0.1.0"

from .constants import CONSTANTS, PhysicalConstants
from .bathgen import BathConfig, BathSpin, hyperfine_from_position, parse_bath, preset_bath, sample_bath, save_bath
from .engine import DriveParams, EngineOptions, LaserParams, QuantumState, initial_state, measure, propagate
from .series import SweepResult, TimeSeries
from .analysis import FitResult, fit_damped_cosine, fit_gaussian_fid, quasistatic_fid_oracle, tstar_quasistatic
from .pulsedsl import RunRecord, execute, parse_sequence, serialize_sequence
from .experiments import (
    dnp_protocol,
    ensemble_average,
    fid_experiment,
    laser_study,
    rabi_experiment,
    rabi_frequency_sweep,
)

__all__ = [
    "BathConfig",
    "BathSpin",
    "CONSTANTS",
    "DriveParams",
    "EngineOptions",
    "FitResult",
    "LaserParams",
    "PhysicalConstants",
    "QuantumState",
    "RunRecord",
    "SweepResult",
    "TimeSeries",
    "dnp_protocol",
    "ensemble_average",
    "execute",
    "fid_experiment",
    "fit_damped_cosine",
    "fit_gaussian_fid",
    "hyperfine_from_position",
    "initial_state",
    "laser_study",
    "measure",
    "parse_bath",
    "parse_sequence",
    "preset_bath",
    "propagate",
    "quasistatic_fid_oracle",
    "rabi_experiment",
    "rabi_frequency_sweep",
    "sample_bath",
    "save_bath",
    "serialize_sequence",
    "tstar_quasistatic",
]
