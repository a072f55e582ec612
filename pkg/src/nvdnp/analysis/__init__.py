"""Decay-curve fitting and quasistatic oracles."""

from .fitting import (
    FitResult,
    damped_cosine,
    fit_damped_cosine,
    fit_gaussian_fid,
    frequency_scan,
    gaussian_fid,
    numeric_jacobian,
)
from .oracles import quasistatic_fid_oracle, tstar_quasistatic

__all__ = [
    "FitResult",
    "damped_cosine",
    "fit_damped_cosine",
    "fit_gaussian_fid",
    "frequency_scan",
    "gaussian_fid",
    "numeric_jacobian",
    "quasistatic_fid_oracle",
    "tstar_quasistatic",
]
