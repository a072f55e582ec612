"""Result containers shared by experiments, analysis and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = ["TimeSeries", "SweepResult"]


@dataclass
class TimeSeries:
    """Readout values against a strictly increasing abscissa.

    ``channels`` holds extra named columns of the same length (for example the
    quadrature readout of a Ramsey sequence or per-point standard errors).
    """

    abscissa: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.abscissa) != len(self.values):
            raise ParameterError("values", "length differs from abscissa")
        if np.any(np.diff(self.abscissa) <= 0):
            raise ParameterError("abscissa", "must be strictly increasing")
        for name, col in list(self.channels.items()):
            col = np.asarray(col, dtype=float).reshape(-1)
            if len(col) != len(self.values):
                raise ParameterError(name, "channel length differs from abscissa")
            self.channels[name] = col

    def __len__(self):
        return len(self.values)

    def with_values(self, values, **meta):
        return TimeSeries(self.abscissa.copy(), values, {**self.meta, **meta}, {})


@dataclass
class SweepResult:
    parameters: list
    fits: list
    raw: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.parameters) != len(self.fits):
            raise ParameterError("fits", "length differs from parameters")
        if self.raw is not None and len(self.raw) != len(self.parameters):
            raise ParameterError("raw", "length differs from parameters")

    def decay_times(self):
        """Fitted decay constants, ``nan`` where a fit is absent or unconverged."""
        out = []
        for fit in self.fits:
            if fit is None or not fit.converged:
                out.append(float("nan"))
            else:
                out.append(fit.decay_time)
        return np.array(out)
