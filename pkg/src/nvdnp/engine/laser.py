"""Optical reset of the electron and laser-induced nuclear depolarization."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ..errors import ParameterError
from .state import KAPPA_DEFAULT, QuantumState

__all__ = ["LaserParams", "apply_laser_channel", "depolarization_probability"]


@dataclass(frozen=True)
class LaserParams:
    duration: float  # s
    power: float  # W
    p_init: float = 0.95
    kappa: float = KAPPA_DEFAULT  # W^-1 s^-1

    def __post_init__(self):
        for name in ("duration", "power", "kappa"):
            if not getattr(self, name) >= 0:
                raise ParameterError(name, "must be non-negative")
        if not 0.0 <= self.p_init <= 1.0:
            raise ParameterError("p_init", "must lie in [0, 1]")

    @property
    def depolarization(self):
        return depolarization_probability(self.kappa, self.power, self.duration)


def depolarization_probability(kappa, power, duration):
    """Per-spin replacement probability ``1 - exp(-kappa * power * duration)``."""
    return -math.expm1(-kappa * power * duration)


def apply_laser_channel(state, laser):
    """Reset the electron to ``p_init |0><0| + (1-p_init) |1><1|`` and depolarize nuclei.

    The reduced nuclear state is kept except that every nucleus is independently
    replaced by I/2 with probability ``laser.depolarization``.
    """
    if state.backend == "density_matrix":
        return _laser_density(state, laser)
    return _laser_trajectories(state, laser)


def _laser_density(state, laser):
    n = state.n_spins
    half = 2**n
    rho = state.payload.reshape(2, half, 2, half)
    nuc = rho[0, :, 0, :] + rho[1, :, 1, :]
    q = laser.depolarization
    if q > 0.0:
        for k in range(n):
            t = nuc.reshape(2**k, 2, 2 ** (n - 1 - k), 2**k, 2, 2 ** (n - 1 - k))
            traced = t[:, 0, :, :, 0, :] + t[:, 1, :, :, 1, :]
            mixed = np.zeros_like(t)
            mixed[:, 0, :, :, 0, :] = 0.5 * traced
            mixed[:, 1, :, :, 1, :] = 0.5 * traced
            nuc = ((1.0 - q) * t + q * mixed).reshape(half, half)
    out = np.zeros((2, half, 2, half), dtype=complex)
    out[0, :, 0, :] = laser.p_init * nuc
    out[1, :, 1, :] = (1.0 - laser.p_init) * nuc
    return QuantumState(state.backend, n, out.reshape(2 * half, 2 * half))


def _laser_trajectories(state, laser):
    """Stochastic unravelling of the reset + depolarization channel.

    Per trajectory a fixed block of 2 + 3n uniforms is drawn from its own
    generator: branch choice, per-spin (apply?, outcome, replacement), electron.
    """
    n = state.n_spins
    half = 2**n
    m = state.n_trajectories
    psi = state.payload.reshape(2, half, m)
    draws = np.array([g.random(2 + 3 * n) for g in state.rngs]).reshape(m, 2 + 3 * n)

    w0 = np.sum(np.abs(psi[0]) ** 2, axis=0)
    w1 = np.sum(np.abs(psi[1]) ** 2, axis=0)
    take0 = draws[:, 0] * (w0 + w1) < w0
    nuc = np.where(take0[None, :], psi[0], psi[1])
    norm = np.sqrt(np.where(take0, w0, w1))
    nuc = nuc / norm[None, :]

    q = laser.depolarization
    cols = np.arange(m)
    for k in range(n):
        u_apply, u_outcome, u_target = draws[:, 1 + 3 * k : 4 + 3 * k].T
        hit = u_apply < q
        if not np.any(hit):
            continue
        t = nuc.reshape(2**k, 2, 2 ** (n - 1 - k), m)
        p_up = np.sum(np.abs(t[:, 0]) ** 2, axis=(0, 1))
        outcome = np.where(u_outcome < p_up, 0, 1)  # Born-rule collapse
        target = np.where(u_target < 0.5, 0, 1)  # fresh random z state
        kept = t[:, outcome, :, cols]  # (m, 2**k, 2**(n-1-k))
        kept = np.moveaxis(kept, 0, -1)
        kept_norm = np.sqrt(np.sum(np.abs(kept) ** 2, axis=(0, 1)))
        kept = kept / np.where(kept_norm > 0, kept_norm, 1.0)[None, None, :]
        new = np.zeros_like(t)
        new[:, target, :, cols] = np.moveaxis(kept, -1, 0)
        t = np.where(hit[None, None, None, :], new, t)
        nuc = t.reshape(half, m)

    electron_one = draws[:, 1 + 3 * n] >= laser.p_init
    out = np.zeros((2, half, m), dtype=complex)
    out[0] = np.where(electron_one[None, :], 0.0, nuc)
    out[1] = np.where(electron_one[None, :], nuc, 0.0)
    return QuantumState(
        state.backend,
        n,
        out.reshape(2 * half, m),
        state.rngs,
        state.seed,
        state.first_index,
    )
