"""Closed-form quasistatic references for the pure-dephasing free induction decay."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NoFiniteT2Error, ParameterError

__all__ = ["quasistatic_fid_oracle", "tstar_quasistatic"]


def _a_par(bath):
    if hasattr(bath, "a_par") and not callable(bath.a_par):
        return np.asarray(bath.a_par, dtype=float).reshape(-1)
    return np.asarray(bath, dtype=float).reshape(-1)


def _polarizations(p, n):
    p = np.broadcast_to(np.asarray(p, dtype=float), (n,)) if np.ndim(p) == 0 else np.asarray(p, float)
    if len(p) != n:
        raise ParameterError("polarizations", f"expected {n} values, got {len(p)}")
    if np.any(np.abs(p) > 1):
        raise ParameterError("polarizations", "values must lie in [-1, 1]")
    return p


def quasistatic_fid_oracle(bath, polarizations, t):
    """Ramsey contrast of an electron dephased by static, partially polarized nuclei.

    Parameters
    ----------
    bath : BathConfig or array_like
        Only the secular couplings ``a_par`` (rad/s) are used.
    polarizations : float or array_like
        Per-spin polarization ``p_k`` (a scalar applies to every spin).
    t : float or array_like
        Free evolution time(s) in seconds.

    Returns
    -------
    float or ndarray
        ``prod_k sqrt(1 - (1 - p_k^2) sin^2(a_par_k t / 2))``.
    """
    a = _a_par(bath)
    p = _polarizations(polarizations, len(a))
    tt = np.asarray(t, dtype=float)
    s2 = np.sin(0.5 * np.multiply.outer(tt, a)) ** 2
    terms = np.clip(1.0 - (1.0 - p**2) * s2, 0.0, None)
    out = np.prod(np.sqrt(terms), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def tstar_quasistatic(bath, p=0.0):
    """Gaussian decay time ``sqrt(8 / ((1 - p^2) sum_k a_par_k^2))`` in seconds."""
    a = _a_par(bath)
    if abs(p) > 1:
        raise ParameterError("p", "must lie in [-1, 1]")
    total = float(np.sum(a**2))
    if total == 0.0:
        raise NoFiniteT2Error("bath has no secular coupling")
    if abs(p) == 1:
        raise NoFiniteT2Error("fully polarized bath does not dephase")
    return math.sqrt(8.0 / ((1.0 - p * p) * total))
