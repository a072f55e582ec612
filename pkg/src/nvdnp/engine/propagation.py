"""Unitary propagation of states under piecewise-constant segments."""

from __future__ import annotations

from collections import OrderedDict
import math

import numpy as np
from scipy.special import jv

from ..errors import NumericalError, ParameterError
from .hamiltonian import HamiltonianSpec
from .state import QuantumState

__all__ = [
    "propagate",
    "propagator",
    "eigensystem",
    "chebyshev_expm_action",
    "factorized_free_action",
    "rotate_electron",
    "PropagatorCache",
    "DEFAULT_CACHE",
]


class PropagatorCache:
    """Small LRU store for eigensystems and dense propagators."""

    def __init__(self, size=32):
        self.size = size
        self._eig = OrderedDict()
        self._unitary = OrderedDict()
        self.hits = 0
        self.misses = 0

    def _get(self, store, key):
        if key in store:
            store.move_to_end(key)
            self.hits += 1
            return store[key]
        self.misses += 1
        return None

    def _put(self, store, key, value, limit):
        store[key] = value
        while len(store) > max(limit, 0):
            store.popitem(last=False)

    def eig(self, h):
        hit = self._get(self._eig, h)
        if hit is None:
            evals, evecs = np.linalg.eigh(h.dense())
            evals.setflags(write=False)
            evecs.setflags(write=False)
            hit = (evals, evecs)
            self._put(self._eig, h, hit, max(4, self.size // 4))
        return hit

    def unitary(self, h, duration):
        key = (h, float(duration))
        hit = self._get(self._unitary, key)
        if hit is None:
            evals, evecs = self.eig(h)
            hit = (evecs * np.exp(-1j * evals * duration)) @ evecs.conj().T
            hit.setflags(write=False)
            self._put(self._unitary, key, hit, self.size)
        return hit

    def clear(self):
        self._eig.clear()
        self._unitary.clear()


DEFAULT_CACHE = PropagatorCache()

CHEBYSHEV_BLOCK = 2**17  # complex entries per column block


def eigensystem(h, cache=None):
    return (cache or DEFAULT_CACHE).eig(h)


def propagator(h, duration, cache=None):
    """Dense ``exp(-i H duration)`` from the Hermitian eigendecomposition."""
    return (cache or DEFAULT_CACHE).unitary(h, duration)


def chebyshev_expm_action(h, v, duration, tol=1e-10, max_terms=2_000_000):
    """``exp(-i H t) v`` by a Chebyshev expansion using only ``h.apply``.

    The truncation keeps terms until the tail of Bessel coefficients is below
    ``tol``; the result is checked for norm preservation.
    """
    lo, hi = h.spectral_bounds()
    center = 0.5 * (hi + lo)
    width = 0.5 * (hi - lo)
    phase = np.exp(-1j * center * duration)
    if width * duration == 0.0:
        return phase * v
    x = width * duration
    n_terms = int(x + 10.0 * math.log10(1.0 / tol) + 20.0 * x ** (1 / 3) + 20)
    if n_terms > max_terms:
        raise NumericalError(
            "Chebyshev expansion too long", width=width, duration=duration, terms=n_terms
        )
    coeffs = jv(np.arange(n_terms + 1), x)
    tail = np.abs(coeffs)
    # first index beyond which every remaining |J_k| sums below tol/2
    cum_tail = np.cumsum(tail[::-1])[::-1]
    below = np.flatnonzero((cum_tail * 2.0 < tol) & (np.arange(n_terms + 1) > x))
    if below.size == 0:
        raise NumericalError(
            "Chebyshev tolerance not reached", tol=tol, terms=n_terms, tail=float(cum_tail[-1])
        )
    k_max = int(below[0])

    squeeze = v.ndim == 1
    vin = np.ascontiguousarray(v[:, None] if squeeze else v, dtype=complex)
    result = np.empty_like(vin)
    # column blocks small enough to stay in cache
    step = max(1, CHEBYSHEV_BLOCK // vin.shape[0])
    for start in range(0, vin.shape[1], step):
        cols = slice(start, start + step)
        result[:, cols] = _chebyshev_block(h, vin[:, cols], coeffs, k_max, center, width)
    result *= phase
    n_in = np.linalg.norm(vin, axis=0)
    n_out = np.linalg.norm(result, axis=0)
    drift = float(np.max(np.abs(n_out - n_in))) if n_in.size else 0.0
    if not np.isfinite(drift) or drift > 1e3 * tol:
        raise NumericalError(
            "Chebyshev propagation lost unitarity", drift=drift, terms=k_max, width=width
        )
    return result[:, 0] if squeeze else result


def _chebyshev_block(h, v, coeffs, k_max, center, width):
    """Sum of ``2 (-i)^k J_k(x) T_k(S) v`` with S = (H - center) / width."""
    t_prev = np.array(v)
    t_cur = h.apply(t_prev, scale=1.0 / width, shift=center)
    result = coeffs[0] * t_prev
    scratch = np.empty_like(t_prev)
    np.multiply(t_cur, 2.0 * (-1j) * coeffs[1], out=scratch)
    result += scratch
    buf = np.empty_like(t_prev)
    ik = -1j
    for k in range(2, k_max):
        ik *= -1j
        # T_{k} = 2 S T_{k-1} - T_{k-2}
        h.apply(t_cur, out=buf, scale=2.0 / width, shift=center)
        buf -= t_prev
        t_prev, t_cur, buf = t_cur, buf, t_prev
        np.multiply(t_cur, 2.0 * ik * coeffs[k], out=scratch)
        result += scratch
    return result


def _nuclear_unitary(omega_z, omega_x, duration):
    """exp(-i t (omega_z Iz + omega_x Ix)) as a 2x2 matrix."""
    w = math.hypot(omega_z, omega_x)
    if w == 0.0:
        return np.eye(2, dtype=complex)
    c = math.cos(0.5 * w * duration)
    s = math.sin(0.5 * w * duration)
    nz, nx = omega_z / w, omega_x / w
    return np.array([[c - 1j * s * nz, -1j * s * nx], [-1j * s * nx, c + 1j * s * nz]])


def factorized_free_action(h, v, duration):
    """Exact ``exp(-i H t) v`` for drive-free segments without nuclear-nuclear terms.

    H is block diagonal in the electron and, inside each block, a sum of
    single-nucleus terms, so the propagator is a product of 2x2 factors.
    """
    if not h.is_decoupled_free:
        raise ParameterError("h", "factorized action needs a drive-free, decoupled segment")
    n = h.n_spins
    half = 2**n
    squeeze = v.ndim == 1
    vv = (v[:, None] if squeeze else v).reshape(2, half, -1)
    m = vv.shape[2]
    out = np.empty((2, half, m), dtype=complex)
    # electron |0>: pure nuclear Zeeman phases
    iz_sum = h._iz.sum(axis=0) if n else np.zeros(1)
    out[0] = np.exp(-1j * h.larmor * duration * iz_sum)[:, None] * vv[0]
    block = vv[1]
    for k in range(n):
        u = _nuclear_unitary(h.larmor + h.a_par[k], h.a_perp[k], duration)
        t = block.reshape(2**k, 2, 2 ** (n - 1 - k), m)
        block = np.einsum("ab,ibjm->iajm", u, t).reshape(half, m)
    out[1] = np.exp(-1j * h.detuning * duration) * block
    out = out.reshape(2 * half, m)
    return out[:, 0] if squeeze else out


def propagate(state, h, duration, tol=1e-10, cache=None):
    """Evolve ``state`` for ``duration`` under the segment Hamiltonian ``h``."""
    if not isinstance(h, HamiltonianSpec):
        raise ParameterError("h", "expected a HamiltonianSpec")
    if duration < 0:
        raise ParameterError("duration", f"must be non-negative, got {duration}")
    if h.n_spins != state.n_spins:
        raise ParameterError(
            "h", f"dimension mismatch: Hamiltonian for {h.n_spins} spins, state has {state.n_spins}"
        )
    if duration == 0:
        return state.copy()
    if state.backend == "density_matrix":
        u = propagator(h, duration, cache)
        rho = u @ state.payload @ u.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        return QuantumState(state.backend, state.n_spins, rho)
    if h.is_decoupled_free:
        psi = factorized_free_action(h, state.payload, duration)
    else:
        psi = chebyshev_expm_action(h, state.payload, duration, tol)
    return QuantumState(
        state.backend, state.n_spins, psi, state.rngs, state.seed, state.first_index
    )


def rotate_electron(state, angle, phase):
    """Apply the ideal rotation ``exp(-i angle/2 (cos(phase) sx + sin(phase) sy))``."""
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    r = np.array(
        [[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]], dtype=complex
    )
    half = 2**state.n_spins
    if state.backend == "density_matrix":
        rho = state.payload.reshape(2, half, 2, half)
        rho = np.einsum("ab,bjcl,dc->ajdl", r, rho, r.conj())
        return QuantumState(state.backend, state.n_spins, rho.reshape(2 * half, 2 * half))
    psi = state.payload.reshape(2, half, -1)
    psi = np.einsum("ab,bjm->ajm", r, psi).reshape(2 * half, -1)
    return QuantumState(
        state.backend, state.n_spins, psi, state.rngs, state.seed, state.first_index
    )
