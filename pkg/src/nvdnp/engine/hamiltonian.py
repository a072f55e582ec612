"""Rotating-frame Hamiltonian of the effective NV qubit coupled to a 13C bath.

Basis convention: the electron is the most significant tensor factor
(|0> = m_S=0, |1> = m_S=-1), followed by nuclei 0..n-1 with |up> (I_z=+1/2)
at bit value 0. All energies are angular frequencies (rad/s).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import itertools
import math

import numpy as np

from ..constants import CONSTANTS, TWO_PI
from ..errors import ParameterError

__all__ = [
    "DriveParams",
    "HamiltonianSpec",
    "build_segment_hamiltonian",
    "dipolar_pairs",
    "spin_ops",
]


@dataclass(frozen=True)
class DriveParams:
    rabi: float  # rad/s
    phase: float = 0.0  # rad
    detuning: float = 0.0  # rad/s

    def __post_init__(self):
        if not self.rabi >= 0:
            raise ParameterError("rabi", f"must be non-negative, got {self.rabi}")
        object.__setattr__(self, "rabi", float(self.rabi))
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)
        object.__setattr__(self, "detuning", float(self.detuning))


def dipolar_pairs(bath, constants=CONSTANTS):
    """Secular 13C-13C couplings ``(i, j, c_ij)`` for all pairs, rad/s."""
    pos = bath.positions
    pairs = []
    for i, j in itertools.combinations(range(bath.n_spins), 2):
        d = pos[j] - pos[i]
        r = float(np.linalg.norm(d))
        cos_t = d[2] / r
        c = constants.nuclear_dipolar_prefactor * (1.0 - 3.0 * cos_t * cos_t) / r**3
        pairs.append((i, j, float(c)))
    return tuple(pairs)


# 2x2 building blocks
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


PERP_GROUP = 3


def spin_ops(n_factors, site, op):
    """Embed a 2x2 ``op`` at tensor position ``site`` of ``n_factors`` qubits."""
    out = np.ones((1, 1), dtype=complex)
    for k in range(n_factors):
        out = np.kron(out, op if k == site else ID2)
    return out


@dataclass(frozen=True)
class HamiltonianSpec:
    """Immutable description of one piecewise-constant segment.

    H = detuning P1 + (rabi/2)(cos(phase) sx + sin(phase) sy)
        + P1 (x) sum_k (a_par_k Iz_k + a_perp_k Ix_k) + larmor sum_k Iz_k
        + sum_{i<j} c_ij (Iz_i Iz_j - (I+_i I-_j + I-_i I+_j)/4)

    Materialize with :meth:`dense` or apply matrix-free with :meth:`apply`.
    """

    larmor: float
    a_par: tuple
    a_perp: tuple
    rabi: float = 0.0
    phase: float = 0.0
    detuning: float = 0.0
    pairs: tuple = ()

    @property
    def n_spins(self):
        return len(self.a_par)

    @property
    def dim(self):
        return 2 ** (self.n_spins + 1)

    @property
    def is_decoupled_free(self):
        """No drive and no nuclear-nuclear terms: the propagator factorizes."""
        return self.rabi == 0.0 and not any(c != 0.0 for _, _, c in self.pairs)

    # -- matrix-free route --------------------------------------------------

    @cached_property
    def _iz(self):
        """(n, 2**n) table of nuclear I_z eigenvalues per nuclear basis index."""
        n = self.n_spins
        idx = np.arange(2**n)
        return np.array([0.5 - ((idx >> (n - 1 - k)) & 1) for k in range(n)]).reshape(n, 2**n)

    @cached_property
    def _diag_halves(self):
        iz = self._iz
        a_par = np.asarray(self.a_par, dtype=float)
        zeeman = self.larmor * iz.sum(axis=0)
        for i, j, c in self.pairs:
            zeeman = zeeman + c * iz[i] * iz[j]
        d0 = zeeman
        d1 = zeeman + self.detuning + a_par @ iz
        d0.setflags(write=False)
        d1.setflags(write=False)
        return d0, d1

    @cached_property
    def diagonal(self):
        d0, d1 = self._diag_halves
        out = np.concatenate([d0, d1])
        out.setflags(write=False)
        return out

    @cached_property
    def _flipflop_index(self):
        n = self.n_spins
        idx = np.arange(2**n)
        table = []
        for i, j, c in self.pairs:
            if c == 0.0:
                continue
            bi = 1 << (n - 1 - i)
            bj = 1 << (n - 1 - j)
            sel = idx[((idx & bi) > 0) != ((idx & bj) > 0)]
            table.append((sel, sel ^ (bi | bj), -0.25 * c))
        return table

    @cached_property
    def _perp_groups(self):
        """sum_k (a_perp_k / 2) sx_k over blocks of three adjacent spins as real matrices.

        Applying a few small dense blocks with BLAS is much faster than one
        strided update per spin.
        """
        n = self.n_spins
        groups = []
        for k0 in range(0, n, PERP_GROUP):
            g = min(PERP_GROUP, n - k0)
            block = np.zeros((2**g, 2**g))
            for j in range(g):
                a = self.a_perp[k0 + j]
                if a != 0.0:
                    block += 0.5 * a * np.real(spin_ops(g, j, SX))
            if np.any(block):
                groups.append((k0, g, block))
        return groups

    def apply(self, v, out=None, scale=1.0, shift=0.0):
        """Return ``scale * (H - shift) @ v`` without forming H.

        ``v`` has shape (dim,) or (dim, m).
        """
        v = np.ascontiguousarray(v, dtype=complex)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[:, None]
        n = self.n_spins
        half = 2**n
        m = v.shape[1]
        if out is None:
            out = np.empty((self.dim, m), dtype=complex)
        d0, d1 = self._diag_halves
        vv = v.reshape(2, half, m)
        oo = out.reshape(2, half, m)
        np.multiply((scale * (d0 - shift))[:, None], vv[0], out=oo[0])
        np.multiply((scale * (d1 - shift))[:, None], vv[1], out=oo[1])
        scratch = None
        if self.rabi != 0.0:
            h01 = scale * 0.5 * self.rabi * complex(math.cos(self.phase), -math.sin(self.phase))
            scratch = np.empty((half, m), dtype=complex)
            np.multiply(vv[1], h01, out=scratch)
            oo[0] += scratch
            np.multiply(vv[0], h01.conjugate(), out=scratch)
            oo[1] += scratch
        # transverse hyperfine acts in the |1> manifold only; complex data viewed as real pairs
        src = vv[1].view(float)
        dst = oo[1].view(float)
        for k0, g, block in self._perp_groups:
            lead = 2**k0
            rest = 2 ** (n - k0 - g) * 2 * m
            d = dst.reshape(lead, 2**g, rest)
            d += np.matmul(scale * block, src.reshape(lead, 2**g, rest))
        for sel, partner, amp in self._flipflop_index:
            for e in (0, 1):
                oo[e][sel] += (scale * amp) * vv[e][partner]
        return out[:, 0] if squeeze else out

    def spectral_bounds(self):
        """Gershgorin interval (lo, hi) containing the spectrum."""
        d = self.diagonal
        half = 2**self.n_spins
        radius = np.full(self.dim, 0.5 * self.rabi)
        radius[half:] += 0.5 * float(np.sum(self.a_perp))
        for sel, _, amp in self._flipflop_index:
            radius[sel] += abs(amp)
            radius[half + sel] += abs(amp)
        return float(np.min(d - radius)), float(np.max(d + radius))

    # -- dense route (independent construction from Kronecker products) -----

    def dense(self):
        n = self.n_spins
        nf = n + 1
        h = np.zeros((self.dim, self.dim), dtype=complex)
        e_p1 = spin_ops(nf, 0, P1)
        h += self.detuning * e_p1
        h += 0.5 * self.rabi * (
            math.cos(self.phase) * spin_ops(nf, 0, SX) + math.sin(self.phase) * spin_ops(nf, 0, SY)
        )
        for k in range(n):
            iz = 0.5 * spin_ops(nf, k + 1, SZ)
            ix = 0.5 * spin_ops(nf, k + 1, SX)
            h += e_p1 @ (self.a_par[k] * iz + self.a_perp[k] * ix)
            h += self.larmor * iz
        for i, j, c in self.pairs:
            izi = 0.5 * spin_ops(nf, i + 1, SZ)
            izj = 0.5 * spin_ops(nf, j + 1, SZ)
            sp_i = spin_ops(nf, i + 1, np.array([[0, 1], [0, 0]], dtype=complex))
            sp_j = spin_ops(nf, j + 1, np.array([[0, 1], [0, 0]], dtype=complex))
            flip = sp_i @ sp_j.conj().T + sp_i.conj().T @ sp_j
            h += c * (izi @ izj - 0.25 * flip)
        return h


def build_segment_hamiltonian(bath, drive=None, dipolar=False):
    """Hamiltonian spec for one segment; ``drive=None`` means free precession."""
    if drive is None:
        drive = DriveParams(0.0)
    pairs = dipolar_pairs(bath, bath.constants) if dipolar and bath.n_spins > 1 else ()
    return HamiltonianSpec(
        larmor=float(bath.larmor),
        a_par=tuple(float(a) for a in bath.a_par),
        a_perp=tuple(float(a) for a in bath.a_perp),
        rabi=drive.rabi,
        phase=drive.phase,
        detuning=drive.detuning,
        pairs=pairs,
    )
