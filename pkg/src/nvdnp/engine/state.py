"""Joint electron (x) nuclear states for the two backends, and readout."""

from __future__ import annotations

from dataclasses import dataclass, field
import copy
import math

import numpy as np

from ..errors import CapacityError, ParameterError

__all__ = [
    "BACKENDS",
    "EngineOptions",
    "QuantumState",
    "Observables",
    "initial_state",
    "measure",
    "electron_bloch",
    "total_z_magnetization",
    "trajectory_rngs",
    "nuclear_reduced_state",
    "KAPPA_DEFAULT",
]

BACKENDS = ("density_matrix", "trajectory_ensemble")
_ALIASES = {"density": "density_matrix", "trajectory": "trajectory_ensemble"}

# q = 1 - exp(-kappa P t) equals 0.8 at 1 mW x 100 us
KAPPA_DEFAULT = math.log(5.0) / (1e-3 * 100e-6)

DENSITY_MAX_SPINS = 9  # 1024-dimensional joint space
TRAJECTORY_MAX_SPINS = 16


def _backend_name(name):
    name = _ALIASES.get(name, name)
    if name not in BACKENDS:
        raise ParameterError("backend", f"unknown backend {name!r}")
    return name


@dataclass
class EngineOptions:
    backend: str = "density_matrix"
    n_trajectories: int = 1000
    krylov_tolerance: float = 1e-10
    cache_size: int = 32
    dipolar: bool = False  # intra-bath nuclear dipolar coupling
    seed: int = 0
    p_init: float = 0.95
    kappa: float = KAPPA_DEFAULT  # W^-1 s^-1
    n_shots: int | None = None  # binomial readout noise when set
    chunk_size: int = 64  # fixed trajectory partition, independent of workers
    workers: int = 1

    def __post_init__(self):
        self.backend = _backend_name(self.backend)
        if self.n_trajectories < 1:
            raise ParameterError("n_trajectories", "must be >= 1")
        if not 0.0 <= self.p_init <= 1.0:
            raise ParameterError("p_init", "must lie in [0, 1]")
        if self.kappa < 0:
            raise ParameterError("kappa", "must be non-negative")
        if self.krylov_tolerance <= 0:
            raise ParameterError("krylov_tolerance", "must be positive")
        if self.n_shots is not None and self.n_shots < 1:
            raise ParameterError("n_shots", "must be >= 1 when set")
        if self.chunk_size < 1:
            raise ParameterError("chunk_size", "must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers", "must be >= 1")

    def replace(self, **changes):
        new = copy.copy(self)
        for k, v in changes.items():
            if not hasattr(new, k):
                raise ParameterError(k, "unknown engine option")
            setattr(new, k, v)
        new.__post_init__()
        return new


@dataclass
class QuantumState:
    """Electron (x) bath state.

    ``payload`` is a (dim, dim) density matrix or a (dim, M) block whose columns
    are the trajectory state vectors. Trajectory states carry one random
    generator per trajectory so stochastic channels do not depend on how the
    ensemble is partitioned.
    """

    backend: str
    n_spins: int
    payload: np.ndarray
    rngs: list | None = field(default=None, repr=False)
    seed: int = 0
    first_index: int = 0  # global index of the first trajectory in this block

    @property
    def dim(self):
        return 2 ** (self.n_spins + 1)

    @property
    def n_trajectories(self):
        return self.payload.shape[1] if self.backend == "trajectory_ensemble" else 0

    def copy(self):
        rngs = copy.deepcopy(self.rngs) if self.rngs is not None else None
        return QuantumState(
            self.backend, self.n_spins, self.payload.copy(), rngs, self.seed, self.first_index
        )

    def split(self, chunk_size):
        """Partition a trajectory ensemble into contiguous blocks."""
        if self.backend != "trajectory_ensemble":
            return [self]
        blocks = []
        for start in range(0, self.n_trajectories, chunk_size):
            stop = min(start + chunk_size, self.n_trajectories)
            blocks.append(
                QuantumState(
                    self.backend,
                    self.n_spins,
                    self.payload[:, start:stop].copy(),
                    self.rngs[start:stop],
                    self.seed,
                    self.first_index + start,
                )
            )
        return blocks

    @staticmethod
    def join(blocks):
        if len(blocks) == 1:
            return blocks[0]
        head = blocks[0]
        payload = np.concatenate([b.payload for b in blocks], axis=1)
        rngs = [g for b in blocks for g in b.rngs]
        return QuantumState(head.backend, head.n_spins, payload, rngs, head.seed, head.first_index)


@dataclass(frozen=True)
class Observables:
    p0: float
    nuclear_pz: tuple
    p0_stderr: float = 0.0
    n_samples: int = 0


def trajectory_rngs(seed, start, stop):
    """Independent per-trajectory generators keyed by (seed, trajectory index)."""
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(m,))))
        for m in range(start, stop)
    ]


def initial_state(
    bath,
    electron="ground",
    nuclear_polarizations=None,
    backend="density_matrix",
    n_trajectories=1,
    seed=0,
):
    """Product state: electron |0> or I/2, nucleus k in (1 + p_k sz)/2."""
    backend = _backend_name(backend)
    n = bath.n_spins
    if nuclear_polarizations is None:
        nuclear_polarizations = [0.0] * n
    pol = np.asarray(nuclear_polarizations, dtype=float).reshape(-1)
    if len(pol) != n:
        raise ParameterError(
            "nuclear_polarizations", f"length {len(pol)} does not match {n} bath spins"
        )
    if np.any(np.abs(pol) > 1):
        raise ParameterError("nuclear_polarizations", "values must lie in [-1, 1]")
    if electron not in ("ground", "mixed"):
        raise ParameterError("electron", "must be 'ground' or 'mixed'")
    if backend == "density_matrix":
        if n > DENSITY_MAX_SPINS:
            raise CapacityError(f"density backend holds at most {DENSITY_MAX_SPINS} spins, got {n}")
        diag = np.array([1.0, 0.0]) if electron == "ground" else np.array([0.5, 0.5])
        for p in pol:
            diag = np.kron(diag, [(1 + p) / 2, (1 - p) / 2])
        return QuantumState(backend, n, np.diag(diag).astype(complex))
    if n > TRAJECTORY_MAX_SPINS:
        raise CapacityError(f"trajectory backend holds at most {TRAJECTORY_MAX_SPINS} spins")
    if n_trajectories < 1:
        raise ParameterError("n_trajectories", "must be >= 1")
    rngs = trajectory_rngs(seed, 0, n_trajectories)
    draws = np.array([g.random(n + 1) for g in rngs]).reshape(n_trajectories, n + 1)
    bits = (draws[:, :n] >= (1 + pol) / 2).astype(np.int64)
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    index = bits @ weights if n else np.zeros(n_trajectories, dtype=np.int64)
    if electron == "mixed":
        index = index + (draws[:, n] >= 0.5).astype(np.int64) * (1 << n)
    payload = np.zeros((2 ** (n + 1), n_trajectories), dtype=complex)
    payload[index, np.arange(n_trajectories)] = 1.0
    return QuantumState(backend, n, payload, rngs, seed)


def _nuclear_signs(n):
    idx = np.arange(2**n)
    return np.array([1.0 - 2.0 * ((idx >> (n - 1 - k)) & 1) for k in range(n)]).reshape(n, 2**n)


def _populations(state):
    """(2, 2**n, M) array of basis populations (M = 1 for density matrices)."""
    half = 2**state.n_spins
    if state.backend == "density_matrix":
        return np.real(np.diagonal(state.payload)).reshape(2, half, 1)
    return (np.abs(state.payload) ** 2).reshape(2, half, -1)


def measure(state):
    """Electron |0> population and nuclear polarizations 2<Iz_k>; state untouched."""
    pops = _populations(state)
    p0_each = pops[0].sum(axis=0)
    nuc = pops.sum(axis=0)  # (2**n, M)
    signs = _nuclear_signs(state.n_spins)
    pz_each = signs @ nuc  # (n, M)
    m = pops.shape[2]
    if state.backend == "trajectory_ensemble":
        p0 = float(np.sum(p0_each) / m)
        stderr = float(np.std(p0_each, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        pz = tuple(float(np.sum(row) / m) for row in pz_each)
        return Observables(p0, pz, stderr, m)
    p0 = float(min(max(p0_each[0], 0.0), 1.0))
    return Observables(p0, tuple(float(x) for x in pz_each[:, 0]), 0.0, 0)


def electron_bloch(state):
    """Electron Bloch vector (<sx>, <sy>, <sz>) with sz = +1 for |0>."""
    half = 2**state.n_spins
    if state.backend == "density_matrix":
        rho = state.payload.reshape(2, half, 2, half)
        r00 = np.trace(rho[0, :, 0, :]).real
        r11 = np.trace(rho[1, :, 1, :]).real
        r10 = np.trace(rho[1, :, 0, :])
    else:
        psi = state.payload.reshape(2, half, -1)
        m = psi.shape[2]
        r00 = float(np.sum(np.abs(psi[0]) ** 2)) / m
        r11 = float(np.sum(np.abs(psi[1]) ** 2)) / m
        r10 = complex(np.sum(psi[1] * psi[0].conj())) / m
    return 2 * r10.real, 2 * r10.imag, r00 - r11


def total_z_magnetization(state):
    """<S_z + sum_k I_z,k> with S_z = sz/2 of the effective qubit."""
    obs = measure(state)
    sz = 2 * obs.p0 - 1
    return 0.5 * sz + 0.5 * sum(obs.nuclear_pz)


def nuclear_reduced_state(state):
    """Density matrix of the bath with the electron traced out."""
    half = 2**state.n_spins
    if state.backend == "density_matrix":
        rho = state.payload.reshape(2, half, 2, half)
        return rho[0, :, 0, :] + rho[1, :, 1, :]
    psi = state.payload.reshape(2, half, -1)
    m = psi.shape[2]
    return (np.einsum("ik,jk->ij", psi[0], psi[0].conj()) + np.einsum("ik,jk->ij", psi[1], psi[1].conj())) / m
