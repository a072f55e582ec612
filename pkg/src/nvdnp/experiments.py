"""Canned protocols: Rabi decay, Ramsey FID, DNP pumping and laser studies.

Work is split over independent items (drive values, bath seeds, fixed-size
trajectory blocks) and reduced in a fixed order, so results do not depend on
the number of workers.

Sign convention: locking along +y after a pi/2 about x leaves the electron in
the lower dressed state, so the pumped nuclear polarization is negative.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import math
import pickle

import numpy as np

from .analysis import fit_damped_cosine, fit_gaussian_fid
from .engine import (
    DEFAULT_CACHE,
    DriveParams,
    EngineOptions,
    LaserParams,
    Observables,
    QuantumState,
    apply_laser_channel,
    build_segment_hamiltonian,
    initial_state,
    measure,
    propagate,
    rotate_electron,
)
from .engine.hamiltonian import P0, ID2
from .engine.propagation import eigensystem, propagator
from .errors import EnsembleError, FitInputError, ParameterError
from .pulsedsl import RunRecord, execute
from .series import SweepResult, TimeSeries

__all__ = [
    "PROBE_RABI",
    "RABI_GRID",
    "FID_GRID",
    "Variant",
    "parallel_map",
    "rabi_experiment",
    "rabi_frequency_sweep",
    "fid_experiment",
    "dnp_protocol",
    "laser_study",
    "ensemble_average",
    "run_sequence",
    "reset_electron",
    "merge_observables",
    "apply_shot_noise",
]

PROBE_RABI = 2.0 * math.pi * 10e6  # fast probe drive for near-ideal pi/2 pulses
RABI_GRID = np.linspace(0.0, 20e-6, 200)
FID_GRID = np.linspace(0.0, 12e-6, 240)
DNP_LASER = (3e-6, 50e-6)  # duration (s), power (W) of the per-cycle reset


# ----------------------------------------------------------------- plumbing


def _picklable(obj):
    try:
        pickle.dumps(obj)
    except Exception:
        return False
    return True


def parallel_map(func, items, workers=1):
    """``[func(x) for x in items]`` evaluated on up to ``workers`` processes.

    Output order always follows ``items``. Unpicklable callables run inline.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1 or not _picklable(func):
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


def _check_grid(t_grid):
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    if t.size == 0:
        raise ParameterError("t_grid", "must not be empty")
    if np.any(np.diff(t) <= 0):
        raise ParameterError("t_grid", "must be strictly increasing")
    if t[0] < 0:
        raise ParameterError("t_grid", "times must be non-negative")
    return t


def _options(options):
    return options if options is not None else EngineOptions()


def _fresh_state(bath, polarizations, options):
    return initial_state(
        bath,
        "ground",
        polarizations,
        options.backend,
        options.n_trajectories,
        options.seed,
    )


def reset_electron(state):
    """Ideal optical reset: electron to |0>, nuclear state untouched."""
    return apply_laser_channel(state, LaserParams(0.0, 0.0, 1.0, 0.0))


def merge_observables(parts):
    """Combine per-block trajectory readouts in block order."""
    if len(parts) == 1:
        return parts[0]
    m = sum(p.n_samples for p in parts)
    p0 = sum(p.p0 * p.n_samples for p in parts) / m
    n_spins = len(parts[0].nuclear_pz)
    pz = tuple(sum(p.nuclear_pz[k] * p.n_samples for p in parts) / m for k in range(n_spins))
    sumsq = 0.0
    for p in parts:
        var = p.p0_stderr**2 * p.n_samples
        sumsq += (p.n_samples - 1) * var + p.n_samples * p.p0**2
    var = max(sumsq - m * p0**2, 0.0) / (m - 1)
    return Observables(float(p0), pz, float(math.sqrt(var / m)), m)


def apply_shot_noise(observables, n_shots, seed):
    """Binomial readout noise with ``n_shots`` repetitions per readout."""
    rng = np.random.default_rng([seed, 0x5EED])
    out = []
    for obs in observables:
        p0 = rng.binomial(n_shots, obs.p0) / n_shots
        out.append(Observables(float(p0), obs.nuclear_pz, math.sqrt(p0 * (1 - p0) / n_shots), n_shots))
    return out


def _blocks(state, options):
    return state.split(options.chunk_size)


# ------------------------------------------------------------ expectations


def _spectral_traces(h, rho, observables, times, cache=None):
    """``Tr(O exp(-iHt) rho exp(iHt))`` for each O over all ``times``."""
    evals, evecs = eigensystem(h, cache)
    rho_e = evecs.conj().T @ rho @ evecs
    phases = np.exp(-1j * np.outer(evals, times))
    out = []
    for obs in observables:
        obs_e = evecs.conj().T @ obs @ evecs
        weights = obs_e.T * rho_e
        vals = np.einsum("it,it->t", phases, weights @ phases.conj())
        out.append(vals.real)
    return out


def _electron_projector(n_spins):
    return np.kron(P0, np.eye(2**n_spins))


def _p0_each(psi):
    half = psi.shape[0] // 2
    return np.sum(np.abs(psi[:half]) ** 2, axis=0)


# ------------------------------------------------------------------- Rabi


def _rabi_block(args):
    block, bath, drive, times, options = args
    h = build_segment_hamiltonian(bath, drive, options.dipolar)
    sums = np.empty(len(times))
    sumsq = np.empty(len(times))
    prev = 0.0
    for k, t in enumerate(times):
        block = propagate(block, h, t - prev, options.krylov_tolerance)
        prev = t
        p = _p0_each(block.payload)
        sums[k] = p.sum()
        sumsq[k] = (p * p).sum()
    return sums, sumsq, block.n_trajectories


def _reduce_blocks(results, n_points):
    sums = np.zeros(n_points)
    sumsq = np.zeros(n_points)
    m = 0
    for s, sq, mm in results:
        sums += s
        sumsq += sq
        m += mm
    mean = sums / m
    var = np.maximum(sumsq - m * mean**2, 0.0) / max(m - 1, 1)
    return mean, np.sqrt(var / m), m


def rabi_experiment(bath, drive, t_grid=RABI_GRID, options=None, polarizations=None):
    """Electron |0> population after driving for each time in ``t_grid``.

    The density backend evaluates all times from one eigendecomposition; the
    trajectory backend propagates incrementally along the grid.
    """
    options = _options(options)
    t = _check_grid(t_grid)
    if not isinstance(drive, DriveParams):
        drive = DriveParams(float(drive))
    state = _fresh_state(bath, polarizations, options)
    meta = dict(
        experiment="rabi",
        rabi=drive.rabi,
        phase=drive.phase,
        seed=bath.seed,
        backend=options.backend,
        n_spins=bath.n_spins,
    )
    if options.backend == "density_matrix":
        h = build_segment_hamiltonian(bath, drive, options.dipolar)
        (p0,) = _spectral_traces(h, state.payload, [_electron_projector(bath.n_spins)], t, DEFAULT_CACHE)
        return TimeSeries(t, np.clip(p0, 0.0, 1.0), meta)
    jobs = [(b, bath, drive, t, options) for b in _blocks(state, options)]
    mean, stderr, m = _reduce_blocks(parallel_map(_rabi_block, jobs, options.workers), len(t))
    meta["n_trajectories"] = m
    return TimeSeries(t, mean, meta, {"p0_stderr": stderr})


def _rabi_point(args):
    bath, rabi, t, options, phase = args
    ts = rabi_experiment(bath, DriveParams(rabi, phase), t, options.replace(workers=1))
    try:
        fit = fit_damped_cosine(ts)
    except (FitInputError, np.linalg.LinAlgError, ValueError):
        fit = None
    return ts, fit


def rabi_frequency_sweep(bath, rabi_list, t_grid=RABI_GRID, options=None, phase=0.0):
    """Rabi decay time versus drive strength (rad/s), one damped-cosine fit per value."""
    options = _options(options)
    rabi_list = [float(r) for r in rabi_list]
    if not rabi_list:
        raise ParameterError("rabi_list", "must not be empty")
    t = _check_grid(t_grid)
    jobs = [(bath, r, t, options, phase) for r in rabi_list]
    results = parallel_map(_rabi_point, jobs, options.workers)
    return SweepResult(
        rabi_list,
        [fit for _, fit in results],
        [ts for ts, _ in results],
        dict(experiment="rabi_sweep", larmor=bath.larmor, seed=bath.seed),
    )


# -------------------------------------------------------------------- FID


def _probe_hamiltonians(bath, probe_rabi, options):
    hx = build_segment_hamiltonian(bath, DriveParams(probe_rabi, 0.0), options.dipolar)
    hy = build_segment_hamiltonian(bath, DriveParams(probe_rabi, 0.5 * math.pi), options.dipolar)
    return hx, hy


def _half_pi(state, h, probe_rabi, phase, options):
    if probe_rabi is None:
        return rotate_electron(state, 0.5 * math.pi, phase)
    return propagate(state, h, 0.5 * math.pi / probe_rabi, options.krylov_tolerance)


def _fid_block(args):
    block, bath, times, probe_rabi, options = args
    hx = hy = None
    if probe_rabi is not None:
        hx, hy = _probe_hamiltonians(bath, probe_rabi, options)
    h0 = build_segment_hamiltonian(bath, None, options.dipolar)
    block = _half_pi(block, hx, probe_rabi, 0.0, options)
    n = len(times)
    out = np.zeros((4, n))
    prev = 0.0
    for k, t in enumerate(times):
        block = propagate(block, h0, t - prev, options.krylov_tolerance)
        prev = t
        px = _p0_each(_half_pi(block, hx, probe_rabi, 0.0, options).payload)
        py = _p0_each(_half_pi(block, hy, probe_rabi, 0.5 * math.pi, options).payload)
        out[:, k] = px.sum(), (px * px).sum(), py.sum(), (py * py).sum()
    return out, block.n_trajectories


def _probe_observable(bath, h, probe_rabi, phase):
    """P0 in the Heisenberg picture of the closing pi/2 pulse."""
    n = bath.n_spins
    if probe_rabi is None:
        c = s = math.sqrt(0.5)
        r = np.array([[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]])
        u = np.kron(r, np.eye(2**n))
    else:
        u = propagator(h, 0.5 * math.pi / probe_rabi)
    return u.conj().T @ _electron_projector(n) @ u


def fid_experiment(
    bath,
    polarizations=None,
    t_grid=FID_GRID,
    options=None,
    initial=None,
    probe_rabi=PROBE_RABI,
):
    """Ramsey free induction decay in both quadratures.

    Parameters
    ----------
    bath : BathConfig
    polarizations : sequence of float, optional
        Initial nuclear polarizations for a fresh state (default unpolarized).
    t_grid : array_like
        Free evolution times, s.
    options : EngineOptions, optional
    initial : QuantumState, optional
        Start from this state (for example after DNP); the electron is reset
        ideally to |0> first while the nuclear state is kept.
    probe_rabi : float or None
        Drive of the two pi/2 pulses, rad/s; ``None`` applies ideal rotations.

    Returns
    -------
    TimeSeries
        Values are the envelope ``sqrt((1-2 p0_x)^2 + (1-2 p0_y)^2)``; the
        channels ``p0_x`` and ``p0_y`` hold the closing pulse at phase 0 and 90
        degrees.
    """
    options = _options(options)
    t = _check_grid(t_grid)
    if initial is None:
        state = _fresh_state(bath, polarizations, options)
    else:
        if polarizations is not None:
            raise ParameterError("polarizations", "give either polarizations or an initial state")
        state = reset_electron(initial)
    meta = dict(
        experiment="fid",
        seed=bath.seed,
        backend=options.backend,
        n_spins=bath.n_spins,
        probe_rabi=probe_rabi,
    )
    channels = {}
    if state.backend == "density_matrix":
        hx = hy = None
        if probe_rabi is not None:
            hx, hy = _probe_hamiltonians(bath, probe_rabi, options)
        start = _half_pi(state, hx, probe_rabi, 0.0, options)
        h0 = build_segment_hamiltonian(bath, None, options.dipolar)
        ox = _probe_observable(bath, hx, probe_rabi, 0.0)
        oy = _probe_observable(bath, hy, probe_rabi, 0.5 * math.pi)
        px, py = _spectral_traces(h0, start.payload, [ox, oy], t, DEFAULT_CACHE)
    else:
        jobs = [(b, bath, t, probe_rabi, options) for b in _blocks(state, options)]
        results = parallel_map(_fid_block, jobs, options.workers)
        px_res = [(r[0], r[1], m) for r, m in results]
        py_res = [(r[2], r[3], m) for r, m in results]
        px, sx, m = _reduce_blocks(px_res, len(t))
        py, sy, _ = _reduce_blocks(py_res, len(t))
        channels.update(p0_x_stderr=sx, p0_y_stderr=sy)
        meta["n_trajectories"] = m
    px = np.clip(px, 0.0, 1.0)
    py = np.clip(py, 0.0, 1.0)
    envelope = np.hypot(1.0 - 2.0 * px, 1.0 - 2.0 * py)
    channels.update(p0_x=px, p0_y=py)
    return TimeSeries(t, envelope, meta, channels)


# -------------------------------------------------------------------- DNP


def _dnp_block(args):
    block, bath, n_cycles, lock_duration, lock_rabi, laser, probe_rabi, options = args
    hp = None
    if probe_rabi is not None:
        hp = build_segment_hamiltonian(bath, DriveParams(probe_rabi, 0.0), options.dipolar)
    hl = build_segment_hamiltonian(bath, DriveParams(lock_rabi, 0.5 * math.pi), options.dipolar)
    history = []
    for _ in range(n_cycles):
        block = apply_laser_channel(block, laser)
        block = _half_pi(block, hp, probe_rabi, 0.0, options)
        block = propagate(block, hl, lock_duration, options.krylov_tolerance)
        history.append(measure(block))
    return block, history


def dnp_protocol(
    bath,
    n_cycles=10,
    lock_duration=2e-6,
    lock_rabi=None,
    laser=None,
    options=None,
    state=None,
    probe_rabi=PROBE_RABI,
):
    """Repeated optical reset, pi/2 about x and spin lock along y.

    Parameters
    ----------
    bath : BathConfig
    n_cycles : int
    lock_duration : float
        Spin-lock time per cycle, s.
    lock_rabi : float, optional
        Lock drive, rad/s; defaults to the nuclear Larmor frequency.
    laser : LaserParams, optional
        Per-cycle optical pulse; defaults to 3 us at 50 uW with the reset
        fidelity and depolarization coefficient from ``options``.
    options : EngineOptions, optional
    state : QuantumState, optional
        Starting state (default: electron |0>, unpolarized bath).
    probe_rabi : float or None
        Drive of the pi/2 pulse; ``None`` for an ideal rotation.

    Returns
    -------
    state : QuantumState
    history : list of tuple
        Nuclear polarizations after each cycle.
    """
    options = _options(options)
    if n_cycles < 0:
        raise ParameterError("n_cycles", "must be non-negative")
    if lock_duration < 0:
        raise ParameterError("lock_duration", "must be non-negative")
    if lock_rabi is None:
        lock_rabi = bath.larmor
    if laser is None:
        laser = LaserParams(*DNP_LASER, options.p_init, options.kappa)
    if state is None:
        state = _fresh_state(bath, None, options)
    if n_cycles == 0:
        return state, []
    args = (bath, n_cycles, lock_duration, lock_rabi, laser, probe_rabi, options)
    if state.backend == "density_matrix":
        state, obs = _dnp_block((state, *args))
        return state, [o.nuclear_pz for o in obs]
    results = parallel_map(_dnp_block, [(b, *args) for b in _blocks(state, options)], options.workers)
    state = QuantumState.join([r[0] for r in results])
    history = [
        merge_observables([r[1][c] for r in results]).nuclear_pz for c in range(n_cycles)
    ]
    return state, history


# ------------------------------------------------------------ laser study


@dataclass(frozen=True)
class Variant:
    """Operation inserted between DNP and the FID probe.

    kind is ``none``, ``extra_laser``, ``extra_wait`` or ``no_dnp`` (a
    reference FID on the unpolarized bath). ``dipolar`` overrides the
    intra-bath coupling flag during an extra wait.
    """

    kind: str = "none"
    duration: float = 0.0
    power: float = 0.0
    dipolar: bool | None = None

    def __post_init__(self):
        if self.kind not in ("none", "extra_laser", "extra_wait", "no_dnp"):
            raise ParameterError("variant", f"unknown kind {self.kind!r}")
        if self.duration < 0 or self.power < 0:
            raise ParameterError("variant", "duration and power must be non-negative")

    @property
    def label(self):
        if self.kind == "extra_laser":
            return f"extra_laser({self.duration * 1e6:g}us;{self.power * 1e6:g}uW)"
        if self.kind == "extra_wait":
            return f"extra_wait({self.duration * 1e6:g}us)"
        return self.kind


def _apply_variant(state, variant, bath, options):
    if variant.kind == "extra_laser":
        laser = LaserParams(variant.duration, variant.power, options.p_init, options.kappa)
        return apply_laser_channel(state, laser)
    if variant.kind == "extra_wait":
        dipolar = options.dipolar if variant.dipolar is None else variant.dipolar
        h = build_segment_hamiltonian(bath, None, dipolar)
        # the wait follows an optical reset, as in the shipped preset
        return propagate(reset_electron(state), h, variant.duration, options.krylov_tolerance)
    return state


def laser_study(
    bath,
    variants=(Variant("none"),),
    n_cycles=10,
    lock_duration=2e-6,
    lock_rabi=None,
    laser=None,
    t_grid=FID_GRID,
    options=None,
    n_components=1,
    probe_rabi=PROBE_RABI,
):
    """T2* after DNP followed by each variant operation.

    The DNP state is computed once and shared by all variants.
    """
    options = _options(options)
    variants = [v if isinstance(v, Variant) else Variant(v) for v in variants]
    needs_dnp = any(v.kind != "no_dnp" for v in variants)
    pumped = None
    if needs_dnp:
        pumped, _ = dnp_protocol(
            bath, n_cycles, lock_duration, lock_rabi, laser, options, probe_rabi=probe_rabi
        )
    fits, raw = [], []
    for variant in variants:
        if variant.kind == "no_dnp":
            ts = fid_experiment(bath, None, t_grid, options, probe_rabi=probe_rabi)
        else:
            state = _apply_variant(pumped.copy(), variant, bath, options)
            ts = fid_experiment(bath, None, t_grid, options, initial=state, probe_rabi=probe_rabi)
        ts.meta["variant"] = variant.label
        try:
            fit = fit_gaussian_fid(ts, n_components)
        except (FitInputError, np.linalg.LinAlgError, ValueError):
            fit = None
        fits.append(fit)
        raw.append(ts)
    return SweepResult(
        [v.label for v in variants],
        fits,
        raw,
        dict(experiment="laser_study", n_cycles=n_cycles, lock_duration=lock_duration),
    )


# ---------------------------------------------------------------- ensemble


def _guarded(args):
    experiment, seed = args
    try:
        return True, experiment(seed)
    except Exception as exc:  # reported per seed
        return False, f"{type(exc).__name__}: {exc}"


def ensemble_average(experiment, seeds, reducer=None, workers=1):
    """Point-wise reduction of ``experiment(seed)`` over bath seeds.

    Parameters
    ----------
    experiment : callable
        Maps a seed to a :class:`TimeSeries`; must be picklable to run on
        several processes.
    seeds : sequence of int
    reducer : callable, optional
        Applied as ``reducer(stack, axis=0)``; defaults to ``np.mean``.
    workers : int

    Raises
    ------
    EnsembleError
        Listing every failing seed.
    """
    seeds = list(seeds)
    if not seeds:
        raise ParameterError("seeds", "must not be empty")
    reducer = reducer or np.mean
    results = parallel_map(_guarded, [(experiment, s) for s in seeds], workers)
    failures = {s: r for s, (ok, r) in zip(seeds, results) if not ok}
    if failures:
        raise EnsembleError(failures)
    series = [r for _, r in results]
    t = series[0].abscissa
    for s, ts in zip(seeds, series):
        if len(ts.abscissa) != len(t) or np.any(ts.abscissa != t):
            raise EnsembleError({s: "abscissa differs from the first member"})
    stack = np.vstack([ts.values for ts in series])
    values = np.asarray(reducer(stack, axis=0), dtype=float)
    return TimeSeries(t.copy(), values, dict(experiment="ensemble", seeds=seeds, members=len(seeds)))


# ------------------------------------------------------------ sequences


def _execute_block(args):
    seq, bindings, bath, block, options = args
    return execute(seq, bindings, bath, block, options)


def run_sequence(seq, bindings, bath, state=None, options=None):
    """:func:`execute` with trajectory blocks spread over ``options.workers``."""
    options = _options(options)
    if state is None:
        state = _fresh_state(bath, None, options)
    quiet = options.replace(n_shots=None)
    if state.backend == "density_matrix":
        state, record = execute(seq, bindings, bath, state, quiet)
    else:
        jobs = [(seq, bindings, bath, b, quiet) for b in _blocks(state, options)]
        results = parallel_map(_execute_block, jobs, options.workers)
        state = QuantumState.join([s for s, _ in results])
        records = [r for _, r in results]
        readouts = []
        for i, (label, _) in enumerate(records[0].readouts):
            readouts.append((label, merge_observables([r.readouts[i][1] for r in records])))
        record = RunRecord(readouts, measure(state).nuclear_pz, records[0].total_time)
    if options.n_shots:
        noisy = apply_shot_noise([o for _, o in record.readouts], options.n_shots, options.seed)
        record.readouts = [(label, o) for (label, _), o in zip(record.readouts, noisy)]
    return state, record
