"""Execution of parsed pulse programs on the engine."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ..engine import (
    DEFAULT_CACHE,
    DriveParams,
    EngineOptions,
    LaserParams,
    Observables,
    PropagatorCache,
    apply_laser_channel,
    build_segment_hamiltonian,
    measure,
    propagate,
    rotate_electron,
)
from ..engine.state import DENSITY_MAX_SPINS, TRAJECTORY_MAX_SPINS
from ..errors import CapacityError, ParameterError, UnboundVariableError
from .ast import Laser, Mw, Readout, Repeat, Variable, Wait
from .parser import parse_quantity

__all__ = ["RunRecord", "execute", "resolve_bindings", "duration_of"]


@dataclass
class RunRecord:
    readouts: list = field(default_factory=list)  # (label, Observables)
    final_nuclear_pz: tuple = ()
    total_time: float = 0.0  # s

    @property
    def final_state_summary(self):
        return self.final_nuclear_pz

    @property
    def p0(self):
        return np.array([obs.p0 for _, obs in self.readouts])


def resolve_bindings(bindings):
    """Map names to seconds; strings such as ``"3us"`` are parsed with time units."""
    out = {}
    for name, value in (bindings or {}).items():
        if isinstance(value, str):
            value = parse_quantity(value.strip(), "dur").si
        value = float(value)
        if not value >= 0:
            raise ParameterError(name, f"bound duration must be non-negative, got {value}")
        out[name] = value
    return out


def duration_of(value, bindings):
    if isinstance(value, Variable):
        if value.name not in bindings:
            raise UnboundVariableError(value.name)
        return bindings[value.name]
    return value.si


def _check_variables(ops, bindings):
    for op in ops:
        if isinstance(op, Repeat):
            _check_variables(op.body, bindings)
        elif isinstance(getattr(op, "dur", None), Variable) and op.dur.name not in bindings:
            raise UnboundVariableError(op.dur.name)


class _Runner:
    def __init__(self, bath, options, bindings, cache):
        self.bath = bath
        self.options = options
        self.bindings = bindings
        self.cache = cache
        self.hamiltonians = {}
        self.durations = []
        self.readouts = []
        self.shot_rng = (
            np.random.default_rng([options.seed, 0x5EED]) if options.n_shots else None
        )

    def hamiltonian(self, drive):
        key = None if drive is None else (drive.rabi, drive.phase)
        h = self.hamiltonians.get(key)
        if h is None:
            h = build_segment_hamiltonian(self.bath, drive, self.options.dipolar)
            self.hamiltonians[key] = h
        return h

    def evolve(self, state, drive, duration):
        self.durations.append(duration)
        return propagate(
            state, self.hamiltonian(drive), duration, self.options.krylov_tolerance, self.cache
        )

    def run(self, ops, state):
        for op in ops:
            if isinstance(op, Repeat):
                for _ in range(op.count):
                    state = self.run(op.body, state)
            elif isinstance(op, Wait):
                state = self.evolve(state, None, duration_of(op.dur, self.bindings))
            elif isinstance(op, Laser):
                duration = duration_of(op.dur, self.bindings)
                power = op.power.si if op.power is not None else 0.0
                laser = LaserParams(duration, power, self.options.p_init, self.options.kappa)
                state = apply_laser_channel(state, laser)
                self.durations.append(duration)
            elif isinstance(op, Mw):
                state = self.pulse(op, state)
            elif isinstance(op, Readout):
                self.readouts.append((op.label, self.readout(state)))
        return state

    def pulse(self, op, state):
        phase = op.phase.si if op.phase is not None else 0.0
        if op.ideal:
            return rotate_electron(state, op.angle.si, phase)
        drive = DriveParams(op.rabi.si, phase)
        if op.angle is not None:
            if drive.rabi == 0.0:
                raise ParameterError("rabi", f"angle form needs rabi > 0 (line {op.span[0]})")
            duration = op.angle.si / drive.rabi
        else:
            duration = duration_of(op.dur, self.bindings)
        return self.evolve(state, drive, duration)

    def readout(self, state):
        obs = measure(state)
        if self.shot_rng is None:
            return obs
        n = self.options.n_shots
        p0 = self.shot_rng.binomial(n, obs.p0) / n
        stderr = math.sqrt(max(p0 * (1 - p0), 0.0) / n)
        return Observables(float(p0), obs.nuclear_pz, stderr, n)


def execute(seq, bindings, bath, state, options=None, cache=None):
    """Run ``seq`` on ``state``; returns the final state and a :class:`RunRecord`.

    Parameters
    ----------
    seq : Sequence
    bindings : dict
        Values for ``$name`` durations, in seconds or as strings with units.
    bath : BathConfig
    state : QuantumState
    options : EngineOptions, optional
    cache : PropagatorCache, optional
        Defaults to the shared module cache.
    """
    options = options or EngineOptions()
    if not isinstance(cache, PropagatorCache):
        cache = DEFAULT_CACHE
    limit = DENSITY_MAX_SPINS if state.backend == "density_matrix" else TRAJECTORY_MAX_SPINS
    if bath.n_spins > limit:
        raise CapacityError(f"{state.backend} backend holds at most {limit} spins, got {bath.n_spins}")
    if state.n_spins != bath.n_spins:
        raise ParameterError("state", "spin count differs from the bath")
    bound = resolve_bindings(bindings)
    _check_variables(seq.ops, bound)
    runner = _Runner(bath, options, bound, cache)
    state = runner.run(seq.ops, state)
    record = RunRecord(
        runner.readouts, measure(state).nuclear_pz, math.fsum(runner.durations)
    )
    return state, record
