"""Nonlinear least-squares fits of Rabi and Ramsey decay curves.

Both models are fitted in a dimensionless time ``tau = t / window``. Starting
points come from a discrete frequency scan plus a grid over the nonlinear
parameters on which the linear ones (offset, cosine and sine amplitudes) are
solved exactly; the best starts are then refined by Levenberg-Marquardt
(MINPACK via ``scipy.optimize.least_squares``) with a central-difference
Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import least_squares

from ..errors import FitInputError, ParameterError
from ..series import TimeSeries

__all__ = [
    "FitResult",
    "fit_damped_cosine",
    "fit_gaussian_fid",
    "damped_cosine",
    "gaussian_fid",
    "frequency_scan",
    "numeric_jacobian",
]

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-8
TWO_PI = 2.0 * math.pi


@dataclass
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    residual_rms: float
    converged: bool
    n_iterations: int
    no_decay: bool = False
    window: float = float("nan")
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def decay_time(self):
        return self.params["decay_time"]

    @property
    def decay_uncertainty(self):
        return self.uncertainties.get("decay_time", float("nan"))


def damped_cosine(t, offset, amplitude, frequency, phase, decay_time):
    """``offset + amplitude cos(frequency t + phase) exp(-t / decay_time)``; frequency in rad/s."""
    t = np.asarray(t, dtype=float)
    return offset + amplitude * np.cos(frequency * t + phase) * np.exp(-t / decay_time)


def gaussian_fid(t, offset, decay_time, amplitudes, frequencies, phases):
    """``offset + exp(-(t/T)^2) sum_j b_j cos(w_j t + phi_j)``; frequencies in rad/s."""
    t = np.asarray(t, dtype=float)
    env = np.exp(-((t / decay_time) ** 2))
    osc = sum(b * np.cos(w * t + p) for b, w, p in zip(amplitudes, frequencies, phases))
    return offset + env * osc


def numeric_jacobian(fun, x, step=1e-6):
    """Central-difference Jacobian of a vector function at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h)
    return jac


def _arrays(ts, minimum):
    if isinstance(ts, TimeSeries):
        t, y = ts.abscissa, ts.values
    else:
        t, y = (np.asarray(a, dtype=float).reshape(-1) for a in ts)
    if len(t) != len(y):
        raise FitInputError("abscissa and values differ in length")
    if len(t) < minimum:
        raise FitInputError(f"need at least {minimum} points, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitInputError("non-finite samples")
    return t, y


def frequency_scan(tau, y, oversample=1, center=None):
    """Magnitude spectrum on frequencies k/2 cycles per unit ``tau`` (k = 0..N).

    ``center`` is subtracted first (default: the mean).
    """
    n = len(tau)
    span = tau[-1] - tau[0] if n > 1 else 1.0
    step = 0.5 / oversample
    nu = np.arange(0, 0.5 * (n - 1) / span + step, step)
    phase = np.exp(-2j * np.pi * np.outer(nu, tau))
    spec = phase @ (y - (np.mean(y) if center is None else center))
    return nu, np.abs(spec)


def _peaks(nu, mag, count, include_dc):
    idx = []
    for k in range(len(mag)):
        left = mag[k - 1] if k > 0 else -np.inf
        right = mag[k + 1] if k + 1 < len(mag) else -np.inf
        if mag[k] >= left and mag[k] >= right:
            if k == 0 and not include_dc:
                continue
            idx.append(k)
    idx.sort(key=lambda k: -mag[k])
    return [float(nu[k]) for k in idx[:count]]


class _Problem:
    """Residual vector over the free internal parameters."""

    def __init__(self, model, tau, y, free_mask, full0):
        self.model = model
        self.tau = tau
        self.y = y
        self.free = np.asarray(free_mask, dtype=bool)
        self.full0 = np.asarray(full0, dtype=float)

    def expand(self, x):
        full = self.full0.copy()
        full[self.free] = x
        return full

    def residuals(self, x):
        return self.model(self.tau, self.expand(x)) - self.y

    def jacobian(self, x):
        return numeric_jacobian(self.residuals, x)

    def gradient(self, x):
        """Gradient of 0.5 |r|^2 from the internal Jacobian."""
        return self.jacobian(x).T @ self.residuals(x)

    def cost(self, x):
        r = self.residuals(x)
        return 0.5 * float(r @ r)


def _lm(problem, x0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = least_squares(
            problem.residuals,
            x0,
            jac=problem.jacobian,
            method="lm",
            xtol=STEP_TOLERANCE,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=MAX_ITERATIONS,
        )
    return res


def _covariance(problem, x):
    jac = problem.jacobian(x)
    r = problem.residuals(x)
    dof = max(len(r) - len(x), 1)
    s2 = float(r @ r) / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((len(x), len(x)), np.nan)
    return cov


def _linear_solve(basis, y):
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = basis @ coef - y
    return coef, float(resid @ resid)


def _wrap(phase):
    out = float(np.mod(phase, TWO_PI))
    return 0.0 if out >= TWO_PI - 1e-12 else out


# ----------------------------------------------------------------- damped cosine


def _damped_internal(tau, p):
    a, b, nu, phi, gamma = p
    return a + b * np.cos(TWO_PI * nu * tau + phi) * np.exp(-gamma * tau)


def _log_envelope_rate(tau, y, nu):
    """Decay rate from a straight-line fit to log(half peak-to-peak) per period."""
    if nu <= 0:
        return 1.0
    period = 1.0 / nu
    edges = np.arange(tau[0], tau[-1] + period, period)
    centers, amps = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (tau >= lo) & (tau < hi)
        if np.count_nonzero(sel) >= 3:
            amps.append(0.5 * (y[sel].max() - y[sel].min()))
            centers.append(0.5 * (lo + hi))
    amps = np.array(amps)
    if len(amps) < 2 or np.any(amps <= 0):
        return 1.0
    slope = np.polyfit(centers, np.log(amps), 1)[0]
    return float(max(-slope, 0.0))


def _damped_starts(tau, y):
    a0 = float(np.mean(y))
    b0 = 0.5 * float(np.max(y) - np.min(y))
    nu_grid, mag = frequency_scan(tau, y)
    peaks = _peaks(nu_grid, mag, 3, include_dc=False) or [1.0]
    nu0 = peaks[0]
    gamma0 = _log_envelope_rate(tau, y, nu0)
    starts = [np.array([a0, b0, nu0, 0.0, gamma0])]
    gammas = np.concatenate([[0.0, gamma0], np.geomspace(0.05, 50.0, 24)])
    best = []
    for nu_peak in peaks:
        for nu in nu_peak + np.linspace(-0.5, 0.5, 9):
            if nu <= 0:
                continue
            for gamma in gammas:
                env = np.exp(-gamma * tau)
                arg = TWO_PI * nu * tau
                basis = np.column_stack([np.ones_like(tau), np.cos(arg) * env, np.sin(arg) * env])
                coef, cost = _linear_solve(basis, y)
                best.append((cost, nu, gamma, coef))
    best.sort(key=lambda item: item[0])
    for cost, nu, gamma, (a, c, s) in best[:3]:
        b = math.hypot(c, s)
        phi = math.atan2(-s, c)
        starts.append(np.array([a, b, nu, phi, gamma]))
    return starts


def fit_damped_cosine(ts, initial=None):
    """Fit ``a + b cos(2 pi f t + phi) exp(-t / T)`` to a Rabi trace.

    Parameters
    ----------
    ts : TimeSeries or (t, y) pair
        At least 8 samples.
    initial : dict, optional
        Starting values with keys among ``offset, amplitude, frequency (rad/s),
        phase, decay_time``; tried in addition to the automatic starts.

    Returns
    -------
    FitResult
        ``params`` hold ``offset, amplitude, frequency, phase, decay_time``.
        Non-convergence is reported through ``converged`` rather than raised.
    """
    t, y = _arrays(ts, 8)
    window = float(np.max(np.abs(t))) or 1.0
    tau = t / window
    if np.ptp(y) <= 1e-12 * max(1.0, abs(float(np.mean(y)))):
        return _constant_result("damped_cosine", y, window, dict(frequency=0.0, phase=0.0))
    starts = _damped_starts(tau, y)
    if initial:
        base = starts[0].copy()
        keys = ("offset", "amplitude", "frequency", "phase", "decay_time")
        conv = {
            "offset": lambda v: v,
            "amplitude": lambda v: v,
            "frequency": lambda v: v * window / TWO_PI,
            "phase": lambda v: v,
            "decay_time": lambda v: window / v,
        }
        for i, key in enumerate(keys):
            if key in initial:
                base[i] = conv[key](initial[key])
        starts.insert(0, base)
    problem = _Problem(_damped_internal, tau, y, [True] * 5, np.zeros(5))
    best = None
    for x0 in starts:
        res = _lm(problem, x0)
        if best is None or res.cost < best.cost:
            best = res
    x = best.x.copy()
    if x[1] < 0:
        x[1] = -x[1]
        x[3] += math.pi
    if x[2] < 0:
        x[2] = -x[2]
        x[3] = -x[3]
    cov = _covariance(problem, x)
    sig = np.sqrt(np.abs(np.diag(cov)))
    a, b, nu, phi, gamma = x
    decay = window / gamma if gamma > 0 else math.inf
    decay_sig = window * sig[4] / gamma**2 if gamma > 0 else math.nan
    params = dict(
        offset=float(a),
        amplitude=float(b),
        frequency=float(TWO_PI * nu / window),
        phase=_wrap(phi),
        decay_time=float(decay),
    )
    unc = dict(
        offset=float(sig[0]),
        amplitude=float(sig[1]),
        frequency=float(TWO_PI * sig[2] / window),
        phase=float(sig[3]),
        decay_time=float(decay_sig),
    )
    rms = math.sqrt(2.0 * best.cost / len(y))
    converged = bool(best.status > 0 and gamma > 0 and np.all(np.isfinite(x)))
    return FitResult(
        "damped_cosine",
        params,
        unc,
        rms,
        converged,
        int(best.njev or best.nfev),
        no_decay=bool(not gamma > 0 or decay > window),
        window=window,
    )


def _constant_result(model, y, window, extra_params):
    params = dict(offset=float(np.mean(y)), amplitude=0.0, decay_time=math.inf, **extra_params)
    if model == "gaussian_fid":
        params = dict(
            offset=float(np.mean(y)),
            decay_time=math.inf,
            amplitudes=[0.0],
            frequencies=[0.0],
            phases=[0.0],
        )
    unc = {k: math.nan for k in params}
    return FitResult(model, params, unc, 0.0, False, 0, no_decay=True, window=window)


# ------------------------------------------------------------------ gaussian FID


class _GaussianLayout:
    """Internal vector [a, g, (b_j, nu_j, phi_j) ...]; DC components keep nu = phi = 0."""

    def __init__(self, dc_flags):
        self.dc = list(dc_flags)
        self.n = len(self.dc)

    def free_mask(self):
        mask = [True, True]
        for dc in self.dc:
            mask += [True, not dc, not dc]
        return mask

    def __call__(self, tau, p):
        a, g = p[0], p[1]
        env = np.exp(-((g * tau) ** 2))
        osc = 0.0
        for j in range(self.n):
            b, nu, phi = p[2 + 3 * j : 5 + 3 * j]
            osc = osc + b * np.cos(TWO_PI * nu * tau + phi)
        return a + env * osc


def _envelope_rate(tau, y, a0):
    """Gaussian rate from regressing log|y - a0| against tau^2 over the early part."""
    dev = np.abs(y - a0)
    if dev[0] <= 0:
        return 1.0
    sel = (dev > 0.2 * dev[0]) & (tau <= tau[np.argmax(dev < 0.2 * dev[0])] if np.any(dev < 0.2 * dev[0]) else True)
    if np.count_nonzero(sel) < 3:
        return 1.0
    slope = np.polyfit(tau[sel] ** 2, np.log(dev[sel] / dev[0]), 1)[0]
    return float(math.sqrt(max(-slope, 1e-6)))


def _gaussian_starts(tau, y, n_components):
    a_mean = float(np.mean(y))
    tail = max(3, len(y) // 5)
    a_tail = float(np.mean(y[-tail:]))
    nu_grid, mag = frequency_scan(tau, y, center=a_tail)
    # a component needs more than one period inside the window to be told apart
    # from the envelope
    peaks = []
    for nu in _peaks(nu_grid, mag, len(nu_grid), include_dc=True):
        nu = 0.0 if nu <= 1.0 else nu
        if nu not in peaks:
            peaks.append(nu)
        if len(peaks) == n_components:
            break
    while len(peaks) < n_components:
        peaks.append(float(nu_grid[min(len(nu_grid) - 1, 2 * len(peaks) + 1)]))
    dc_flags = [nu == 0.0 for nu in peaks]
    layout = _GaussianLayout(dc_flags)
    g_grid = np.concatenate(
        [[_envelope_rate(tau, y, a_tail), _envelope_rate(tau, y, a_mean)], np.geomspace(0.1, 30.0, 40)]
    )
    candidates = []
    for g in g_grid:
        env = np.exp(-((g * tau) ** 2))
        cols = [np.ones_like(tau)]
        for nu, dc in zip(peaks, dc_flags):
            if dc:
                cols.append(env)
            else:
                cols += [env * np.cos(TWO_PI * nu * tau), env * np.sin(TWO_PI * nu * tau)]
        coef, cost = _linear_solve(np.column_stack(cols), y)
        candidates.append((cost, g, coef))
    candidates.sort(key=lambda c: c[0])
    starts = []
    for cost, g, coef in candidates[:3]:
        p = [coef[0], g]
        k = 1
        for nu, dc in zip(peaks, dc_flags):
            if dc:
                p += [coef[k], 0.0, 0.0]
                k += 1
            else:
                c, s = coef[k], coef[k + 1]
                p += [math.hypot(c, s), nu, math.atan2(-s, c)]
                k += 2
        starts.append(np.array(p, dtype=float))
    # plain spectral start: offset from the mean, amplitude from half the range
    p = [a_mean, g_grid[1]]
    for nu in peaks:
        p += [0.5 * float(np.ptp(y)) / n_components, nu, 0.0]
    starts.append(np.array(p, dtype=float))
    return layout, starts


def fit_gaussian_fid(ts, n_components=1):
    """Fit ``a + exp(-(t/T2*)^2) sum_j b_j cos(2 pi f_j t + phi_j)`` with 1-3 components.

    A component whose spectral peak sits at zero frequency is fitted as a
    pure Gaussian term (its frequency and phase stay at zero).
    """
    if n_components not in (1, 2, 3):
        raise ParameterError("n_components", f"must be 1, 2 or 3, got {n_components}")
    t, y = _arrays(ts, 10)
    window = float(np.max(np.abs(t))) or 1.0
    tau = t / window
    if np.ptp(y) <= 1e-12 * max(1.0, abs(float(np.mean(y)))):
        return _constant_result("gaussian_fid", y, window, {})
    layout, starts = _gaussian_starts(tau, y, n_components)
    mask = layout.free_mask()
    best = None
    best_problem = None
    for x0 in starts:
        problem = _Problem(layout, tau, y, mask, x0)
        res = _lm(problem, x0[np.asarray(mask)])
        if best is None or res.cost < best.cost:
            best, best_problem = res, problem
    problem = best_problem
    full = problem.expand(best.x)
    cov = _covariance(problem, best.x)
    sig_free = np.sqrt(np.abs(np.diag(cov)))
    sig = np.zeros_like(full)
    sig[problem.free] = sig_free
    a, g = full[0], abs(full[1])
    amps, freqs, phases = [], [], []
    amp_sig, freq_sig, phase_sig = [], [], []
    for j in range(layout.n):
        b, nu, phi = full[2 + 3 * j : 5 + 3 * j]
        if b < 0:
            b, phi = -b, phi + math.pi
        if nu < 0:
            nu, phi = -nu, -phi
        amps.append(float(b))
        freqs.append(float(TWO_PI * nu / window))
        phases.append(_wrap(phi))
        amp_sig.append(float(sig[2 + 3 * j]))
        freq_sig.append(float(TWO_PI * sig[3 + 3 * j] / window))
        phase_sig.append(float(sig[4 + 3 * j]))
    decay = window / g if g > 0 else math.inf
    decay_sig = window * sig[1] / g**2 if g > 0 else math.nan
    params = dict(
        offset=float(a),
        decay_time=float(decay),
        amplitudes=amps,
        frequencies=freqs,
        phases=phases,
    )
    unc = dict(
        offset=float(sig[0]),
        decay_time=float(decay_sig),
        amplitudes=amp_sig,
        frequencies=freq_sig,
        phases=phase_sig,
    )
    rms = math.sqrt(2.0 * best.cost / len(y))
    converged = bool(best.status > 0 and g > 0 and np.all(np.isfinite(full)))
    return FitResult(
        "gaussian_fid",
        params,
        unc,
        rms,
        converged,
        int(best.njev or best.nfev),
        no_decay=bool(not g > 0 or decay > window),
        window=window,
        extra={"dc_components": list(layout.dc)},
    )
