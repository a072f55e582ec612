import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthetic import (
    FID_T,
    RABI_T,
    damped_params,
    damped_signal,
    gaussian_params,
    gaussian_signal,
)
from nvdnp.analysis import (
    damped_cosine,
    fit_damped_cosine,
    fit_gaussian_fid,
    gaussian_fid,
    numeric_jacobian,
    quasistatic_fid_oracle,
    tstar_quasistatic,
)
from nvdnp.analysis.fitting import _damped_internal, _Problem
from nvdnp.bathgen import BathConfig, BathSpin, preset_bath
from nvdnp.errors import FitInputError, NoFiniteT2Error, ParameterError
from nvdnp.experiments import fid_experiment
from nvdnp.series import TimeSeries

TWO_PI = 2 * math.pi


def bath_from(a_par, a_perp=None):
    a_perp = [0.0] * len(a_par) if a_perp is None else a_perp
    spins = tuple(
        BathSpin((1e-9, 0.1e-9 * k, 0.5e-9), a, b) for k, (a, b) in enumerate(zip(a_par, a_perp))
    )
    return BathConfig(0.066, spins, 0, "synthetic")


# ----------------------------------------------------------------- damped cosine


def test_damped_noiseless_recovery():
    y = damped_cosine(RABI_T, 0.5, 0.5, TWO_PI * 1e6, 0.0, 5e-6)
    r = fit_damped_cosine(TimeSeries(RABI_T, y))
    assert r.converged and not r.no_decay
    assert r.model == "damped_cosine"
    p = r.params
    assert p["offset"] == pytest.approx(0.5, rel=1e-3)
    assert p["amplitude"] == pytest.approx(0.5, rel=1e-3)
    assert p["frequency"] == pytest.approx(TWO_PI * 1e6, rel=1e-3)
    assert p["decay_time"] == pytest.approx(5e-6, rel=1e-3)
    assert min(p["phase"], TWO_PI - p["phase"]) < 1e-3
    assert r.residual_rms >= 0 and r.n_iterations <= 200


def test_damped_uniform_noise_monte_carlo():
    y = damped_cosine(RABI_T, 0.5, 0.5, TWO_PI * 1e6, 0.0, 5e-6)
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        r = fit_damped_cosine((RABI_T, y + rng.uniform(-0.01, 0.01, len(y))))
        hits += r.converged and abs(r.decay_time / 5e-6 - 1) < 0.03
    assert hits >= 45


def test_damped_constant_flagged():
    r = fit_damped_cosine((RABI_T, np.full_like(RABI_T, 0.7)))
    assert r.no_decay
    assert (not r.converged) or (r.decay_time > RABI_T[-1] and abs(r.params["amplitude"]) < 1e-6)


def test_damped_too_few_points():
    with pytest.raises(FitInputError):
        fit_damped_cosine((RABI_T[:7], np.ones(7)))


def test_damped_initial_guess():
    y = damped_cosine(RABI_T, 0.4, 0.3, TWO_PI * 0.8e6, 1.0, 7e-6)
    guess = dict(offset=0.4, amplitude=0.3, frequency=TWO_PI * 0.8e6, phase=1.0, decay_time=6e-6)
    r = fit_damped_cosine((RABI_T, y), initial=guess)
    assert r.decay_time == pytest.approx(7e-6, rel=1e-4)


# ----------------------------------------------------------------- Gaussian FID


def test_gaussian_single_446():
    y = gaussian_fid(FID_T, 0.5, 4.46e-6, [0.5], [0.0], [0.0])
    r = fit_gaussian_fid((FID_T, y))
    assert r.converged
    assert r.decay_time == pytest.approx(4.46e-6, rel=0.01)


def test_gaussian_two_component_645():
    y = gaussian_fid(FID_T, 0.1, 6.45e-6, [0.6, 0.3], [0.0, TWO_PI * 1.3e6], [0.0, 0.4])
    r = fit_gaussian_fid((FID_T, y), n_components=2)
    assert r.converged
    assert r.decay_time == pytest.approx(6.45e-6, rel=0.02)
    assert sorted(r.params["frequencies"])[1] == pytest.approx(TWO_PI * 1.3e6, rel=1e-3)


def test_gaussian_flat_envelope():
    bath = preset_bath("acceptance").pure_dephasing()
    env = quasistatic_fid_oracle(bath, 1.0, FID_T)
    np.testing.assert_allclose(env, 1.0)
    r = fit_gaussian_fid((FID_T, env))
    assert r.no_decay
    assert r.decay_time > FID_T[-1]


@pytest.mark.parametrize("n", [0, 4])
def test_gaussian_component_range(n):
    with pytest.raises(ParameterError):
        fit_gaussian_fid((FID_T, np.ones_like(FID_T)), n_components=n)


def test_gaussian_too_few_points():
    with pytest.raises(FitInputError):
        fit_gaussian_fid((FID_T[:9], np.ones(9)))


def test_fitter_corpus_damped():
    rng = np.random.default_rng(101)
    for _ in range(200):
        p = damped_params(rng)
        r = fit_damped_cosine((RABI_T, damped_signal(p)))
        assert r.converged
        for key in ("offset", "amplitude", "frequency", "decay_time"):
            assert r.params[key] == pytest.approx(p[key], rel=5e-3)


def test_fitter_corpus_gaussian():
    rng = np.random.default_rng(202)
    for _ in range(200):
        p = gaussian_params(rng)
        n = len(p["amplitudes"])
        r = fit_gaussian_fid((FID_T, gaussian_signal(p)), n)
        assert r.converged
        assert r.decay_time == pytest.approx(p["decay_time"], rel=5e-3)
        assert r.params["offset"] == pytest.approx(p["offset"], abs=5e-3)
        got = sorted(zip(r.params["frequencies"], r.params["amplitudes"]))
        want = sorted(zip(p["frequencies"], p["amplitudes"]))
        for (fg, bg), (fw, bw) in zip(got, want):
            assert fg == pytest.approx(fw, abs=5e-3 * TWO_PI * 1e6)
            assert bg == pytest.approx(bw, rel=5e-3)


@pytest.mark.parametrize("seed", range(5))
def test_internal_gradient(seed):
    rng = np.random.default_rng(seed)
    tau = RABI_T / RABI_T[-1]
    truth = np.array([0.5, 0.4, 20.0, 0.3, 3.0])
    y = _damped_internal(tau, truth) + rng.normal(0, 0.02, len(tau))
    x = truth * rng.uniform(0.8, 1.2, 5)
    prob = _Problem(_damped_internal, tau, y, [True] * 5, x)
    grad = prob.gradient(x)
    fd = numeric_jacobian(lambda z: np.array([prob.cost(z)]), x, step=1e-5)[0]
    assert np.linalg.norm(grad - fd) <= 1e-6 * np.linalg.norm(fd)


# ----------------------------------------------------------------- oracles


def test_oracle_full_polarization():
    bath = bath_from([1e5, -3e5, 7e5])
    np.testing.assert_array_equal(quasistatic_fid_oracle(bath, 1.0, FID_T), 1.0)


def test_oracle_single_spin():
    a = TWO_PI * 210e3
    np.testing.assert_allclose(
        quasistatic_fid_oracle([a], 0.0, FID_T), np.abs(np.cos(a * FID_T / 2)), atol=1e-15
    )


def test_oracle_matches_density_fid():
    rng = np.random.default_rng(3)
    a_par = rng.uniform(-TWO_PI * 250e3, TWO_PI * 250e3, 5)
    a_perp = rng.uniform(0, TWO_PI * 100e3, 5)
    bath = bath_from(a_par, a_perp).pure_dephasing()
    assert all(b == 0 for b in bath.a_perp)
    p = rng.uniform(0, 1, 5)
    t = np.linspace(0, 12e-6, 50)
    fid = fid_experiment(bath, p, t, probe_rabi=None)
    np.testing.assert_allclose(fid.values, quasistatic_fid_oracle(bath, p, t), atol=1e-9)


def test_tstar_ratio():
    bath = preset_bath("acceptance")
    ratio = tstar_quasistatic(bath, 0.6) / tstar_quasistatic(bath, 0.0)
    assert ratio == pytest.approx(1.25, rel=1e-14)


def test_tstar_doubling():
    a = np.array([1e5, -2.5e5, 4e5])
    assert tstar_quasistatic(2 * a) == pytest.approx(0.5 * tstar_quasistatic(a), rel=1e-15)


def test_tstar_closed_form():
    a = np.array([1e5, -2.5e5, 4e5])
    assert tstar_quasistatic(a, 0.3) == pytest.approx(math.sqrt(8 / ((1 - 0.09) * np.sum(a**2))))


def test_tstar_infinite():
    with pytest.raises(NoFiniteT2Error):
        tstar_quasistatic(BathConfig(0.05))
    with pytest.raises(NoFiniteT2Error):
        tstar_quasistatic([0.0, 0.0])
    with pytest.raises(NoFiniteT2Error):
        tstar_quasistatic([1e5], 1.0)


def test_fit_oracle_recovers_tstar():
    bath = preset_bath("acceptance")
    env = quasistatic_fid_oracle(bath, 0.0, FID_T)
    r = fit_gaussian_fid((FID_T, env))
    assert r.converged
    assert r.decay_time == pytest.approx(tstar_quasistatic(bath, 0.0), rel=0.10)


@given(
    st.lists(st.floats(-TWO_PI * 500e3, TWO_PI * 500e3), min_size=1, max_size=6),
    st.data(),
    st.floats(0, 20e-6),
)
def test_oracle_monotone(a, data, t):
    n = len(a)
    p = np.array(data.draw(st.lists(st.floats(0, 0.999), min_size=n, max_size=n)))
    k = data.draw(st.integers(0, n - 1))
    base = quasistatic_fid_oracle(a, p, t)
    # raising |p_k| lowers (1 - p_k^2); the envelope must not drop
    q = p.copy()
    q[k] = min(p[k] + 1e-3, 1.0)
    assert quasistatic_fid_oracle(a, q, t) >= base - 1e-12


@pytest.mark.parametrize("n", [8, 20, 40])
@pytest.mark.parametrize("seed", range(3))
def test_gaussian_limit(n, seed):
    rng = np.random.default_rng(100 * seed + n)
    a = rng.uniform(-1, 1, n) * TWO_PI * 20e3
    ts = tstar_quasistatic(a)
    # weak-coupling window: max |a_par| t <= 0.5
    t = np.linspace(0, 0.5 / np.max(np.abs(a)), 200)
    ref = np.exp(-((t / ts) ** 2))
    assert np.max(np.abs(quasistatic_fid_oracle(a, 0.0, t) - ref)) < 0.02


def test_gaussian_limit_many_spins_full_decay():
    rng = np.random.default_rng(7)
    a = rng.uniform(-1, 1, 40) * TWO_PI * 20e3
    ts = tstar_quasistatic(a)
    t = np.linspace(0, 2 * ts, 300)
    ref = np.exp(-((t / ts) ** 2))
    assert np.max(np.abs(quasistatic_fid_oracle(a, 0.0, t) - ref)) < 0.02
