import functools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import reference
from nvdnp.analysis import quasistatic_fid_oracle
from nvdnp.bathgen import BathConfig, BathSpin, preset_bath, sample_bath
from nvdnp.engine import (
    DriveParams,
    EngineOptions,
    build_segment_hamiltonian,
    electron_bloch,
    initial_state,
    measure,
    propagate,
    rotate_electron,
    total_z_magnetization,
)
from nvdnp.errors import EnsembleError, ParameterError
from nvdnp.experiments import (
    FID_GRID,
    PROBE_RABI,
    Variant,
    dnp_protocol,
    ensemble_average,
    fid_experiment,
    laser_study,
    rabi_experiment,
    reset_electron,
    rabi_frequency_sweep,
    run_sequence,
)
from nvdnp.pulsedsl import load_preset

TWO_PI = 2 * math.pi


def one_spin(a_par, a_perp, b_field=0.05):
    return BathConfig(b_field, (BathSpin((0.6e-9, 0.0, 0.4e-9), a_par, a_perp),), 0, "synthetic")


# ----------------------------------------------------------------- Rabi


def test_rabi_bare():
    om = TWO_PI * 1e6
    t = np.linspace(0, 5e-6, 101)
    ts = rabi_experiment(BathConfig(0.05), DriveParams(om), t)
    np.testing.assert_allclose(ts.values, np.cos(om * t / 2) ** 2, atol=1e-10)


def test_rabi_single_point():
    ts = rabi_experiment(preset_bath("acceptance"), DriveParams(TWO_PI * 5e5), [0.0])
    assert ts.values[0] == pytest.approx(1.0, abs=1e-12)


def test_rabi_incremental_matches_pointwise():
    bath = preset_bath("acceptance").subset([0, 1, 2])
    drive = DriveParams(TWO_PI * 540e3)
    t = np.linspace(0, 10e-6, 23)
    ts = rabi_experiment(bath, drive, t)
    h = build_segment_hamiltonian(bath, drive)
    st0 = initial_state(bath)
    pointwise = [measure(propagate(st0, h, x)).p0 for x in t]
    np.testing.assert_allclose(ts.values, pointwise, atol=1e-10)


def test_rabi_far_off_resonance():
    bath = one_spin(TWO_PI * 100e3, TWO_PI * 50e3)
    om = TWO_PI * 10e6
    t = np.linspace(0, 10 * TWO_PI / om, 801)
    ts = rabi_experiment(bath, DriveParams(om), t)
    # brute-force 4-dim check of the same trace
    rho = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2).astype(complex)
    h = reference.hamiltonian(bath, om)
    p0 = reference.embed(2, 0, np.diag([1.0, 0.0]).astype(complex))
    ref = [np.trace(p0 @ reference.evolve(rho, h, x)).real for x in t[::40]]
    np.testing.assert_allclose(ts.values[::40], ref, atol=1e-10)
    first = np.ptp(ts.values[:81])
    last = np.ptp(ts.values[-81:])
    assert 1 - last / first < 0.02


def test_rabi_sweep_dip_near_larmor():
    bath = preset_bath("acceptance", b_field=0.05)
    rabis = bath.larmor * np.array([0.4, 1.0, 2.5])
    sw = rabi_frequency_sweep(bath, rabis)
    assert list(sw.parameters) == list(rabis)
    t = sw.decay_times()
    assert np.argmin(t) == 1


def test_rabi_sweep_empty_bath_no_dip():
    rabis = TWO_PI * np.linspace(100e3, 1.5e6, 8)
    sw = rabi_frequency_sweep(BathConfig(0.05), rabis)
    for fit in sw.fits:
        assert fit is None or fit.no_decay or fit.decay_time > 20e-6


def test_rabi_sweep_requires_values():
    with pytest.raises(ParameterError):
        rabi_frequency_sweep(BathConfig(0.05), [])


# ----------------------------------------------------------------- FID


def test_fid_product_oracle():
    bath = preset_bath("acceptance").pure_dephasing()
    fid = fid_experiment(bath, None, FID_GRID, probe_rabi=None)
    ref = np.prod(np.abs(np.cos(np.multiply.outer(FID_GRID, bath.a_par) / 2)), axis=1)
    np.testing.assert_allclose(fid.values, ref, atol=1e-9)


def test_fid_full_polarization_flat():
    bath = preset_bath("acceptance").pure_dephasing()
    fid = fid_experiment(bath, [1.0] * bath.n_spins, FID_GRID, probe_rabi=None)
    np.testing.assert_allclose(fid.values, 1.0, atol=1e-12)


def brute_force_fid(bath, t, probe_rabi):
    """Two-quadrature Ramsey envelope from the 4x4 reference."""
    rho = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2).astype(complex)
    tp = 0.5 * math.pi / probe_rabi
    rho = reference.evolve(rho, reference.hamiltonian(bath, probe_rabi, 0.0), tp)
    h0 = reference.hamiltonian(bath)
    p0 = reference.embed(2, 0, np.diag([1.0, 0.0]).astype(complex))
    out = []
    for x in t:
        r = reference.evolve(rho, h0, x)
        q = []
        for phase in (0.0, 0.5 * math.pi):
            q.append(np.trace(p0 @ reference.evolve(r, reference.hamiltonian(bath, probe_rabi, phase), tp)).real)
        out.append(math.hypot(1 - 2 * q[0], 1 - 2 * q[1]))
    return np.array(out)


def test_fid_strong_spin_beating():
    bath = one_spin(TWO_PI * 300e3, TWO_PI * 120e3, 0.066)
    t = np.linspace(0, 12e-6, 97)
    fid = fid_experiment(bath, None, t)
    np.testing.assert_allclose(fid.values, brute_force_fid(bath, t, PROBE_RABI), atol=1e-9)
    # oscillation: several interior local minima
    v = fid.values
    minima = np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:]))
    assert minima >= 3


def test_fid_paper_like_beats_on_decay():
    fid = fid_experiment(preset_bath("paper_like"), None, np.linspace(0, 12e-6, 121))
    v = fid.values
    assert np.any(np.diff(v[:40]) > 0.01)  # non-monotone: oscillation on the decay
    assert v[-10:].max() < 0.05


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_fid_full_contrast_at_zero(seed, n):
    rng = np.random.default_rng(seed)
    spins = tuple(
        BathSpin((1e-9, 0.1e-9 * k, 0.3e-9), rng.uniform(-1e6, 1e6), rng.uniform(0, 5e5)) for k in range(n)
    )
    bath = BathConfig(rng.uniform(0, 0.1), spins)
    pol = rng.uniform(-1, 1, n)
    ideal = fid_experiment(bath, pol, [0.0, 1e-6], probe_rabi=None)
    assert ideal.values[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["acceptance", "paper_like"])
def test_fid_contrast_finite_probe(name):
    fid = fid_experiment(preset_bath(name), None, [0.0, 1e-6])
    assert fid.values[0] == pytest.approx(1.0, abs=2e-3)


def test_fid_grid_validation():
    with pytest.raises(ParameterError):
        fid_experiment(BathConfig(0.05), None, [1e-6, 0.5e-6])


# ----------------------------------------------------------------- DNP


def test_dnp_zero_cycles():
    bath = preset_bath("acceptance")
    st0 = initial_state(bath)
    st1, history = dnp_protocol(bath, 0, state=st0)
    assert history == []
    np.testing.assert_array_equal(st1.payload, st0.payload)
    assert measure(st1).nuclear_pz == (0.0,) * bath.n_spins


@pytest.mark.parametrize("a_par", [0.0, TWO_PI * 20e3])
def test_dnp_single_spin_selectivity(a_par):
    a_perp = TWO_PI * 50e3
    bath = one_spin(a_par, a_perp)
    taus = np.linspace(0, 40e-6, 81)
    options = EngineOptions(kappa=0.0)
    for lock, bound, above in ((bath.larmor, 0.4, True), (bath.larmor + 10 * a_perp, 0.05, False)):
        pz = np.array([dnp_protocol(bath, 1, tau, lock, options=options)[1][0][0] for tau in taus])
        ref = reference.single_spin_dnp(bath, lock, taus, PROBE_RABI)
        np.testing.assert_allclose(pz, ref, atol=1e-10)
        peak = np.max(np.abs(pz))
        assert (peak >= bound) if above else (peak <= bound)


def test_dnp_polarization_grows():
    bath = preset_bath("acceptance", b_field=0.066)
    _, history = dnp_protocol(bath, 10, 2e-6, options=EngineOptions(kappa=0.0))
    assert len(history) == 10
    total = [sum(abs(p) for p in cycle) for cycle in history]
    assert all(b > a for a, b in zip(total[:5], total[1:5]))


@pytest.mark.parametrize("detune", [0.0, 10.0, -10.0])
def test_hartmann_hahn_selectivity(detune):
    a_perp = TWO_PI * 50e3
    bath = one_spin(0.0, a_perp)
    start = rotate_electron(initial_state(bath), math.pi / 2, 0.0)
    locked0 = electron_bloch(start)[1]
    h = build_segment_hamiltonian(bath, DriveParams(bath.larmor + detune * a_perp, math.pi / 2))
    locked = electron_bloch(propagate(start, h, math.pi / (a_perp / 2)))[1]
    if detune == 0:
        assert abs(locked) < 0.5 * abs(locked0)
    else:
        assert abs(locked) > 0.9 * abs(locked0)


def _free_segment(seed, dipolar, pure, electron_ground=False):
    bath = sample_bath(seed, 0.3, 0.25e-9, 1.0e-9, 3, 0.05)
    bath = bath.pure_dephasing() if pure else bath
    rng = np.random.default_rng(seed)
    state = initial_state(bath, "mixed", rng.uniform(-1, 1, bath.n_spins))
    if electron_ground:
        state = initial_state(bath, "ground", rng.uniform(-1, 1, bath.n_spins))
    else:
        state = rotate_electron(state, 0.4, 1.0)
    h = build_segment_hamiltonian(bath, None, dipolar)
    return state, propagate(state, h, rng.uniform(0, 50e-6))


@given(st.integers(0, 10**6), st.booleans())
def test_z_magnetization_conserved_secular(seed, dipolar):
    before, after = _free_segment(seed, dipolar, pure=True)
    assert total_z_magnetization(after) == pytest.approx(total_z_magnetization(before), abs=1e-10)


@given(st.integers(0, 10**6), st.booleans())
def test_z_magnetization_conserved_electron_ground(seed, dipolar):
    before, after = _free_segment(seed, dipolar, pure=False, electron_ground=True)
    assert total_z_magnetization(after) == pytest.approx(total_z_magnetization(before), abs=1e-10)


@given(st.integers(0, 10**6), st.booleans())
def test_electron_population_conserved(seed, dipolar):
    before, after = _free_segment(seed, dipolar, pure=False)
    assert measure(after).p0 == pytest.approx(measure(before).p0, abs=1e-10)


@pytest.mark.xfail(
    strict=True,
    reason="the pseudo-secular term P1 (x) a_perp Ix flips nuclei without the electron",
)
def test_z_magnetization_conserved_with_pseudo_secular():
    before, after = _free_segment(1, False, pure=False)
    assert total_z_magnetization(after) == pytest.approx(total_z_magnetization(before), abs=1e-10)


# ----------------------------------------------------------------- laser study


@pytest.fixture(scope="module")
def study():
    bath = preset_bath("acceptance", b_field=0.066)
    variants = [Variant("none"), Variant("extra_laser", 100e-6, 1e-3), Variant("extra_wait", 100e-6)]
    return (
        laser_study(bath, variants),
        laser_study(bath, variants, options=EngineOptions(kappa=0.0)),
    )


def test_extra_laser_shortens(study):
    with_kappa, _ = study
    none, laser, _ = with_kappa.fits
    assert none.converged and laser.converged
    assert laser.decay_time < none.decay_time


def test_extra_laser_without_depolarization(study):
    _, no_kappa = study
    none, laser, _ = no_kappa.fits
    assert abs(laser.decay_time - none.decay_time) <= math.hypot(laser.decay_uncertainty, none.decay_uncertainty)


def test_extra_wait_without_coupling(study):
    _, no_kappa = study
    none, _, wait = no_kappa.fits
    sigma = math.hypot(wait.decay_uncertainty, none.decay_uncertainty)
    assert abs(wait.decay_time - none.decay_time) <= 3 * sigma


def test_extra_wait_keeps_z_polarization():
    bath = preset_bath("acceptance", b_field=0.066)
    options = EngineOptions(kappa=0.0)
    pumped, _ = dnp_protocol(bath, 10, 2e-6, options=options)
    h = build_segment_hamiltonian(bath, None)
    waited = propagate(reset_electron(pumped), h, 100e-6)
    np.testing.assert_allclose(measure(waited).nuclear_pz, measure(pumped).nuclear_pz, atol=1e-12)


def test_variant_labels():
    assert Variant("extra_laser", 100e-6, 1e-3).label == "extra_laser(100us;1000uW)"
    with pytest.raises(ParameterError):
        Variant("sideways")


# ----------------------------------------------------------------- ensembles


def fid_for_seed(seed, t=np.linspace(0, 8e-6, 81)):
    bath = sample_bath(seed, 0.011, 0.25e-9, 1.5e-9, 5, 0.066)
    return fid_experiment(bath, None, t, probe_rabi=None)


def failing(seed):
    if seed in (3, 5):
        raise RuntimeError("boom")
    return fid_for_seed(seed)


def test_ensemble_single_seed():
    ens = ensemble_average(fid_for_seed, [4])
    np.testing.assert_array_equal(ens.values, fid_for_seed(4).values)


def test_ensemble_duplicates():
    ens = ensemble_average(fid_for_seed, [4, 4, 4])
    np.testing.assert_allclose(ens.values, fid_for_seed(4).values, rtol=1e-15)


def test_ensemble_smoother():
    # Weakly coupled members can decay almost monotonically, so the mean is
    # compared with the typical member rather than with every member.
    seeds = list(range(20))
    ens = ensemble_average(fid_for_seed, seeds)
    tv = lambda v: np.sum(np.abs(np.diff(v)))
    members = np.array([tv(fid_for_seed(s).values) for s in seeds])
    assert tv(ens.values) < members.mean()
    assert tv(ens.values) < np.median(members)


def test_ensemble_errors():
    with pytest.raises(EnsembleError) as info:
        ensemble_average(failing, [1, 3, 4, 5])
    assert set(info.value.failures) == {3, 5}
    with pytest.raises(ParameterError):
        ensemble_average(fid_for_seed, [])


def test_ensemble_workers_identical():
    seeds = [1, 2, 3, 4]
    a = ensemble_average(fid_for_seed, seeds, workers=1)
    b = ensemble_average(fid_for_seed, seeds, workers=3)
    assert a.values.tobytes() == b.values.tobytes()


# ----------------------------------------------------------------- determinism


def test_trajectory_fid_workers_identical():
    bath = preset_bath("acceptance").subset([0, 1, 2, 3])
    t = np.linspace(0, 6e-6, 13)
    base = dict(backend="trajectory", n_trajectories=200, seed=3, chunk_size=32)
    a = fid_experiment(bath, None, t, EngineOptions(workers=1, **base))
    b = fid_experiment(bath, None, t, EngineOptions(workers=4, **base))
    assert a.values.tobytes() == b.values.tobytes()
    assert a.channels["p0_x_stderr"].tobytes() == b.channels["p0_x_stderr"].tobytes()


def test_trajectory_dnp_workers_identical():
    bath = preset_bath("acceptance").subset([0, 1, 2])
    base = dict(backend="trajectory", n_trajectories=150, seed=8, chunk_size=40)
    s1, h1 = dnp_protocol(bath, 3, options=EngineOptions(workers=1, **base))
    s2, h2 = dnp_protocol(bath, 3, options=EngineOptions(workers=3, **base))
    assert h1 == h2
    assert s1.payload.tobytes() == s2.payload.tobytes()


def test_rabi_sweep_workers_identical():
    bath = preset_bath("acceptance").subset([0, 1])
    rabis = TWO_PI * np.array([300e3, 500e3, 800e3])
    a = rabi_frequency_sweep(bath, rabis, options=EngineOptions(workers=1))
    b = rabi_frequency_sweep(bath, rabis, options=EngineOptions(workers=3))
    assert a.decay_times().tobytes() == b.decay_times().tobytes()


def test_run_sequence_backends_agree():
    bath = preset_bath("acceptance").subset([0, 1])
    seq = load_preset("dnp_fid")
    _, dens = run_sequence(seq, {"t": "1us"}, bath)
    _, traj = run_sequence(seq, {"t": "1us"}, bath, options=EngineOptions(backend="trajectory", n_trajectories=4000, seed=2))
    assert len(dens.readouts) == len(traj.readouts) == 1
    (_, d), (_, t) = dens.readouts[0], traj.readouts[0]
    assert abs(d.p0 - t.p0) <= 5 * t.p0_stderr
