import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvdnp.bathgen import (
    BathConfig,
    BathSpin,
    hyperfine_from_position,
    lattice_sites,
    parse_bath,
    preset_bath,
    sample_bath,
    save_bath,
)
from nvdnp.constants import CONSTANTS, HBAR
from nvdnp.errors import BathParseError, ConsistencyError, DomainError, ParameterError

D = CONSTANTS.dipolar_prefactor
A = CONSTANTS.lattice_constant


def brute_force_sites(r_min, r_max):
    """Diamond carbons from the conventional cell: fcc basis plus (1/4,1/4,1/4).

    Independent of the package enumeration. The vacancy sits at the origin and
    the nitrogen at a/4 (1,1,1); both are excluded. Returns NV-frame positions.
    """
    fcc = [(0, 0, 0), (0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0)]
    basis = fcc + [(x + 0.25, y + 0.25, z + 0.25) for x, y, z in fcc]
    n = int(math.ceil(r_max / A)) + 1
    z = np.array([1, 1, 1]) / math.sqrt(3)
    x = np.array([1, 1, -2]) / math.sqrt(6)
    y = np.cross(z, x)
    out = []
    for i, j, k in itertools.product(range(-n, n + 1), repeat=3):
        for b in basis:
            u = np.array([i + b[0], j + b[1], k + b[2]])
            if np.allclose(u, 0) or np.allclose(u, 0.25):
                continue
            c = u * A
            r = np.linalg.norm(c)
            if r_min <= r <= r_max:
                out.append([c @ x, c @ y, c @ z])
    return np.array(out)


def strength(p):
    r = np.linalg.norm(p, axis=-1)
    cos = p[..., 2] / r
    return (D * (1 - 3 * cos**2) / r**3) ** 2 + (3 * D * np.sqrt(1 - cos**2) * np.abs(cos) / r**3) ** 2


# ----------------------------------------------------------------- constants


def test_dipolar_prefactor_value():
    mu0 = 4e-7 * math.pi
    d = mu0 * HBAR * CONSTANTS.gamma_e * CONSTANTS.gamma_c / (4 * math.pi)
    assert abs(d / 1.250e-22 - 1) < 5e-3
    assert abs(D / d - 1) < 1e-3


def test_gamma_c():
    assert CONSTANTS.gamma_c == 6.73e7


# ----------------------------------------------------------------- sampling


def test_zero_abundance_is_empty():
    b = sample_bath(1, 0.0, 0.2e-9, 2e-9, 8, 0.05)
    assert b.spins == ()
    assert b.larmor == pytest.approx(3.365e6, rel=1e-12)


def test_strongest_sites_kept():
    b = sample_bath(7, 1.0, 0.15e-9, 0.26e-9, 4, 0.05)
    assert b.n_spins == 4
    sites = brute_force_sites(0.15e-9, 0.26e-9)
    s_all = np.sort(strength(sites))[::-1]
    kept = np.sort(strength(np.array(b.positions)))[::-1]
    np.testing.assert_allclose(kept, s_all[:4], rtol=1e-9)
    # kept positions are genuine shell sites
    for p in np.asarray(b.positions):
        assert np.min(np.linalg.norm(sites - np.array(p), axis=1)) < 1e-15
    np.testing.assert_array_equal(sample_bath(8, 1.0, 0.15e-9, 0.26e-9, 4, 0.05).positions, b.positions)


def test_site_count_matches_brute_force():
    grid, pos = lattice_sites(0.2e-9, 1.5e-9)
    ref = brute_force_sites(0.2e-9, 1.5e-9)
    assert len(grid) == len(ref)
    key = lambda p: tuple(np.round(np.asarray(p) * 1e13).astype(int))
    assert sorted(map(key, pos)) == sorted(map(key, ref))


def test_mean_occupancy():
    n_sites = len(brute_force_sites(0.2e-9, 1.5e-9))
    counts = np.array(
        [sample_bath(42 + s, 0.011, 0.2e-9, 1.5e-9, 10**6, 0.066).n_spins for s in range(1000)]
    )
    mean = n_sites * 0.011
    sigma = math.sqrt(n_sites * 0.011 * 0.989 / 1000)
    assert abs(counts.mean() - mean) < 3 * sigma


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(abundance=1.5), "abundance"),
        (dict(abundance=-0.1), "abundance"),
        (dict(r_min=0.0), "r_min"),
        (dict(r_min=2e-9, r_max=1e-9), "r_max"),
        (dict(max_spins=-1), "max_spins"),
    ],
)
def test_sample_errors(kwargs, field):
    with pytest.raises(ParameterError) as info:
        sample_bath(0, **kwargs)
    assert info.value.field == field


def test_sampled_spins_consistent():
    b = sample_bath(3, 0.05, 0.25e-9, 1.2e-9, 8, 0.05)
    assert b.provenance == "sampled"
    for s in b.spins:
        assert s.is_consistent()
        assert s.r >= 0.25e-9


# ----------------------------------------------------------------- hyperfine


def test_hyperfine_on_axis():
    a_par, a_perp = hyperfine_from_position((0, 0, 1e-9))
    assert a_perp == 0
    assert a_par == pytest.approx(-2 * D / 1e-27, rel=1e-12)


@pytest.mark.parametrize("r", [0.3e-9, 1e-9, 4e-9])
def test_hyperfine_magic_angle(r):
    th = math.acos(1 / math.sqrt(3))
    a_par, _ = hyperfine_from_position((r * math.sin(th), 0, r * math.cos(th)))
    assert abs(a_par) < 1e-12 * D / r**3


def test_hyperfine_in_plane():
    a_par, a_perp = hyperfine_from_position((0.5e-9, 0, 0))
    assert a_par == pytest.approx(D / 0.125e-27, rel=1e-12)
    assert a_par == pytest.approx(1.00e6, rel=5e-3)
    assert a_par / (2 * math.pi) == pytest.approx(159e3, rel=5e-3)
    assert a_perp == pytest.approx(0, abs=1e-9)


def test_hyperfine_zero_vector():
    with pytest.raises(DomainError):
        hyperfine_from_position((0.0, 0.0, 0.0))


positions = st.tuples(
    *[st.floats(-2e-9, 2e-9, allow_nan=False) for _ in range(3)]
).filter(lambda p: np.linalg.norm(p) > 1e-10)


@given(positions, st.floats(0.1, 10.0))
def test_hyperfine_scaling(p, s):
    a0 = np.array(hyperfine_from_position(p))
    a1 = np.array(hyperfine_from_position(tuple(s * x for x in p)))
    scale = np.max(np.abs(a1))
    np.testing.assert_allclose(a1, a0 * s**-3, rtol=1e-12, atol=1e-12 * scale)


@given(positions)
def test_hyperfine_closed_form(p):
    r = np.linalg.norm(p)
    c = p[2] / r
    a_par, a_perp = hyperfine_from_position(p)
    assert a_par == pytest.approx(D * (1 - 3 * c * c) / r**3, rel=1e-10, abs=1e-6)
    assert a_perp == pytest.approx(abs(3 * D * math.sqrt(max(1 - c * c, 0)) * c) / r**3, rel=1e-10, abs=1e-6)


@pytest.mark.parametrize("r_max", [2e-9, 2.5e-9])
def test_angular_completeness(r_max):
    _, pos = lattice_sites(0.25e-9, r_max)
    cos = pos[:, 2] / np.linalg.norm(pos, axis=1)
    assert abs(np.mean(1 - 3 * cos**2)) < 0.05


# ----------------------------------------------------------------- invariants


@given(st.integers(0, 2**63), st.floats(0.0, 0.2))
def test_determinism(seed, abundance):
    b1 = sample_bath(seed, abundance, 0.25e-9, 1.0e-9, 5, 0.05)
    b2 = sample_bath(seed, abundance, 0.25e-9, 1.0e-9, 5, 0.05)
    assert b1 == b2


@given(st.integers(0, 1000), st.integers(0, 12), st.integers(0, 12))
def test_truncation_monotone(seed, m1, m2):
    lo, hi = sorted((m1, m2))
    small = sample_bath(seed, 0.1, 0.25e-9, 1.0e-9, lo, 0.05).positions
    large = sample_bath(seed, 0.1, 0.25e-9, 1.0e-9, hi, 0.05).positions
    assert set(map(tuple, small)) <= set(map(tuple, large))


# ----------------------------------------------------------------- files


def test_roundtrip_empty():
    b = BathConfig(0.05, (), 9, "synthetic")
    text = save_bath(b)
    assert len([l for l in text.splitlines() if not l.startswith("#")]) == 0
    assert parse_bath(text) == b


def test_roundtrip_sampled():
    b = sample_bath(11, 0.05, 0.25e-9, 1.2e-9, 4, 0.066)
    assert b.n_spins == 4
    b2 = parse_bath(save_bath(b))
    assert b2 == b
    assert b2.seed == 11 and b2.provenance == "sampled"
    assert b2.larmor == b.larmor


@given(st.integers(0, 10**6), st.floats(0.0, 2.0))
def test_roundtrip_property(seed, field):
    b = sample_bath(seed, 0.08, 0.25e-9, 1.0e-9, 6, field)
    assert parse_bath(save_bath(b)) == b


def test_missing_column():
    text = save_bath(preset_bath("acceptance"))
    lines = text.splitlines()
    out = []
    for line in lines:
        fields = line.split("\t")
        if line.startswith("# columns="):
            fields = [f for f in fields if f != "a_par_krad_s"]
        elif not line.startswith("#"):
            del fields[3]
        out.append("\t".join(fields))
    with pytest.raises(BathParseError, match="a_par"):
        parse_bath("\n".join(out))


def test_inconsistent_larmor():
    text = save_bath(preset_bath("acceptance"))
    text = "\n".join(
        "# larmor_rad_s=1.0" if l.startswith("# larmor_rad_s") else l for l in text.splitlines()
    )
    with pytest.raises(ConsistencyError):
        parse_bath(text)


def test_malformed_line_number():
    text = save_bath(preset_bath("acceptance")).splitlines()
    n = len(text)
    text.append("1.0\tfoo\t2.0\t3.0\t4.0")
    with pytest.raises(BathParseError) as info:
        parse_bath("\n".join(text))
    assert info.value.line == n + 1


def test_presets_synthetic():
    for name in ("acceptance", "paper_like"):
        b = preset_bath(name)
        assert b.provenance == "synthetic"
    strong = max(preset_bath("paper_like").a_perp)
    assert strong / (2 * math.pi) == pytest.approx(300e3, rel=1e-6)


def test_bath_spin_rejects_vacancy():
    with pytest.raises((ParameterError, DomainError, ValueError)):
        BathSpin((0.0, 0.0, 0.0), 1.0, 0.0)
