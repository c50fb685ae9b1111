import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fddextrap.channel_synth import (ChannelMatrix, ImpairmentSpec, PathParams, PathSet,
                                     PortGainMask, SphericalWavefront, add_awgn, make_scenario,
                                     normalize_to_band, pathset_from_json, pathset_to_json,
                                     perturb_pattern, read_chx1, read_pathset, synthesize_channel,
                                     write_chx1, write_pathset)
from fddextrap.errors import NumericalError, OutOfRangeError
from fddextrap.grids import BandSelection, FrequencyGrid
from fddextrap.preprocess import DEFAULT_GRID, DEFAULT_TRAINING_BAND, select_band

GRID = FrequencyGrid(3.325e9, 0.5e6, 101)


def _random_paths(rng, n):
    return PathSet.from_arrays(rng.standard_normal(n) + 1j * rng.standard_normal(n),
                               rng.uniform(0, 1e-6, n), rng.uniform(0, 2 * np.pi, n),
                               rng.uniform(0.3, np.pi - 0.3, n))


paths_strategy = st.integers(0, 2 ** 32 - 1).map(lambda s: np.random.default_rng(s))


def test_path_params_normalizes_azimuth():
    p = PathParams(1.0, 0.0, -np.pi / 2, 1.0)
    assert p.phi == pytest.approx(1.5 * np.pi)


@pytest.mark.parametrize("kw", [dict(tau=-1e-9), dict(theta=3.2), dict(alpha=np.nan)])
def test_path_params_rejects(kw):
    args = dict(alpha=1.0, tau=0.0, phi=0.0, theta=1.0)
    args.update(kw)
    with pytest.raises(ValueError):
        PathParams(**args)


def test_canonical_orders_by_magnitude():
    ps = PathSet.from_arrays([0.1, 2j, -1.0], [0, 1e-9, 2e-9], [0, 0, 0], [1, 1, 1])
    np.testing.assert_array_equal(np.abs(ps.canonical().alpha), [2.0, 1.0, 0.1])


def test_isotropic_single_path_phase(isotropic_pattern):
    grid = FrequencyGrid(3.325e9, 1e6, 3)
    h = synthesize_channel(PathSet.from_arrays([1.0], [100e-9], [0.0], [np.pi / 2]),
                           isotropic_pattern, grid)
    assert h.values[0, 0] == pytest.approx(-1.0 + 0j, abs=1e-9)


def test_empty_pathset_gives_zeros(desk_pattern):
    h = synthesize_channel(PathSet(), desk_pattern, GRID)
    assert h.values.shape == (16, GRID.count)
    assert not np.any(h.values)


@settings(max_examples=20, deadline=None)
@given(paths_strategy)
def test_superposition(desk_pattern, rng):
    a, b = _random_paths(rng, 2), _random_paths(rng, 3)
    ha = synthesize_channel(a, desk_pattern, GRID).values
    hb = synthesize_channel(b, desk_pattern, GRID).values
    hab = synthesize_channel(a + b, desk_pattern, GRID).values
    np.testing.assert_allclose(hab, ha + hb, rtol=1e-12, atol=1e-12 * np.max(np.abs(hab)))


@settings(max_examples=20, deadline=None)
@given(paths_strategy, st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_amplitude_scaling(desk_pattern, rng, c):
    ps = _random_paths(rng, 3)
    h = synthesize_channel(ps, desk_pattern, GRID).values
    hc = synthesize_channel(ps.scaled(c), desk_pattern, GRID).values
    np.testing.assert_allclose(hc, c * h, rtol=1e-12, atol=1e-12 * np.max(np.abs(hc)))


@settings(max_examples=20, deadline=None)
@given(paths_strategy, st.floats(0, 500e-9))
def test_delay_shift_is_phase_ramp(isotropic_pattern, rng, dtau):
    grid = FrequencyGrid(3.325e9, 0.5e6, 201)
    ps = _random_paths(rng, 3)
    h = synthesize_channel(ps, isotropic_pattern, grid).values
    hd = synthesize_channel(ps.delayed(dtau), isotropic_pattern, grid).values
    ramp = np.exp(-2j * np.pi * grid.values * dtau)
    np.testing.assert_allclose(hd, h * ramp, rtol=1e-9, atol=1e-9 * np.max(np.abs(h)))


def test_all_ones_mask_is_neutral(desk_pattern, rng):
    ps = _random_paths(rng, 3)
    h = synthesize_channel(ps, desk_pattern, GRID).values
    hm = synthesize_channel(ps, desk_pattern, GRID, mask=PortGainMask(np.ones(16), (0, 2))).values
    np.testing.assert_array_equal(h, hm)


def test_mask_applies_only_to_listed_paths(desk_pattern, rng):
    ps = _random_paths(rng, 2)
    g = np.linspace(0.1, 1.0, 16)
    h0 = synthesize_channel(PathSet(ps.paths[:1]), desk_pattern, GRID).values
    h1 = synthesize_channel(PathSet(ps.paths[1:]), desk_pattern, GRID).values
    hm = synthesize_channel(ps, desk_pattern, GRID, mask=PortGainMask(g, (0,))).values
    np.testing.assert_allclose(hm, g[:, None] * h0 + h1, rtol=1e-12, atol=1e-14)


def test_mask_validation(desk_pattern, rng):
    ps = _random_paths(rng, 2)
    with pytest.raises(ValueError):
        synthesize_channel(ps, desk_pattern, GRID, mask=PortGainMask(np.ones(15)))
    with pytest.raises(ValueError):
        synthesize_channel(ps, desk_pattern, GRID, mask=PortGainMask(np.ones(16), (5,)))


def test_frequency_outside_pattern_span(desk_pattern, rng):
    with pytest.raises(OutOfRangeError):
        synthesize_channel(_random_paths(rng, 1), desk_pattern, FrequencyGrid(3.6e9, 1e6, 100))


def test_spherical_wavefront_tends_to_plane(desk_pattern, desk_geometry, rng):
    ps = _random_paths(rng, 2)
    h = synthesize_channel(ps, desk_pattern, GRID).values
    near = SphericalWavefront(desk_geometry.element_positions(), 2.0)
    far = SphericalWavefront(desk_geometry.element_positions(), 1e7)
    hf = synthesize_channel(ps, desk_pattern, GRID, wavefront=far).values
    hn = synthesize_channel(ps, desk_pattern, GRID, wavefront=near).values
    np.testing.assert_allclose(hf, h, rtol=1e-5, atol=1e-6 * np.max(np.abs(h)))
    assert np.max(np.abs(hn - h)) > 1e-2 * np.max(np.abs(h))


def test_awgn_disabled_returns_input(desk_pattern, rng):
    h = synthesize_channel(_random_paths(rng, 2), desk_pattern, GRID)
    assert add_awgn(h, np.inf, 1) is h
    assert add_awgn(h, None, 1) is h


def test_awgn_power_at_zero_db():
    h = ChannelMatrix(FrequencyGrid(1e9, 1.0, 100_000), np.ones((2, 100_000)))
    noisy = add_awgn(h, 0.0, 7)
    p = np.mean(np.abs(noisy.values - h.values) ** 2)
    assert abs(10 * np.log10(p)) <= 0.5


def test_awgn_deterministic(desk_pattern, rng):
    h = synthesize_channel(_random_paths(rng, 2), desk_pattern, GRID)
    np.testing.assert_array_equal(add_awgn(h, 10.0, 3).values, add_awgn(h, 10.0, 3).values)
    assert not np.array_equal(add_awgn(h, 10.0, 3).values, add_awgn(h, 10.0, 4).values)


def test_awgn_zero_channel_raises():
    with pytest.raises(NumericalError):
        add_awgn(ChannelMatrix(GRID, np.zeros((2, GRID.count))), 10.0, 0)


def test_perturb_zero_sigmas_is_identity(desk_pattern):
    out = perturb_pattern(desk_pattern, 0.0, 0.0, 5)
    np.testing.assert_array_equal(out.coeffs, desk_pattern.coeffs)


@pytest.mark.parametrize("corr", [None, 100e6])
def test_perturb_phase_only_keeps_magnitudes(desk_pattern, corr):
    out = perturb_pattern(desk_pattern, 5.0, 0.0, 5, correlation_hz=corr)
    np.testing.assert_allclose(np.abs(out.coeffs), np.abs(desk_pattern.coeffs), rtol=1e-12)
    assert not np.allclose(out.coeffs, desk_pattern.coeffs)


def test_perturb_flat_drift_is_one_factor_per_port(desk_pattern):
    out = perturb_pattern(desk_pattern, 5.0, 1.0, 9, correlation_hz=None)
    ratio = out.coeffs[:, :, 0, 0] / desk_pattern.coeffs[:, :, 0, 0]
    np.testing.assert_allclose(ratio, ratio[:, :1] * np.ones_like(ratio), rtol=1e-12)


def test_perturb_statistics(full_pattern):
    out = perturb_pattern(full_pattern, 5.0, 1.0, 11, correlation_hz=None)
    ratio = out.coeffs[:, 0, 0, 0] / full_pattern.coeffs[:, 0, 0, 0]
    assert 2.5 < np.rad2deg(np.std(np.angle(ratio))) < 7.5
    assert 0.5 < np.std(20 * np.log10(np.abs(ratio))) < 1.5


def test_perturb_deterministic(desk_pattern):
    a = perturb_pattern(desk_pattern, 5.0, 1.0, 2)
    b = perturb_pattern(desk_pattern, 5.0, 1.0, 2)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_perturb_rejects_negative_sigma(desk_pattern):
    with pytest.raises(ValueError):
        perturb_pattern(desk_pattern, -1.0, 0.0, 0)


@pytest.mark.parametrize("seed", range(5))
def test_scenario_counts(seed):
    assert 1 <= make_scenario("chamber_los", seed)[0].L <= 2
    los = make_scenario("outdoor_los", seed)[0]
    assert 6 <= los.L <= 10
    rel = 20 * np.log10(np.abs(los.alpha[1:]) / abs(los.alpha[0]))
    assert np.all((rel >= -25.0) & (rel <= -15.0))
    nlos, mask, imp = make_scenario("outdoor_nlos", seed)
    assert 15 <= nlos.L <= 25 and mask is None and imp.snr_db == 20.0


def test_nlos_can_exceed_20_paths():
    assert max(make_scenario("outdoor_nlos", s)[0].L for s in range(30)) > 20


def test_nlos_power_decays_with_delay():
    ps = make_scenario("outdoor_nlos", 3)[0]
    np.testing.assert_allclose(np.abs(ps.alpha) ** 2, np.exp(-ps.tau / 200e-9), rtol=1e-12)


def test_plos_mask_keeps_first_row(full_geometry):
    _, mask, imp = make_scenario("outdoor_plos", 0, full_geometry)
    unattenuated = np.flatnonzero(np.abs(mask.multipliers) == 1.0)
    assert unattenuated.size == 16
    np.testing.assert_array_equal(full_geometry.port_rows()[unattenuated], 0)
    others = np.abs(np.delete(mask.multipliers, unattenuated))
    np.testing.assert_allclose(20 * np.log10(others), -15.0)
    assert mask.path_indices == (0,) and imp.plos_mask is mask


def test_scenario_snr_presets():
    assert make_scenario("chamber_los", 0)[2].snr_db == 40.0
    assert make_scenario("outdoor_los", 0)[2].snr_db == 30.0


def test_scenario_determinism(desk_pattern, desk_geometry):
    for kind in ("chamber_los", "outdoor_los", "outdoor_plos", "outdoor_nlos"):
        a, ma, _ = make_scenario(kind, 17, desk_geometry)
        b, mb, _ = make_scenario(kind, 17, desk_geometry)
        ha = synthesize_channel(a, desk_pattern, GRID, ma).values
        hb = synthesize_channel(b, desk_pattern, GRID, mb).values
        np.testing.assert_array_equal(ha, hb)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        make_scenario("indoor", 0)


def test_impairment_validation():
    with pytest.raises(ValueError):
        ImpairmentSpec(calib_phase_sigma_deg=-1.0)
    with pytest.raises(ValueError):
        ImpairmentSpec(spherical_source_distance_m=0.0)
    assert not ImpairmentSpec().perturbs_calibration
    assert ImpairmentSpec(calib_gain_sigma_db=0.5).perturbs_calibration


def test_normalize_to_band_gives_unit_power(desk_pattern, rng):
    ps = _random_paths(rng, 4)
    scaled, scale = normalize_to_band(ps, desk_pattern, DEFAULT_GRID, DEFAULT_TRAINING_BAND)
    h = synthesize_channel(scaled, desk_pattern, DEFAULT_GRID)
    p = np.mean(np.abs(select_band(h, DEFAULT_TRAINING_BAND).values) ** 2)
    assert p == pytest.approx(1.0, rel=1e-12)
    assert scale > 0


def test_channel_matrix_checks():
    with pytest.raises(ValueError):
        ChannelMatrix(GRID, np.zeros((2, 5)))
    with pytest.raises(ValueError):
        ChannelMatrix(GRID, np.full((1, GRID.count), np.nan))
    with pytest.raises(ValueError):
        ChannelMatrix(GRID, np.zeros((1, GRID.count)), role="other")


def test_chx1_round_trip(tmp_path, rng):
    v = rng.standard_normal((3, GRID.count)) + 1j * rng.standard_normal((3, GRID.count))
    h = ChannelMatrix(GRID, v, role="sage")
    write_chx1(h, tmp_path / "h.chx1")
    header = json.loads((tmp_path / "h.chx1").read_text())
    assert header["magic"] == "CHX1" and header["ports"] == 3 and header["role"] == "sage"
    raw = np.frombuffer((tmp_path / "h.chx1.bin").read_bytes(), dtype="<f8")
    assert raw[0] == v[0, 0].real and raw[1] == v[0, 0].imag and raw[2] == v[0, 1].real
    g = read_chx1(tmp_path / "h.chx1")
    np.testing.assert_array_equal(g.values, v)
    assert g.freqs == GRID and g.role == "sage"


def test_chx1_truncated_payload(tmp_path):
    h = ChannelMatrix(GRID, np.ones((2, GRID.count)))
    write_chx1(h, tmp_path / "h.chx1")
    data = (tmp_path / "h.chx1.bin").read_bytes()
    (tmp_path / "h.chx1.bin").write_bytes(data[:-16])
    with pytest.raises(ValueError):
        read_chx1(tmp_path / "h.chx1")


def test_pathset_json_round_trip(tmp_path, rng):
    ps = _random_paths(rng, 4)
    write_pathset(ps, tmp_path / "p.json")
    doc = json.loads((tmp_path / "p.json").read_text())
    assert set(doc[0]) == {"alpha_re", "alpha_im", "tau_s", "phi_deg", "theta_deg"}
    back = read_pathset(tmp_path / "p.json")
    np.testing.assert_allclose(back.alpha, ps.alpha, rtol=0)
    np.testing.assert_allclose(back.tau, ps.tau, rtol=0)
    np.testing.assert_allclose(back.phi, ps.phi, rtol=1e-14)
    np.testing.assert_allclose(back.theta, ps.theta, rtol=1e-14)
    with pytest.raises(ValueError):
        pathset_from_json([{"alpha_re": 1.0}])
    assert pathset_to_json(PathSet()) == []
