import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thz_ocdm import InvalidParameterError, SubbandParams
from thz_ocdm.channel import (
    Reference,
    SceneConfig,
    TargetTruth,
    apply_radar_channel,
    calibrated,
    radar_echo,
    target_amplitude,
)
from thz_ocdm.constants import SPEED_OF_LIGHT
from thz_ocdm.selftest import on_grid_target
from thz_ocdm.sensing import (
    Peak,
    PeriodogramMap,
    SensingOptions,
    bins_to_params,
    crlb,
    dfnt_filter,
    dfnt_filter_direct,
    estimate_amplitude,
    peak_search,
    periodogram,
    process_subband,
    refine_peak,
    remove_payload,
)
from thz_ocdm.waveform import build_fresnel_basis, generate_payload, modulate_fft

SB64 = SubbandParams(0, 3e11, 3.9e6, 64, 64)
EXACT = SensingOptions(refine_levels=0)


def noise_free_cube(sb, targets, seed=0):
    scene = calibrated(SceneConfig(targets=tuple(targets), subbands=(sb,),
                                   reference=Reference(15.0, 0.1)))
    X = generate_payload(sb, seed)
    b = build_fresnel_basis(sb.M)
    return apply_radar_channel(X, b, scene, sb, 0, include_noise=False), X, b


def test_filter_undoes_modulation_at_zero_delay():
    X = generate_payload(SB64, 1).entries
    b = build_fresnel_basis(64)
    h = 0.25 * np.exp(1.1j)
    Y = h * modulate_fft(X, b).samples
    assert np.abs(dfnt_filter(Y, b) - h * X).max() < 1e-9


def test_filter_of_zero_and_direct_agreement():
    b = build_fresnel_basis(16)
    assert not dfnt_filter(np.zeros((16, 3)), b).any()
    rng = np.random.default_rng(0)
    for M in (8, 16, 64):
        b = build_fresnel_basis(M)
        Y = rng.standard_normal((M, 5)) + 1j * rng.standard_normal((M, 5))
        assert np.abs(dfnt_filter(Y, b) - dfnt_filter_direct(Y, b)).max() < 1e-10


def test_filter_shape_mismatch():
    with pytest.raises(InvalidParameterError):
        dfnt_filter(np.zeros((8, 2)), build_fresnel_basis(16))


def test_remove_payload_identity_and_noise():
    X = generate_payload(SubbandParams(0, 3e11, 3.9e6, 256, 256), 0).entries
    assert np.allclose(remove_payload(X, X).samples, 1.0)
    rng = np.random.default_rng(3)
    noise = (rng.standard_normal(X.shape) + 1j * rng.standard_normal(X.shape)) * np.sqrt(0.5 * 2.0)
    assert abs(np.var(remove_payload(noise, X).samples) / 2.0 - 1) < 0.05


def test_remove_payload_rejects_bad_payload():
    with pytest.raises(InvalidParameterError):
        remove_payload(np.ones((4, 4)), np.ones((4, 3)))
    X = np.ones((4, 4))
    X[1, 2] = 0
    with pytest.raises(InvalidParameterError):
        remove_payload(np.ones((4, 4)), X)


def _model_error(frac_doppler, r):
    sb = SB64
    v = frac_doppler * sb.delta_f * SPEED_OF_LIGHT / sb.f_c
    X = generate_payload(sb, 1).entries
    b = build_fresnel_basis(sb.M)
    h = 0.5
    Z = remove_payload(dfnt_filter(radar_echo(X, b, sb, TargetTruth(r, v), h), b), X).samples
    m = np.arange(sb.M)[:, None]
    n = np.arange(sb.N)[None, :]
    model = h * np.exp(2j * np.pi * (n * v / SPEED_OF_LIGHT * sb.f_c * sb.T
                                     - m * r / SPEED_OF_LIGHT * sb.delta_f))
    phase = np.vdot(model, Z) / abs(np.vdot(model, Z))
    return np.abs(Z - phase * model).max() / h, v * sb.f_c * sb.T / SPEED_OF_LIGHT


def test_payload_removal_matches_sinusoid_model_in_small_doppler_regime():
    err, _ = _model_error(1e-4, 1e-4)
    assert err < 1e-3


def test_payload_removal_error_bounded_by_in_symbol_doppler_phase():
    # the simplified model drops exp(j*2*pi*eps*m/M); the residual is first order in eps
    err, eps = _model_error(1e-2, 1e-4)
    assert err < 2 * np.pi * eps


def test_periodogram_dc():
    pmap = periodogram(np.ones((8, 8)), 32, 32)
    assert pmap.values.shape == (32, 32)
    i, j = np.unravel_index(np.argmax(pmap.values), pmap.values.shape)
    assert (i, j - 16) == (0, 0)
    assert pmap.values[i, j] == pytest.approx(64 ** 2, rel=1e-12)
    assert np.all(pmap.values >= 0)


def test_periodogram_on_grid_exponential():
    M = N = 16
    m_per, n_per = 4 * M, 4 * N
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    Z = np.exp(2j * np.pi * (n * 4 / n_per - m * 8 / m_per))
    pmap = periodogram(Z, m_per, n_per)
    peak = peak_search(pmap, 1)[0]
    assert (peak.m_bin, peak.n_bin) == (8, 4)
    # brute-force oracle of the same 2D transform at the peak bin
    direct = np.sum(Z * np.exp(2j * np.pi * m * 8 / m_per) * np.exp(-2j * np.pi * n * 4 / n_per))
    assert peak.value == pytest.approx(abs(direct) ** 2, rel=1e-12)


def test_padded_periodogram_contains_unpadded_bins():
    rng = np.random.default_rng(5)
    Z = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    m = np.arange(8)
    pmap = periodogram(Z, 32, 32)
    for mp in range(8):
        for nq in range(-4, 4):
            direct = np.sum(Z * np.exp(2j * np.pi * m[:, None] * mp / 8)
                            * np.exp(-2j * np.pi * m[None, :] * nq / 8))
            assert pmap.values[4 * mp, 4 * nq + 16] == pytest.approx(abs(direct) ** 2, rel=1e-10)


def test_periodogram_grid_must_oversample():
    with pytest.raises(InvalidParameterError):
        periodogram(np.ones((8, 8)), 8, 32)


def test_peak_search_two_separated_targets():
    M = N = 32
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    Z = (np.exp(2j * np.pi * (n * 10 / 128 - m * 20 / 128))
         + np.exp(2j * np.pi * (n * -6 / 128 - m * 60 / 128)))
    peaks = peak_search(periodogram(Z, 128, 128), 2, guard=3)
    assert {(p.m_bin, p.n_bin) for p in peaks} == {(20, 10), (60, -6)}


def test_peak_search_tie_break_on_uniform_map():
    pmap = PeriodogramMap(values=np.ones((16, 16)), m_per=16, n_per=16)
    first = peak_search(pmap, 1)[0]
    assert (first.m_bin, first.n_bin) == (0, -8)
    with pytest.raises(InvalidParameterError):
        peak_search(pmap, 0)


def test_peak_search_too_many_peaks():
    # a 7x7 exclusion zone covers the whole 6x6 map after the first peak
    pmap = PeriodogramMap(values=np.ones((6, 6)), m_per=6, n_per=6)
    with pytest.raises(InvalidParameterError):
        peak_search(pmap, 2, guard=3)


def test_bins_to_params():
    assert bins_to_params(0, 0, 1024, 1024, SB64) == (0.0, 0.0)
    sb = SubbandParams(0, 3e11, 3.9e6, 256, 256)
    r, _ = bins_to_params(512, 0, 1024, 1024, sb)
    assert r / SPEED_OF_LIGHT == pytest.approx(1.2821e-7, rel=1e-4)
    assert r == pytest.approx(38.46, abs=0.01)


def test_crlb_values_and_scaling():
    sb = SubbandParams(0, 3e11, 3.9e6, 256, 256)
    var_r, var_v = crlb(sb, 1.0)
    assert np.sqrt(var_r) == pytest.approx(4.58e-4, rel=5e-3)
    assert np.sqrt(var_v) == pytest.approx(2.32e-2, rel=5e-3)
    var_r4, var_v4 = crlb(sb, 2.0)
    assert var_r4 == pytest.approx(var_r / 4, rel=1e-14)
    assert var_v4 == pytest.approx(var_v / 4, rel=1e-14)
    assert crlb(sb, 1.0, p_avg=4.0) == pytest.approx((var_r / 4, var_v / 4), rel=1e-14)
    with pytest.raises(InvalidParameterError):
        crlb(sb, 0.0)


def test_amplitude_estimate_on_grid_and_zero():
    M = N = 32
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    Z = 0.5 * np.exp(0.7j) * np.exp(2j * np.pi * (n * 3 / 128 - m * 5 / 128))
    pmap = periodogram(Z, 128, 128)
    assert estimate_amplitude(pmap, peak_search(pmap, 1)[0]) == pytest.approx(0.5, abs=1e-6)
    zero = periodogram(np.zeros((M, N)), 128, 128)
    assert estimate_amplitude(zero, peak_search(zero, 1)[0]) == 0.0


def test_amplitude_estimate_bias_at_15_db():
    scene = calibrated(SceneConfig(targets=(TargetTruth(0.1, 23.0),), subbands=(SB64,),
                                   reference=Reference(15.0, 0.1)))
    b = build_fresnel_basis(64)
    truth = abs(target_amplitude(scene, SB64, scene.targets[0]))
    amps = []
    for trial in range(500):
        X = generate_payload(SB64, (trial, 0))
        Y = apply_radar_channel(X, b, scene, SB64, (trial, 1))
        amps.append(process_subband(Y, X, b)[0].amp_est)
    assert abs(np.mean(amps) / truth - 1) < 0.02


def test_noise_free_on_grid_exact_bins():
    for m_bin, n_bin in [(1, 5), (1, -7), (2, 0), (1, 40)]:
        t = on_grid_target(SB64, m_bin, n_bin)
        Y, X, b = noise_free_cube(SB64, [t])
        est = process_subband(Y, X, b, 1, EXACT)[0]
        assert est.range_est == pytest.approx(t.range, rel=1e-12)
        assert est.velocity_est == pytest.approx(t.velocity, rel=1e-12, abs=1e-12)


def test_noise_free_off_grid_within_half_cell():
    cell_r = SPEED_OF_LIGHT / (SB64.delta_f * 4 * SB64.M)
    cell_v = SPEED_OF_LIGHT / (SB64.f_c * SB64.T * 4 * SB64.N)
    for r, v in [(0.1, 23.0), (0.213, -12.7), (0.05, 48.1)]:
        Y, X, b = noise_free_cube(SB64, [TargetTruth(r, v)])
        coarse = process_subband(Y, X, b, 1, EXACT)[0]
        assert abs(coarse.range_est - r) <= cell_r / 2
        assert abs(coarse.velocity_est - v) <= cell_v / 2
        fine = process_subband(Y, X, b, 1)[0]
        assert abs(fine.range_est - r) <= abs(coarse.range_est - r) + 1e-12


def test_parameter_decoupling():
    t0 = on_grid_target(SB64, 1, 6)
    t1 = on_grid_target(SB64, 1, 7)
    bins = []
    for t in (t0, t1):
        Y, X, b = noise_free_cube(SB64, [t])
        bins.append(process_subband(Y, X, b, 1, EXACT)[0].range_est)
    assert bins[0] == bins[1]


def test_refine_peak_improves_off_grid_estimate():
    M = N = 32
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    fm, fn = 5.3 / 128, 3.71 / 128
    Z = np.exp(2j * np.pi * (n * fn - m * fm))
    peak = peak_search(periodogram(Z, 128, 128), 1)[0]
    fine = refine_peak(Z, peak, factor=8, levels=3)
    assert fine.m_grid == 128 * 512
    assert abs(fine.m_bin / fine.m_grid - fm) < 1 / fine.m_grid
    assert abs(fine.n_bin / fine.n_grid - fn) < 1 / fine.n_grid
    assert fine.value >= peak.value


def test_two_target_chain_noise_free():
    sb = SubbandParams(0, 3e11, 3.9e6, 64, 64)
    ta = on_grid_target(sb, 1, 12)
    tb = on_grid_target(sb, 1, -20)
    Y, X, b = noise_free_cube(sb, [ta, tb])
    est = process_subband(Y, X, b, 2, EXACT)
    assert sorted(e.velocity_est for e in est) == pytest.approx(sorted([ta.velocity, tb.velocity]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_range_estimate_within_unambiguous_span(seed):
    rng = np.random.default_rng(seed)
    sb = SubbandParams(0, 3e11, 3.9e6, 16, 8)
    Y = rng.standard_normal((16, 8)) + 1j * rng.standard_normal((16, 8))
    X = np.exp(2j * np.pi * rng.random((16, 8)))
    from thz_ocdm.channel import ReceivedCube
    for e in process_subband(ReceivedCube(Y, sb), X, build_fresnel_basis(16), 2):
        assert 0 <= e.range_est < SPEED_OF_LIGHT / sb.delta_f
        assert e.var_range > 0 and e.var_velocity > 0


def test_options_validation():
    with pytest.raises(InvalidParameterError):
        SensingOptions(oversampling=(1, 4))
    with pytest.raises(InvalidParameterError):
        SensingOptions(refine_factor=1)
    assert isinstance(Peak(0, 0, 4, 4, 1.0), Peak)
