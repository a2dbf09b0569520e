import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thz_ocdm import InvalidParameterError, SubbandParams
from thz_ocdm.channel import Reference, SceneConfig, TargetTruth, calibrated
from thz_ocdm.experiments import run_trial
from thz_ocdm.fusion import combine, combined_variance, fuse_subband_estimates, optimal_weights
from thz_ocdm.sensing import SensingOptions, SubbandEstimate

variances = st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=8)


def est(k, r, v, var_r=1.0, var_v=1.0):
    return SubbandEstimate(subband_index=k, range_est=r, velocity_est=v, var_range=var_r,
                           var_velocity=var_v, peak_power=1.0, amp_est=1.0)


def test_weight_examples():
    np.testing.assert_allclose(optimal_weights([2.0, 2.0, 2.0]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(optimal_weights([1.0, 3.0]), [0.75, 0.25], atol=1e-15)
    w = optimal_weights([0.5, 1e30])
    assert abs(w[0] - 1) < 1e-15 and abs(w[1]) < 1e-15


def test_weights_reject_bad_input():
    for bad in ([], [1.0, 0.0], [1.0, -2.0]):
        with pytest.raises(InvalidParameterError):
            optimal_weights(bad)


@settings(max_examples=200, deadline=None)
@given(var=variances)
def test_weights_sum_to_one_and_attain_combined_variance(var):
    w = optimal_weights(var)
    assert abs(w.sum() - 1) < 1e-12
    assert np.all(w >= 0)
    assert abs(np.sum(w ** 2 * np.array(var)) / combined_variance(var) - 1) < 1e-12


@settings(max_examples=100, deadline=None)
@given(var=variances, scale=st.floats(1e-3, 1e3))
def test_weights_scale_invariant(var, scale):
    np.testing.assert_allclose(optimal_weights(np.array(var) * scale), optimal_weights(var),
                               rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(var=st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=8), seed=st.integers(0, 2 ** 32 - 1))
def test_weights_beat_random_simplex(var, seed):
    var = np.array(var)
    best = np.sum(optimal_weights(var) ** 2 * var)
    rival = np.random.default_rng(seed).dirichlet(np.ones(len(var)), 1000) ** 2 @ var
    assert np.all(best <= rival * (1 + 1e-12))


def test_combine_examples():
    assert combine([10.0, 14.0], optimal_weights([1.0, 3.0])) == pytest.approx(11.0, abs=1e-12)
    assert combine([3.25] * 4, [0.1, 0.2, 0.3, 0.4]) == 3.25
    with pytest.raises(InvalidParameterError):
        combine([1.0, 2.0], [1.0])
    with pytest.raises(InvalidParameterError):
        combine([1.0, 2.0], [0.6, 0.6])


def test_monte_carlo_combined_variance():
    var = np.array([1.0, 2.0, 4.0, 8.0])
    rng = np.random.default_rng(0)
    draws = rng.standard_normal((100_000, 4)) * np.sqrt(var)
    emp = np.var(draws @ optimal_weights(var))
    assert combined_variance(var) == pytest.approx(0.5333, abs=1e-4)
    assert abs(emp / combined_variance(var) - 1) < 0.05


def test_single_subband_passthrough():
    e = est(2, 0.1, 23.0, 1e-8, 1e-4)
    f = fuse_subband_estimates({2: [e]}, 1)[0]
    assert (f.range, f.velocity) == (0.1, 23.0)
    np.testing.assert_array_equal(f.weights_range, [1.0])
    assert f.contributing == (2,)


def test_fused_error_below_every_subband():
    rng = np.random.default_rng(1)
    var = np.array([1.0, 2.0, 4.0, 8.0]) * 1e-6
    errs = []
    for _ in range(10_000):
        e = rng.standard_normal(4) * np.sqrt(var)
        groups = [[est(k, 1.0 + e[k], 0.0, var[k], 1.0)] for k in range(4)]
        errs.append(fuse_subband_estimates(groups, 1)[0].range - 1.0)
    assert np.var(errs) < var.min()


def test_association_two_targets_out_of_order():
    a = [est(0, 0.1, 20.0, 1e-8, 1e-4), est(0, 0.2, -5.0, 1e-8, 1e-4)]
    b = [est(1, 0.2, -5.0, 1e-8, 1e-4), est(1, 0.1, 20.0, 1e-8, 1e-4)]
    fused = fuse_subband_estimates({0: a, 1: b}, 2)
    assert [(f.range, f.velocity) for f in fused] == [pytest.approx((0.1, 20.0)),
                                                      pytest.approx((0.2, -5.0))]


def test_fusion_rejects_inconsistent_groups():
    with pytest.raises(InvalidParameterError):
        fuse_subband_estimates({0: [est(0, 1, 1)], 1: [est(1, 1, 1), est(1, 2, 2)]}, 1)
    with pytest.raises(InvalidParameterError):
        fuse_subband_estimates({}, 1)


def test_two_targets_end_to_end_noise_free():
    # separated in velocity; mutual sidelobe leakage leaves a small bias, far below
    # the 15 m/s Doppler resolution at N = 256
    subs = tuple(SubbandParams(i, 3e11 + i * 5e10, 3.9e6, 256, 256) for i in range(2))
    truth = (TargetTruth(0.05, 45.0), TargetTruth(0.12, -30.0))
    scene = calibrated(SceneConfig(targets=truth, subbands=subs, reference=Reference(15.0, 0.1)))
    out = run_trial(scene, 0, SensingOptions(), random_phase=False, include_noise=False)
    assert out.fused[0].contributing == (0, 1)
    for f in out.fused:
        t = min(truth, key=lambda t: abs(t.velocity - f.velocity))
        assert abs(f.velocity - t.velocity) < 2.5
        assert abs(f.range - t.range) < 1e-3
    assert {min(range(2), key=lambda p: abs(truth[p].velocity - f.velocity)) for f in out.fused} == {0, 1}
