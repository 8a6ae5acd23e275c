import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isacal.core import (LearnableParams, draw_impairments, freq_steering,
                         ideal_params, steering_vector)
from isacal.scenario import draw_symbols, sample_rng
from isacal.sensing_rx import (CalibrationError, Dictionaries, adm,
                               build_dictionaries, calibrate_threshold,
                               complex_map, delay_grid_for, omp, positions_from)

LAM = 5e-3
DF = 240e3
K, S = 8, 16
ANGLES = np.linspace(-np.pi / 2, np.pi / 2, 61)


def _dicts(params, x):
    delay_grid = delay_grid_for((10.0, 43.75), 32)
    return build_dictionaries(ANGLES, delay_grid, params, x, LAM, DF)


def _on_grid_observation(params, x, dicts, i, j, gain=1.0 + 0.5j):
    a = steering_vector(dicts.angle_grid[i], params, LAM)
    rho = freq_steering(dicts.delay_grid[j], S, DF)
    return gain * np.outer(a, x.symbols * rho)


def test_exact_recovery_single_on_grid_target():
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(0))
    dicts = _dicts(params, x)
    y = _on_grid_observation(params, x, dicts, 17, 9, gain=2.0 - 1.0j)
    res = omp(y, dicts, delta=-1.0, max_iter=1)
    assert (res.angle_idx[0], res.delay_idx[0]) == (17, 9)
    assert abs(res.gains[0] - (2.0 - 1.0j)) / abs(2.0 - 1.0j) <= 1e-9
    assert np.linalg.norm(res.residual) / np.linalg.norm(y) <= 1e-9


def test_exact_recovery_with_impaired_matched_dictionary():
    params = draw_impairments(K, LAM, sample_rng(4))
    assumed = LearnableParams(betas=params.gains, omegas=params.positions)
    x = draw_symbols(S, "qpsk", sample_rng(1))
    dicts = _dicts(assumed, x)
    y = _on_grid_observation(assumed, x, dicts, 30, 20)
    res = omp(y, dicts, delta=-1.0, max_iter=1)
    assert (res.angle_idx[0], res.delay_idx[0]) == (30, 20)
    assert np.linalg.norm(res.residual) / np.linalg.norm(y) <= 1e-9


def test_two_target_noiseless_recovery_and_residual_monotone():
    # coarse grids so neighboring atoms are well separated for a K=8 aperture
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(2))
    coarse_angles = np.linspace(-np.pi / 3, np.pi / 3, 9)
    coarse_delays = delay_grid_for((10.0, 43.75), 8)
    dicts = build_dictionaries(coarse_angles, coarse_delays, params, x, LAM, DF)
    y = (_on_grid_observation(params, x, dicts, 2, 1, gain=1.0)
         + _on_grid_observation(params, x, dicts, 6, 6, gain=0.7j))
    res = omp(y, dicts, delta=-1.0, max_iter=2)
    assert set(zip(res.angle_idx, res.delay_idx)) == {(2, 1), (6, 6)}
    diffs = np.diff(res.residual_sq)
    assert np.all(diffs <= 1e-12)
    assert res.residual_sq[-1] <= 1e-16 * res.residual_sq[0]


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_residual_sq_non_increasing_on_noise(seed):
    rng = sample_rng(seed)
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", rng)
    dicts = _dicts(params, x)
    y = rng.standard_normal((K, S)) + 1j * rng.standard_normal((K, S))
    res = omp(y, dicts, delta=-1.0, max_iter=5)
    assert np.all(np.diff(res.residual_sq) <= 1e-9 * res.residual_sq[0])
    # residual tracking matches the explicitly reconstructed residual
    assert res.residual_sq[-1] == pytest.approx(
        float(np.linalg.norm(res.residual) ** 2), rel=1e-6, abs=1e-12)


def test_adm_is_squared_magnitude_of_complex_map(rng):
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(7))
    dicts = _dicts(params, x)
    y = rng.standard_normal((K, S)) + 1j * rng.standard_normal((K, S))
    np.testing.assert_allclose(adm(y, dicts),
                               np.abs(complex_map(y, dicts)) ** 2, rtol=1e-12)


def test_omp_threshold_stops_detection():
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(8))
    dicts = _dicts(params, x)
    y = 1e-6 * _on_grid_observation(params, x, dicts, 3, 3)
    peak = float(np.max(adm(y, dicts)))
    assert omp(y, dicts, delta=2 * peak, max_iter=5).num_detections == 0
    assert omp(y, dicts, delta=0.5 * peak, max_iter=5).num_detections >= 1


def test_positions_from_geometry():
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(9))
    dicts = _dicts(params, x)
    y = _on_grid_observation(params, x, dicts, 40, 12)
    res = omp(y, dicts, delta=-1.0, max_iter=1)
    r = 299792458.0 * res.taus[0] / 2.0
    th = res.thetas[0]
    np.testing.assert_allclose(positions_from(res)[0],
                               [r * np.sin(th), r * np.cos(th)])


def test_dictionaries_shape_validation():
    params = ideal_params(K, LAM)
    x = draw_symbols(S, "qpsk", sample_rng(10))
    good = _dicts(params, x)
    with pytest.raises(ValueError):
        Dictionaries(phi_a=good.phi_a, phi_d=good.phi_d,
                     angle_grid=good.angle_grid[:-1], delay_grid=good.delay_grid)


def _noise_pool(n, seed, noise_var=1.0):
    params = ideal_params(K, LAM)
    obs, dicts = [], []
    for i in range(n):
        rng = sample_rng(seed, i)
        x = draw_symbols(S, "qpsk", rng)
        d = _dicts(params, x)
        w = np.sqrt(noise_var / 2) * (rng.standard_normal((K, S))
                                      + 1j * rng.standard_normal((K, S)))
        obs.append(w)
        dicts.append(d)
    return obs, dicts


def test_calibrate_threshold_hits_target_pfa():
    obs, dicts = _noise_pool(1000, 77)
    t_max = 3
    target = 0.05
    delta = calibrate_threshold(obs, dicts, target, t_max)
    count = sum(min(omp(y, d, delta, t_max + 3).num_detections, t_max)
                for y, d in zip(obs, dicts))
    emp = count / (len(obs) * t_max)
    assert emp <= target
    # the next smaller candidate threshold would overshoot: delta is tight
    maxima = sorted(float(np.max(adm(y, d))) for y, d in zip(obs, dicts))
    below = [m for m in maxima if m < delta]
    if below:
        count2 = sum(min(omp(y, d, below[-1], t_max + 3).num_detections, t_max)
                     for y, d in zip(obs, dicts))
        assert count2 / (len(obs) * t_max) > target


def test_calibrate_threshold_requires_enough_samples():
    obs, dicts = _noise_pool(10, 5)
    with pytest.raises(CalibrationError):
        calibrate_threshold(obs, dicts, 0.01, 3)


def test_calibrate_threshold_pfa_one_returns_zero():
    obs, dicts = _noise_pool(1000, 6)
    assert calibrate_threshold(obs, dicts, 1.0, 3) == 0.0
