import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isacal.core import draw_impairments, ideal_params
from isacal.precoder import (DegenerateCombinationError, Precoder,
                             isac_precoder, log_pdf_grad, perturb,
                             sector_grid_indices, sector_precoder)
from isacal.scenario import Sector

LAM = 5e-3
GRID = np.linspace(-np.pi / 2, np.pi / 2, 181)


def test_sector_precoder_unit_norm():
    f = sector_precoder(Sector(-0.5, -0.2), GRID, ideal_params(8, LAM), LAM)
    assert np.linalg.norm(f) == pytest.approx(1.0)


@given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_isac_precoder_carries_full_power(omega_r, seed):
    rng = np.random.default_rng(seed)
    params = draw_impairments(8, LAM, rng)
    f_s = sector_precoder(Sector(-0.6, -0.3), GRID, params, LAM)
    f_c = sector_precoder(Sector(0.2, 0.5), GRID, params, LAM)
    f = isac_precoder(f_s, f_c, omega_r, 0.1)
    assert np.linalg.norm(f.weights) ** 2 == pytest.approx(0.1)


def test_isac_precoder_endpoints():
    params = ideal_params(8, LAM)
    f_s = sector_precoder(Sector(-0.6, -0.3), GRID, params, LAM)
    f_c = sector_precoder(Sector(0.2, 0.5), GRID, params, LAM)
    np.testing.assert_allclose(isac_precoder(f_s, f_c, 1.0, 0.1).weights,
                               np.sqrt(0.1) * f_s, atol=1e-12)
    np.testing.assert_allclose(isac_precoder(f_s, f_c, 0.0, 0.1).weights,
                               np.sqrt(0.1) * f_c, atol=1e-12)


def test_isac_precoder_degenerate_combination():
    params = ideal_params(8, LAM)
    f_s = sector_precoder(Sector(-0.6, -0.3), GRID, params, LAM)
    with pytest.raises(DegenerateCombinationError):
        isac_precoder(f_s, -f_s, 0.5, 0.1)


def test_isac_precoder_rejects_bad_omega():
    params = ideal_params(8, LAM)
    f = sector_precoder(Sector(-0.6, -0.3), GRID, params, LAM)
    with pytest.raises(ValueError):
        isac_precoder(f, f, 1.5, 0.1)


def test_sector_grid_fallback_on_empty_intersection():
    # sector narrower than the grid step still selects its nearest point
    narrow = Sector(0.01001, 0.01002)
    idx = sector_grid_indices(narrow, GRID)
    assert idx.size == 1
    assert abs(GRID[idx[0]] - 0.01) < np.pi / 180


def test_perturbation_statistics():
    rng = np.random.default_rng(7)
    f = Precoder(weights=np.zeros(4, dtype=complex), power=0.1)
    sigma = 0.025
    draws = np.array([perturb(f, sigma, rng).weights for _ in range(20_000)])
    var = np.mean(np.abs(draws) ** 2)
    assert var == pytest.approx(sigma**2, rel=0.03)
    assert abs(np.mean(draws)) < 5e-4


def test_log_pdf_grad_zero_at_mean():
    pp = perturb(Precoder(weights=np.ones(4, dtype=complex), power=1.0),
                 0.01, np.random.default_rng(0))
    pp_zero = type(pp)(weights=pp.mean, mean=pp.mean, sigma=pp.sigma)
    jac = np.random.default_rng(1).standard_normal((4, 12)) * (1 + 1j)
    np.testing.assert_allclose(log_pdf_grad(pp_zero, jac), np.zeros(12))


def test_log_pdf_grad_matches_formula():
    rng = np.random.default_rng(2)
    f = Precoder(weights=rng.standard_normal(4) + 1j * rng.standard_normal(4),
                 power=1.0)
    pp = perturb(f, 0.05, rng)
    jac = rng.standard_normal((4, 12)) + 1j * rng.standard_normal((4, 12))
    eps = pp.weights - pp.mean
    expected = (2.0 / 0.05**2) * np.real(np.conj(jac).T @ eps)
    np.testing.assert_allclose(log_pdf_grad(pp, jac), expected)
