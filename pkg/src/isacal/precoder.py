"""Sector precoders, ISAC power combination, and training-time perturbation.

The sector precoder sums conjugated steering vectors over the grid points
falling inside the sector and normalizes to unit norm; the ISAC precoder
mixes the sensing and communication beams and carries the full transmit
power exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import steering_matrix
from .scenario import Sector


class DegenerateCombinationError(ArithmeticError):
    """The sensing and communication beams cancel destructively."""


@dataclass(frozen=True)
class Precoder:
    weights: np.ndarray
    power: float


@dataclass(frozen=True)
class PerturbedPrecoder:
    weights: np.ndarray     # f + eps
    mean: np.ndarray        # f
    sigma: float


def sector_grid_indices(sector: Sector, grid: np.ndarray) -> np.ndarray:
    """Grid points inside the sector; nearest point as a fallback."""
    idx = np.flatnonzero(sector.contains(grid))
    if idx.size == 0:
        center = 0.5 * (sector.theta_min + sector.theta_max)
        idx = np.array([int(np.argmin(np.abs(grid - center)))])
    return idx


def sector_precoder(sector: Sector, grid: np.ndarray, params_tx,
                    wavelength: float) -> np.ndarray:
    """Unit-norm beam summing conjugate steering vectors across the sector."""
    idx = sector_grid_indices(sector, grid)
    a = steering_matrix(grid[idx], params_tx, wavelength)
    g = np.conj(a).sum(axis=1)
    return g / np.linalg.norm(g)


def isac_precoder(f_s: np.ndarray, f_c: np.ndarray, omega_r: float,
                  power: float) -> Precoder:
    """Power-split combination sqrt(w)*f_s + sqrt(1-w)*f_c, scaled to ||f||^2 = P."""
    if not 0.0 <= omega_r <= 1.0:
        raise ValueError("omega_r must lie in [0, 1]")
    h = np.sqrt(omega_r) * f_s + np.sqrt(1.0 - omega_r) * f_c
    norm = np.linalg.norm(h)
    if norm < 1e-9:
        raise DegenerateCombinationError("sensing and comm beams cancel")
    return Precoder(weights=np.sqrt(power) * h / norm, power=power)


def perturb(f: Precoder, sigma: float, rng: np.random.Generator) -> PerturbedPrecoder:
    """Add circular complex Gaussian exploration noise CN(0, sigma^2 I)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = f.weights.size
    eps = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) * (sigma / np.sqrt(2.0))
    return PerturbedPrecoder(weights=f.weights + eps, mean=f.weights.copy(), sigma=sigma)


def log_pdf_grad(pp: PerturbedPrecoder, jacobian: np.ndarray) -> np.ndarray:
    """Gradient of log CN(f_tilde; f, sigma^2 I) w.r.t. the TX parameters.

    `jacobian` is the complex K x P matrix of d f / d psi supplied by the
    gradients module; the Gaussian score is (2/sigma^2) Re{J^H (f_tilde - f)}.
    """
    eps = pp.weights - pp.mean
    return (2.0 / pp.sigma**2) * np.real(np.conj(jacobian).T @ eps)
