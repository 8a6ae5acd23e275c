"""Array geometry, steering vectors, and impairment models.

All arrays are uniform linear arrays (ULAs) with signed element positions
(first element negative, centered around zero).  Steering-vector phases use
the uniform convention  a_k = g_k * exp(-j*2*pi*(pos_k/lambda)*sin(theta)),
which reproduces the textbook half-wavelength ULA response when the
positions are ideal and the gains are one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class InvalidConfigError(ValueError):
    """A configuration value violates its contract."""


def _check_gain_position_invariants(gains: np.ndarray, positions: np.ndarray,
                                    what: str) -> None:
    if gains.shape != positions.shape or gains.ndim != 1:
        raise InvalidConfigError(f"{what}: gains/positions must be 1-D with equal length")
    if np.any(np.abs(gains) > 1.0 + 1e-12):
        raise InvalidConfigError(f"{what}: gain magnitudes must be <= 1")
    if np.any(np.diff(positions) <= 0.0):
        raise InvalidConfigError(f"{what}: positions must be strictly increasing")


@dataclass(frozen=True)
class ArrayImpairments:
    """Ground-truth per-element complex gains and element positions (m)."""

    gains: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=complex))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        _check_gain_position_invariants(self.gains, self.positions, "ArrayImpairments")

    @property
    def num_antennas(self) -> int:
        return self.gains.size


@dataclass(frozen=True)
class LearnableParams:
    """Calibration parameters: complex gains `betas` and positions `omegas` (m).

    Invariants (|betas| <= 1, omegas strictly increasing) are enforced by the
    trainer's projection step; the constructor checks them.
    """

    betas: np.ndarray
    omegas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=complex))
        object.__setattr__(self, "omegas", np.asarray(self.omegas, dtype=float))
        _check_gain_position_invariants(self.betas, self.omegas, "LearnableParams")

    @property
    def num_antennas(self) -> int:
        return self.betas.size

    @property
    def gains(self) -> np.ndarray:  # uniform access with ArrayImpairments
        return self.betas

    @property
    def positions(self) -> np.ndarray:
        return self.omegas


@dataclass(frozen=True)
class WaveformConfig:
    """OFDM waveform and array bookkeeping shared by all modules."""

    num_subcarriers: int
    subcarrier_spacing: float  # Hz
    wavelength: float          # m
    tx_power: float            # W
    num_antennas: int
    field_of_view: float = np.pi / 2  # rad
    noise_psd: float = 1.0     # W/Hz, sensing-side default; overwritten at load

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise InvalidConfigError("num_subcarriers must be >= 1")
        if self.num_antennas < 2:
            raise InvalidConfigError("num_antennas must be >= 2")
        for name in ("subcarrier_spacing", "wavelength", "tx_power",
                     "field_of_view", "noise_psd"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be strictly positive")

    @property
    def noise_var(self) -> float:
        """Per-sample AWGN variance N0*S*delta_f."""
        return self.noise_psd * self.num_subcarriers * self.subcarrier_spacing


def ideal_positions(num_antennas: int, wavelength: float) -> np.ndarray:
    """Half-wavelength-spaced ULA positions centered around zero."""
    if num_antennas < 2:
        raise InvalidConfigError("ideal_positions needs at least 2 antennas")
    k = np.arange(num_antennas, dtype=float)
    return (k - (num_antennas - 1) / 2.0) * wavelength / 2.0


def ideal_params(num_antennas: int, wavelength: float) -> LearnableParams:
    """Unit gains and ideal positions: the no-impairment-knowledge point."""
    return LearnableParams(betas=np.ones(num_antennas, dtype=complex),
                           omegas=ideal_positions(num_antennas, wavelength))


def steering_vector(theta: float, params, wavelength: float) -> np.ndarray:
    """Impaired/parameterized array response at angle `theta` (rad).

    `params` may be ArrayImpairments or LearnableParams; both expose
    `gains` and `positions`.
    """
    phase = -TWO_PI * params.positions / wavelength * np.sin(theta)
    return params.gains * np.exp(1j * phase)


def steering_matrix(thetas: np.ndarray, params, wavelength: float) -> np.ndarray:
    """Steering vectors for a grid of angles, stacked as columns (K x N)."""
    thetas = np.asarray(thetas, dtype=float)
    phase = -TWO_PI * np.outer(params.positions, np.sin(thetas)) / wavelength
    return params.gains[:, None] * np.exp(1j * phase)


def freq_steering(tau: float, num_subcarriers: int, subcarrier_spacing: float) -> np.ndarray:
    """Frequency-domain steering vector exp(-j*2*pi*s*delta_f*tau), s=0..S-1."""
    s = np.arange(num_subcarriers, dtype=float)
    return np.exp(-1j * TWO_PI * s * subcarrier_spacing * tau)


def freq_steering_matrix(taus: np.ndarray, num_subcarriers: int,
                         subcarrier_spacing: float) -> np.ndarray:
    """Frequency steering vectors for a delay grid, stacked as columns (S x N)."""
    taus = np.asarray(taus, dtype=float)
    s = np.arange(num_subcarriers, dtype=float)
    return np.exp(-1j * TWO_PI * subcarrier_spacing * np.outer(s, taus))


def draw_impairments(num_antennas: int, wavelength: float,
                     rng: np.random.Generator,
                     position_spread: float | None = None) -> ArrayImpairments:
    """Sample gain-phase and displacement impairments for one ULA.

    Positions are the ideal grid plus U[-spread, spread] offsets (default
    spread lambda/5, which can never break monotonicity at lambda/2 spacing);
    gain magnitudes are U[0.95, 1] and phases U[-pi/2, pi/2].
    """
    if position_spread is None:
        position_spread = wavelength / 5.0
    p_ideal = ideal_positions(num_antennas, wavelength)
    positions = p_ideal + rng.uniform(-position_spread, position_spread, num_antennas)
    # Redraw offending elements if a user-supplied wide spread breaks ordering.
    for _ in range(1000):
        bad = np.flatnonzero(np.diff(positions) <= 0.0)
        if bad.size == 0:
            break
        idx = bad[0] + 1
        positions[idx] = p_ideal[idx] + rng.uniform(-position_spread, position_spread)
    mag = rng.uniform(0.95, 1.0, num_antennas)
    phase = rng.uniform(-np.pi / 2, np.pi / 2, num_antennas)
    gains = mag * np.exp(1j * phase)
    return ArrayImpairments(gains=gains, positions=positions)
