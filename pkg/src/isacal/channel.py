"""Opaque forward simulation of the impaired sensing and communication channels.

Training code may only consume the outputs of this module; no derivative
information is exposed here.  The supervised baseline's differentiable
channel lives in `gradients` so the unsupervised path cannot touch it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ArrayImpairments, WaveformConfig, steering_vector, freq_steering
from .scenario import CommScene, SensingScene, SymbolBlock


@dataclass(frozen=True)
class SensingObservation:
    y: np.ndarray   # K x S spatial-frequency observations


@dataclass(frozen=True)
class CommObservation:
    y: np.ndarray       # length S
    csi: np.ndarray     # length S, the channel the UE equalizes against
    csi_zero: bool = False


def _awgn(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    if noise_var == 0.0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(noise_var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sensing_forward(scene: SensingScene, f: np.ndarray, x: SymbolBlock,
                    tx_imp: ArrayImpairments, rx_imp: ArrayImpairments,
                    wf: WaveformConfig, n0: float,
                    rng: np.random.Generator) -> SensingObservation:
    """Backscatter observation Y built from the TRUE array impairments."""
    k, s = rx_imp.num_antennas, x.symbols.size
    y = np.zeros((k, s), dtype=complex)
    for alpha, theta, tau in zip(scene.alphas, scene.thetas, scene.delays):
        a_rx = steering_vector(theta, rx_imp, wf.wavelength)
        a_tx = steering_vector(theta, tx_imp, wf.wavelength)
        rho = freq_steering(tau, s, wf.subcarrier_spacing)
        y += alpha * (a_tx @ f) * np.outer(a_rx, x.symbols * rho)
    y += _awgn((k, s), n0 * s * wf.subcarrier_spacing, rng)
    return SensingObservation(y=y)


def comm_csi(scene: CommScene, f: np.ndarray, tx_imp: ArrayImpairments,
             wf: WaveformConfig, num_subcarriers: int) -> np.ndarray:
    """Per-subcarrier channel the UE estimates from pilots (noise-free)."""
    kappa = np.zeros(num_subcarriers, dtype=complex)
    for alpha, theta, tau in zip(scene.alphas, scene.thetas, scene.delays):
        a_tx = steering_vector(theta, tx_imp, wf.wavelength)
        kappa += alpha * (a_tx @ f) * freq_steering(tau, num_subcarriers,
                                                    wf.subcarrier_spacing)
    return kappa


def comm_forward(scene: CommScene, f: np.ndarray, x: SymbolBlock,
                 tx_imp: ArrayImpairments, wf: WaveformConfig, n0: float,
                 rng: np.random.Generator) -> CommObservation:
    """UE observation y = kappa .* x + w with the exact pilot-estimated CSI."""
    s = x.symbols.size
    kappa = comm_csi(scene, f, tx_imp, wf, s)
    y = kappa * x.symbols + _awgn(s, n0 * s * wf.subcarrier_spacing, rng)
    return CommObservation(y=y, csi=kappa, csi_zero=bool(np.any(kappa == 0)))
