"""Subcarrier-wise maximum-likelihood symbol detection at the UE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CommObservation
from .scenario import CONSTELLATIONS


@dataclass(frozen=True)
class DetectionResult:
    symbols: np.ndarray     # detected symbols, length S
    indices: np.ndarray     # constellation indices, length S
    metrics: np.ndarray     # S x |X| squared distances
    csi_zero: bool = False  # some subcarrier had zero CSI; decisions degenerate there


def ml_metrics(y: np.ndarray, csi: np.ndarray, constellation: str) -> np.ndarray:
    """Per-subcarrier squared distances |y_s - kappa_s * x|^2 for all x."""
    points = CONSTELLATIONS[constellation]
    diff = y[:, None] - csi[:, None] * points[None, :]
    return np.real(diff * np.conj(diff))


def ml_detect(obs: CommObservation, constellation: str) -> DetectionResult:
    """Minimum-distance (ML) detection; ties resolve to the lowest index."""
    metrics = ml_metrics(obs.y, obs.csi, constellation)
    idx = np.argmin(metrics, axis=1)  # argmin returns the first minimizer
    points = CONSTELLATIONS[constellation]
    return DetectionResult(symbols=points[idx], indices=idx, metrics=metrics,
                           csi_zero=obs.csi_zero)
