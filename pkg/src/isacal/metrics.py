"""Batch evaluation metrics: misdetection, false alarm, GOSPA, SER, and
precoder-response diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import steering_matrix

UNDEFINED = float("nan")


@dataclass(frozen=True)
class GospaConfig:
    cutoff: float           # meters
    mu: float = 2.0         # cardinality-penalty parameter, in (0, 2]
    order: float = 2.0      # p >= 1

    def __post_init__(self):
        if self.cutoff <= 0 or not (0 < self.mu <= 2) or self.order < 1:
            raise ValueError("invalid GOSPA configuration")


@dataclass
class MetricsReport:
    p_md: float
    p_fa: float
    gospa_mean: float
    ser: float
    num_samples: int
    num_targets: int
    num_detections: int

    def as_row(self) -> dict:
        return {"p_md": self.p_md, "p_fa": self.p_fa, "gospa": self.gospa_mean,
                "ser": self.ser, "samples": self.num_samples,
                "targets": self.num_targets, "detections": self.num_detections}


def pmd(counts) -> float:
    """1 - sum(min(T, T_hat)) / sum(T); NaN when the batch has no targets."""
    t = np.array([c[0] for c in counts], dtype=float)
    t_hat = np.array([c[1] for c in counts], dtype=float)
    denom = t.sum()
    if denom <= 0:
        return UNDEFINED
    return 1.0 - np.minimum(t, t_hat).sum() / denom


def pfa(counts, t_max: int) -> float:
    """sum(max(T, T_hat) - T) / sum(T_max - T), with estimates capped at T_max."""
    t = np.array([c[0] for c in counts], dtype=float)
    t_hat = np.minimum(np.array([c[1] for c in counts], dtype=float), t_max)
    denom = (t_max - t).sum()
    if denom <= 0:
        return UNDEFINED
    return (np.maximum(t, t_hat) - t).sum() / denom


def _gospa_ordered(truth: np.ndarray, est: np.ndarray, cfg: GospaConfig,
                   brute_force: bool) -> float:
    # requires |truth| <= |est|
    n, m = truth.shape[0], est.shape[0]
    card = cfg.cutoff**cfg.order / cfg.mu * (m - n)
    if n == 0:
        return card ** (1.0 / cfg.order)
    d = np.linalg.norm(truth[:, None, :] - est[None, :, :], axis=2)
    d = np.minimum(d, cfg.cutoff) ** cfg.order
    if brute_force:
        best = min(sum(d[i, pi[i]] for i in range(n))
                   for pi in permutations(range(m)))
    else:
        rows, cols = linear_sum_assignment(d)
        best = d[rows, cols].sum()
    return (best + card) ** (1.0 / cfg.order)


def gospa(truth, est, cfg: GospaConfig, brute_force: bool = False) -> float:
    """Set-to-set position error with cutoff and cardinality penalty.

    `brute_force=True` enumerates assignment permutations (test oracle);
    the default uses the Hungarian assignment on the cutoff distance matrix.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    est = np.asarray(est, dtype=float).reshape(-1, 2)
    if truth.shape[0] > est.shape[0]:
        truth, est = est, truth
    return _gospa_ordered(truth, est, cfg, brute_force)


def ser(x: np.ndarray, x_hat: np.ndarray) -> float:
    x = np.asarray(x).ravel()
    x_hat = np.asarray(x_hat).ravel()
    if x.size != x_hat.size:
        raise ValueError("symbol blocks differ in length")
    return float(np.mean(x != x_hat))


def precoder_response(params_tx, f: np.ndarray, angle_grid: np.ndarray,
                      wavelength: float) -> np.ndarray:
    """10*log10 |a_tx(theta)^T f|^2 on the grid; params_tx may be the true
    impairments or any calibration parameters."""
    a = steering_matrix(angle_grid, params_tx, wavelength)
    resp = np.abs(a.T @ f) ** 2
    return 10.0 * np.log10(np.maximum(resp, 1e-300))
