"""Scalar training objectives: unsupervised sensing and communication losses,
the batch-level ISAC combination, and the supervised (label-aware) baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CommObservation
from .core import LearnableParams, steering_vector, freq_steering
from .scenario import CONSTELLATIONS, SensingScene, SymbolBlock
from .sensing_rx import Dictionaries, adm, omp

CCE_DISTANCE_FLOOR = 1e-30


@dataclass(frozen=True)
class LossValue:
    value: float
    sensing: float
    comm: float
    eta: float


def loss_adm_max(y: np.ndarray, dicts: Dictionaries) -> float:
    """Negative global maximum of the angle-delay map."""
    return -float(np.max(adm(y, dicts)))


def loss_omp_residual(y: np.ndarray, dicts: Dictionaries, iters: int) -> float:
    """Squared Frobenius norm of the residual after exactly `iters` greedy
    iterations (threshold guard disabled)."""
    if iters == 0:
        return float(np.real(np.vdot(y, y)))
    res = omp(y, dicts, delta=-1.0, max_iter=iters)
    return res.residual_sq[-1]


def loss_comm_energy(obs: CommObservation) -> float:
    """Negative received-signal energy at the UE."""
    return -float(np.real(np.vdot(obs.y, obs.y)))


def isac_batch_loss(sensing_losses, comm_losses, etas) -> LossValue:
    """Mean of per-sample weighted losses eta*L_r + (1-eta)*L_c."""
    lr = np.asarray(sensing_losses, dtype=float)
    lc = np.asarray(comm_losses, dtype=float)
    eta = np.broadcast_to(np.asarray(etas, dtype=float), lr.shape)
    if lr.size < 1:
        raise ValueError("batch must contain at least one sample")
    weighted = eta * lr + (1.0 - eta) * lc
    return LossValue(value=float(weighted.mean()),
                     sensing=float((eta * lr).mean()),
                     comm=float(((1.0 - eta) * lc).mean()),
                     eta=float(np.mean(eta)))


def slcb_sensing_loss(y: np.ndarray, scene: SensingScene,
                      params_rx: LearnableParams, x: SymbolBlock,
                      wavelength: float, subcarrier_spacing: float) -> float:
    """Supervised sensing loss: negative mean ADM value at the true
    (off-grid) target angles and delays.  Undefined for empty scenes; the
    trainer skips those samples."""
    t = scene.num_targets
    if t == 0:
        raise ValueError("supervised sensing loss undefined for zero targets")
    total = 0.0
    s = x.symbols.size
    for theta, tau in zip(scene.thetas, scene.delays):
        u = steering_vector(theta, params_rx, wavelength)
        v = x.symbols * freq_steering(tau, s, subcarrier_spacing)
        z = np.conj(u) @ y @ np.conj(v)
        total += float(np.real(z * np.conj(z)))
    return -total / t


def slcb_comm_posteriors(y: np.ndarray, csi: np.ndarray,
                         constellation: str) -> np.ndarray:
    """Softmax(-log |y_s - kappa_s x|^2) over the constellation, per subcarrier."""
    points = CONSTELLATIONS[constellation]
    diff = y[:, None] - csi[:, None] * points[None, :]
    dist = np.maximum(np.real(diff * np.conj(diff)), CCE_DISTANCE_FLOOR)
    logits = -np.log(dist)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def slcb_comm_loss(y: np.ndarray, csi: np.ndarray, x: SymbolBlock) -> float:
    """Supervised comm loss: categorical cross-entropy between the true
    symbols and the distance-softmax posterior, averaged over subcarriers."""
    post = slcb_comm_posteriors(y, csi, x.constellation)
    s = np.arange(x.indices.size)
    p_true = np.maximum(post[s, x.indices], 1e-300)
    return float(-np.mean(np.log(p_true)))
