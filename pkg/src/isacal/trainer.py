"""Projected online gradient descent over the 6K calibration parameters.

Every iteration draws a fresh batch, simulates both channels with the true
impairments under the current (optionally perturbed) precoder, assembles the
gradient (direct RX terms plus the score-function TX estimator, or the
privileged supervised gradients), takes a split-learning-rate Adam step,
runs the plateau scheduler, and projects back onto the feasible set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .channel import CommObservation, comm_forward, sensing_forward
from .core import LearnableParams, ideal_params
from .gradients import (adjoint_slcb_comm, adjoint_slcb_sensing,
                        grad_adm_max_rx, grad_omp_residual_rx,
                        grad_slcb_sensing_rx, pack_params, precoder_jacobian,
                        priv_comm_tx_grad, priv_sensing_tx_grad, rx_slice,
                        score_function_grad, tx_slice, unpack_params)
from .losses import loss_comm_energy, slcb_comm_loss, slcb_sensing_loss
from .precoder import PerturbedPrecoder
from .scenario import (ExperimentConfig, draw_comm_scene, draw_sensing_scene,
                       draw_sectors, draw_symbols, sample_rng)
from .sensing_rx import adm, build_dictionaries, delay_grid_for, omp

TRAIN_LOG_HEADER = ("iter", "loss", "sens_loss", "comm_loss",
                    "lr_mult_gain", "lr_mult_pos", "grad_norm_tx", "grad_norm_rx")

CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def project(vec: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the feasible set: |beta| <= 1 per element
    (magnitude clamp, phase preserved) and sorted, strictly increasing
    position segments (tie-split by a 1e-12 nudge)."""
    out = np.array(vec, dtype=float)
    k = out.size // 6
    for off in (0, 3 * k):
        re = out[off:off + k]
        im = out[off + k:off + 2 * k]
        mag = np.hypot(re, im)
        big = mag > 1.0
        if np.any(big):
            re[big] /= mag[big]
            im[big] /= mag[big]
        w = np.sort(out[off + 2 * k:off + 3 * k])
        ties = np.flatnonzero(np.diff(w) <= 0.0)
        while ties.size:
            w[ties + 1] = w[ties] + 1e-12
            ties = np.flatnonzero(np.diff(w) <= 0.0)
        out[off + 2 * k:off + 3 * k] = w
    return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def lr_vector(k: int, lr_gains: float, lr_positions: float) -> np.ndarray:
    """Per-coordinate learning rates: gain segments vs position segments."""
    lrs = np.empty(6 * k)
    for off in (0, 3 * k):
        lrs[off:off + 2 * k] = lr_gains
        lrs[off + 2 * k:off + 3 * k] = lr_positions
    return lrs


def adam_step(params: np.ndarray, state: AdamState, gradient: np.ndarray,
              lrs: np.ndarray) -> np.ndarray:
    """Standard Adam with bias correction; `lrs` is the per-coordinate rate."""
    if not np.all(np.isfinite(gradient)):
        raise FloatingPointError("non-finite gradient in Adam step")
    state.step += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * gradient
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * gradient**2
    m_hat = state.m / (1.0 - ADAM_BETA1**state.step)
    v_hat = state.v / (1.0 - ADAM_BETA2**state.step)
    return params - lrs * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class PlateauScheduler:
    """Min-mode plateau scheduler with a relative improvement threshold.

    The multiplier halves once the loss has failed to improve on the best
    seen value by a relative 1e-4 for `patience` consecutive iterations;
    after a decay no further decay happens for `cooldown` iterations.
    """

    factor: float = 0.5
    patience: int = 500
    cooldown: int = 500
    threshold: float = 1e-4
    best: float = np.inf
    num_bad: int = 0
    cooldown_left: int = 0
    multiplier: float = 1.0

    def step(self, loss: float) -> float:
        if np.isinf(self.best):
            improved = True
        else:
            improved = loss < self.best - abs(self.best) * self.threshold
        if loss < self.best:
            self.best = loss
        if self.cooldown_left > 0:
            self.cooldown_left -= 1
            self.num_bad = 0
            return self.multiplier
        if improved:
            self.num_bad = 0
        else:
            self.num_bad += 1
            if self.num_bad >= self.patience:
                self.multiplier *= self.factor
                self.cooldown_left = self.cooldown
                self.num_bad = 0
        return self.multiplier


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def append(self, **kwargs) -> None:
        self.rows.append(tuple(kwargs[h] for h in TRAIN_LOG_HEADER))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAIN_LOG_HEADER)
            w.writerows(self.rows)


@dataclass
class TrainResult:
    params: np.ndarray
    tx: LearnableParams
    rx: LearnableParams
    log: TrainLog
    adam: AdamState
    scheduler: PlateauScheduler
    seed: int


def save_checkpoint(path, result: TrainResult, config: ExperimentConfig) -> None:
    np.savez(path,
             version=CHECKPOINT_VERSION,
             params=result.params,
             adam_m=result.adam.m,
             adam_v=result.adam.v,
             adam_step=result.adam.step,
             sched_state=np.array([result.scheduler.best, result.scheduler.num_bad,
                                   result.scheduler.cooldown_left,
                                   result.scheduler.multiplier]),
             seed=result.seed,
             config_yaml=config.to_yaml())


def load_checkpoint(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        return {k: data[k].copy() if hasattr(data[k], "copy") else data[k]
                for k in data.files}


def initial_params(num_antennas: int, wavelength: float) -> np.ndarray:
    """No-impairment-knowledge starting point: unit gains, ideal positions."""
    ideal = ideal_params(num_antennas, wavelength)
    return pack_params(ideal, ideal)


@dataclass
class _Sample:
    """Per-sample simulation results plus the pieces gradient assembly needs.

    Sensing-side and comm-side TX gradients are kept apart because the
    supervised mode averages them over different sample counts."""
    sens_loss: float
    comm_loss: float
    eta: float
    grad_rx: np.ndarray
    grad_tx_sens: np.ndarray
    grad_tx_comm: np.ndarray
    sens_valid: bool = True     # False for SLCB samples with zero targets


def _simulate_sample(config: ExperimentConfig, params_tx: LearnableParams,
                     params_rx: LearnableParams, tx_imp, rx_imp, grid,
                     mode: str, rng: np.random.Generator) -> _Sample:
    wf = config.waveform
    k = wf.num_antennas
    sector_s, sector_c = draw_sectors(config, rng)
    omega_r = float(rng.uniform())
    eta = omega_r if config.loss.eta_mode == "tied" else config.loss.eta_value
    x = draw_symbols(wf.num_subcarriers, config.constellation, rng)
    scene_s = draw_sensing_scene(config, sector_s, rng)
    scene_c = draw_comm_scene(config, sector_c, rng)

    f_bar, jac = precoder_jacobian(sector_s, sector_c, grid, params_tx,
                                   omega_r, wf.tx_power, wf.wavelength)
    sigma = config.precoder.sigma_over_lambda * wf.wavelength
    if mode in ("unsupervised", "slcb_perturbed"):
        eps = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) \
            * (sigma / np.sqrt(2.0))
        f_use = f_bar + eps
    else:
        f_use = f_bar

    # Losses are computed on noise-normalized observations so the optimizer
    # sees O(1) magnitudes; detection and the physical metrics are
    # scale-invariant, so this is purely a units choice.
    bw = wf.num_subcarriers * wf.subcarrier_spacing
    scale_s = 1.0 / np.sqrt(config.n0_sensing * bw)
    scale_c = 1.0 / np.sqrt(config.n0_comm * bw)
    y = scale_s * sensing_forward(scene_s, f_use, x, tx_imp, rx_imp, wf,
                                  config.n0_sensing, rng).y
    raw_c = comm_forward(scene_c, f_use, x, tx_imp, wf, config.n0_comm, rng)
    obs_c = CommObservation(y=scale_c * raw_c.y, csi=scale_c * raw_c.csi,
                            csi_zero=raw_c.csi_zero)

    grad_rx = np.zeros(3 * k)
    grad_tx_sens = np.zeros(3 * k)
    grad_tx_comm = np.zeros(3 * k)
    sens_valid = True

    if mode == "unsupervised":
        delay_grid = delay_grid_for(scene_s.range_interval, config.n_tau)
        dicts = build_dictionaries(grid, delay_grid, params_rx, x,
                                   wf.wavelength, wf.subcarrier_spacing)
        if config.loss.sensing_kind == "adm_max":
            power = adm(y, dicts)
            cell = np.unravel_index(int(np.argmax(power)), power.shape)
            sens_loss = -float(power[cell])
            grad_rx = grad_adm_max_rx(y, dicts, cell, params_rx, wf.wavelength)
        else:
            res = omp(y, dicts, delta=-1.0, max_iter=config.loss.omp_iters)
            sens_loss = res.residual_sq[-1]
            grad_rx = grad_omp_residual_rx(y, dicts, res.angle_idx,
                                           res.delay_idx, params_rx,
                                           wf.wavelength)
        comm_loss = loss_comm_energy(obs_c)
        total = eta * sens_loss + (1.0 - eta) * comm_loss
        pp = PerturbedPrecoder(weights=f_use, mean=f_bar, sigma=sigma)
        grad_tx_comm = score_function_grad(total, pp, jac)
        grad_rx = eta * grad_rx
    else:  # slcb / slcb_perturbed: privileged gradients, true labels
        if scene_s.num_targets > 0:
            sens_loss = slcb_sensing_loss(y, scene_s, params_rx, x,
                                          wf.wavelength, wf.subcarrier_spacing)
            grad_rx = eta * grad_slcb_sensing_rx(y, scene_s, params_rx, x,
                                                 wf.wavelength,
                                                 wf.subcarrier_spacing)
            g_sens = adjoint_slcb_sensing(y, scene_s, params_rx, x,
                                          wf.wavelength, wf.subcarrier_spacing)
            # the adjoint lives in noise units; rescale for the physical chain
            grad_tx_sens = eta * priv_sensing_tx_grad(scene_s, tx_imp, rx_imp,
                                                      wf, x, jac,
                                                      scale_s * g_sens)
        else:
            sens_loss = 0.0
            sens_valid = False
        comm_loss = slcb_comm_loss(obs_c.y, obs_c.csi, x)
        g_y, g_k = adjoint_slcb_comm(obs_c.y, obs_c.csi, x)
        grad_tx_comm = (1.0 - eta) * priv_comm_tx_grad(
            scene_c, tx_imp, wf, x, jac, scale_c * g_y, scale_c * g_k)

    return _Sample(sens_loss=sens_loss, comm_loss=comm_loss, eta=eta,
                   grad_rx=grad_rx, grad_tx_sens=grad_tx_sens,
                   grad_tx_comm=grad_tx_comm, sens_valid=sens_valid)


def train(config: ExperimentConfig, tx_imp, rx_imp, seed: int,
          log_path=None, on_iteration=None) -> TrainResult:
    """Run the full calibration loop; `config.train.baseline` selects the mode.

    `on_iteration(it, params)` is called with the projected parameter vector
    after every update (instrumentation hook)."""
    mode = config.train.baseline
    if mode not in ("unsupervised", "slcb", "slcb_perturbed", "none"):
        raise ValueError(f"unknown training mode '{mode}'")
    wf = config.waveform
    k = wf.num_antennas
    grid = config.angle_grid()

    params = initial_params(k, wf.wavelength)
    adam = AdamState(m=np.zeros(6 * k), v=np.zeros(6 * k))
    sched = PlateauScheduler(factor=config.train.scheduler_factor,
                             patience=config.train.scheduler_patience,
                             cooldown=config.train.scheduler_cooldown)
    log = TrainLog()
    base_lrs = lr_vector(k, config.train.lr_gains, config.train.lr_positions)
    iterations = 0 if mode == "none" else config.train.iterations
    batch = config.train.batch

    for it in range(iterations):
        params_tx, params_rx = unpack_params(params)
        sens_sum = comm_sum = weighted_sum = 0.0
        n_sens = 0
        grad = np.zeros(6 * k)
        tx_sens_acc = np.zeros(3 * k)
        tx_comm_acc = np.zeros(3 * k)
        for j in range(batch):
            rng = sample_rng(seed, it, j)
            s = _simulate_sample(config, params_tx, params_rx, tx_imp, rx_imp,
                                 grid, mode, rng)
            if not np.isfinite(s.sens_loss) or not np.isfinite(s.comm_loss):
                raise FloatingPointError(
                    f"non-finite loss at iteration {it}, sample {j}")
            if s.sens_valid:
                sens_sum += s.eta * s.sens_loss
                n_sens += 1
            comm_sum += (1.0 - s.eta) * s.comm_loss
            weighted_sum += s.eta * s.sens_loss + (1.0 - s.eta) * s.comm_loss
            tx_sens_acc += s.grad_tx_sens
            tx_comm_acc += s.grad_tx_comm
            grad[rx_slice(k)] += s.grad_rx

        if mode == "unsupervised":
            grad[tx_slice(k)] = tx_comm_acc / batch
            grad[rx_slice(k)] /= batch
        else:
            # supervised sensing terms average over non-empty scenes only
            n_div = max(n_sens, 1)
            grad[tx_slice(k)] = tx_sens_acc / n_div + tx_comm_acc / batch
            grad[rx_slice(k)] /= n_div

        loss = weighted_sum / batch
        sens = sens_sum / max(n_sens, 1)
        comm = comm_sum / batch

        mult = sched.step(loss)
        params = adam_step(params, adam, grad, base_lrs * mult)
        params = project(params)
        if on_iteration is not None:
            on_iteration(it, params)

        log.append(iter=it, loss=loss, sens_loss=sens, comm_loss=comm,
                   lr_mult_gain=mult, lr_mult_pos=mult,
                   grad_norm_tx=float(np.linalg.norm(grad[tx_slice(k)])),
                   grad_norm_rx=float(np.linalg.norm(grad[rx_slice(k)])))

    if log_path is not None:
        log.write_csv(log_path)
    tx, rx = unpack_params(params)
    return TrainResult(params=params, tx=tx, rx=rx, log=log, adam=adam,
                       scheduler=sched, seed=seed)
