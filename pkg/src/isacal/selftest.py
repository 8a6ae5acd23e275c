"""Built-in validation: finite-difference checks for every analytic gradient
path and closed-form oracles for the evaluation metrics.

Shared by the `isacal selftest` subcommand and the test suite.  All checks
run on small instances (K=4, S=8, N_theta=21, N_tau=16) and return the worst
relative error so callers can assert their own tolerances.
"""

from __future__ import annotations

import numpy as np

from .channel import comm_csi
from .core import LearnableParams, draw_impairments, ideal_positions
from .gradients import (adjoint_slcb_comm, adjoint_slcb_sensing, fd_check,
                        grad_adm_max_rx, grad_omp_residual_rx,
                        grad_slcb_sensing_rx, precoder_jacobian,
                        priv_comm_tx_grad, priv_sensing_tx_grad,
                        residual_loss_pinned)
from .losses import slcb_comm_loss, slcb_sensing_loss
from .scenario import (CommScene, Sector, SensingScene, draw_symbols,
                       sample_rng)
from .sensing_rx import adm, build_dictionaries, omp

K, S, N_THETA, N_TAU = 4, 8, 21, 16
WAVELENGTH = 5e-3
SPACING = 240e3
POWER = 0.1

FD_TOL = 1e-4
FD_TOL_LS = 1e-3     # LS refit path is worse conditioned


def params_from_3k(vec: np.ndarray, k: int = K) -> LearnableParams:
    return LearnableParams(betas=vec[0:k] + 1j * vec[k:2 * k],
                           omegas=vec[2 * k:3 * k])


def params_to_3k(params: LearnableParams) -> np.ndarray:
    return np.concatenate([params.betas.real, params.betas.imag, params.omegas])


def random_instance(seed: int):
    """Small observation + dictionaries + scene for gradient checks."""
    rng = sample_rng(seed, 0x57E5)
    rx = draw_impairments(K, WAVELENGTH, rng)
    params_rx = LearnableParams(betas=0.8 * rx.gains, omegas=rx.positions)
    x = draw_symbols(S, "qpsk", rng)
    grid = np.linspace(-np.pi / 2, np.pi / 2, N_THETA)
    delay_grid = np.linspace(2 * 10.0, 2 * 43.75, N_TAU) / 299_792_458.0
    dicts = build_dictionaries(grid, delay_grid, params_rx, x, WAVELENGTH, SPACING)
    y = (rng.standard_normal((K, S)) + 1j * rng.standard_normal((K, S)))
    t = int(rng.integers(1, 4))
    sector = Sector(-np.pi / 2, np.pi / 2)
    ranges = rng.uniform(10.0, 43.75, t)
    scene = SensingScene(thetas=rng.uniform(-1.2, 1.2, t), ranges=ranges,
                         rcs=np.ones(t),
                         alphas=rng.standard_normal(t) + 1j * rng.standard_normal(t),
                         sector=sector, range_interval=(10.0, 43.75))
    return y, dicts, params_rx, x, scene, rng


def check_adm_max(seed: int) -> float:
    y, dicts, params_rx, x, _, rng = random_instance(seed)
    cell = np.unravel_index(int(np.argmax(adm(y, dicts))), adm(y, dicts).shape)
    grad = grad_adm_max_rx(y, dicts, cell, params_rx, WAVELENGTH)

    def forward(vec):
        p = params_from_3k(vec)
        u = p.betas * np.exp(-2j * np.pi * p.omegas / WAVELENGTH
                             * np.sin(dicts.angle_grid[cell[0]]))
        z = np.conj(u) @ y @ np.conj(dicts.phi_d[:, cell[1]])
        return -float(np.real(z * np.conj(z)))

    return fd_check(forward, params_to_3k(params_rx), grad, rng=rng)


def check_omp_residual(seed: int, iters: int = 2) -> float:
    y, dicts, params_rx, x, _, rng = random_instance(seed)
    res = omp(y, dicts, delta=-1.0, max_iter=iters)
    grad = grad_omp_residual_rx(y, dicts, res.angle_idx, res.delay_idx,
                                params_rx, WAVELENGTH)
    thetas = dicts.angle_grid[res.angle_idx]
    taus = dicts.delay_grid[res.delay_idx]

    def forward(vec):
        return residual_loss_pinned(y, taus, thetas, params_from_3k(vec), x,
                                    WAVELENGTH, SPACING)

    return fd_check(forward, params_to_3k(params_rx), grad, rng=rng)


def check_slcb_sensing_rx(seed: int) -> float:
    y, dicts, params_rx, x, scene, rng = random_instance(seed)
    grad = grad_slcb_sensing_rx(y, scene, params_rx, x, WAVELENGTH, SPACING)

    def forward(vec):
        return slcb_sensing_loss(y, scene, params_from_3k(vec), x,
                                 WAVELENGTH, SPACING)

    return fd_check(forward, params_to_3k(params_rx), grad, rng=rng)


def _tx_setup(seed: int):
    rng = sample_rng(seed, 0x7A3)
    tx_imp = draw_impairments(K, WAVELENGTH, rng)
    betas = rng.uniform(0.5, 0.95, K) * np.exp(1j * rng.uniform(-np.pi, np.pi, K))
    params_tx = LearnableParams(betas=betas,
                                omegas=ideal_positions(K, WAVELENGTH)
                                + rng.uniform(-1e-3, 1e-3, K))
    grid = np.linspace(-np.pi / 2, np.pi / 2, N_THETA)
    sector_s = Sector(-0.6, -0.2)
    sector_c = Sector(0.1, 0.5)
    omega_r = float(rng.uniform(0.2, 0.8))
    return rng, tx_imp, params_tx, grid, sector_s, sector_c, omega_r


def check_precoder_jacobian(seed: int) -> float:
    rng, _, params_tx, grid, sector_s, sector_c, omega_r = _tx_setup(seed)
    f0, jac = precoder_jacobian(sector_s, sector_c, grid, params_tx,
                                omega_r, POWER, WAVELENGTH)
    c = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    grad = 2.0 * np.real(np.conj(c) @ jac) / 2.0  # d Re{c^H f}/dpsi = Re{c^H J}

    def forward(vec):
        f, _ = precoder_jacobian(sector_s, sector_c, grid, params_from_3k(vec),
                                 omega_r, POWER, WAVELENGTH)
        return float(np.real(np.conj(c) @ f))

    return fd_check(forward, params_to_3k(params_tx), grad, rng=rng)


def check_priv_comm(seed: int) -> float:
    rng, tx_imp, params_tx, grid, sector_s, sector_c, omega_r = _tx_setup(seed)
    x = draw_symbols(S, "qpsk", rng)
    t = 2
    scene = CommScene(thetas=np.array([0.3, 0.4]),
                      alphas=(rng.standard_normal(t) + 1j * rng.standard_normal(t)),
                      delays=np.array([5e-8, 8e-8]), ue_range=15.0,
                      sector=Sector(-np.pi / 2, np.pi / 2))
    from .core import WaveformConfig
    wf = WaveformConfig(num_subcarriers=S, subcarrier_spacing=SPACING,
                        wavelength=WAVELENGTH, tx_power=POWER, num_antennas=K)
    w = 0.05 * (rng.standard_normal(S) + 1j * rng.standard_normal(S))

    def pipeline(params):
        f, jac = precoder_jacobian(sector_s, sector_c, grid, params,
                                   omega_r, POWER, WAVELENGTH)
        kappa = comm_csi(scene, f, tx_imp, wf, S)
        return f, jac, kappa, kappa * x.symbols + w

    _, jac, kappa, y = pipeline(params_tx)
    g_y, g_k = adjoint_slcb_comm(y, kappa, x)
    grad = priv_comm_tx_grad(scene, tx_imp, wf, x, jac, g_y, g_k)

    def forward(vec):
        _, _, kap, yy = pipeline(params_from_3k(vec))
        return slcb_comm_loss(yy, kap, x)

    return fd_check(forward, params_to_3k(params_tx), grad, rng=rng)


def check_priv_sensing(seed: int) -> float:
    rng, tx_imp, params_tx, grid, sector_s, sector_c, omega_r = _tx_setup(seed)
    rx_imp = draw_impairments(K, WAVELENGTH, sample_rng(seed, 0xF00))
    params_rx = LearnableParams(betas=0.8 * rx_imp.gains, omegas=rx_imp.positions)
    x = draw_symbols(S, "qpsk", rng)
    t = 2
    scene = SensingScene(thetas=np.array([-0.45, -0.3]),
                         ranges=np.array([20.0, 30.0]), rcs=np.ones(t),
                         alphas=(rng.standard_normal(t)
                                 + 1j * rng.standard_normal(t)),
                         sector=Sector(-np.pi / 2, np.pi / 2),
                         range_interval=(10.0, 43.75))
    from .core import WaveformConfig, steering_vector, freq_steering
    wf = WaveformConfig(num_subcarriers=S, subcarrier_spacing=SPACING,
                        wavelength=WAVELENGTH, tx_power=POWER, num_antennas=K)
    w = 0.05 * (rng.standard_normal((K, S)) + 1j * rng.standard_normal((K, S)))

    def observe(f):
        y = w.copy()
        for alpha, theta, tau in zip(scene.alphas, scene.thetas, scene.delays):
            a_rx = steering_vector(theta, rx_imp, WAVELENGTH)
            a_tx = steering_vector(theta, tx_imp, WAVELENGTH)
            rho = freq_steering(tau, S, SPACING)
            y += alpha * (a_tx @ f) * np.outer(a_rx, x.symbols * rho)
        return y

    f0, jac = precoder_jacobian(sector_s, sector_c, grid, params_tx,
                                omega_r, POWER, WAVELENGTH)
    y0 = observe(f0)
    adjoint = adjoint_slcb_sensing(y0, scene, params_rx, x, WAVELENGTH, SPACING)
    grad = priv_sensing_tx_grad(scene, tx_imp, rx_imp, wf, x, jac, adjoint)

    def forward(vec):
        f, _ = precoder_jacobian(sector_s, sector_c, grid, params_from_3k(vec),
                                 omega_r, POWER, WAVELENGTH)
        return slcb_sensing_loss(observe(f), scene, params_rx, x,
                                 WAVELENGTH, SPACING)

    return fd_check(forward, params_to_3k(params_tx), grad, rng=rng)


GRADIENT_CHECKS = (
    ("adm_max", check_adm_max, FD_TOL),
    ("omp_residual", check_omp_residual, FD_TOL_LS),
    ("slcb_sensing_rx", check_slcb_sensing_rx, FD_TOL),
    ("precoder_jacobian", check_precoder_jacobian, FD_TOL),
    ("priv_comm_cce", check_priv_comm, FD_TOL),
    ("priv_sensing", check_priv_sensing, FD_TOL),
)


def metric_oracles() -> list[tuple[str, bool]]:
    from .metrics import GospaConfig, gospa, pfa, pmd
    cfg = GospaConfig(cutoff=33.75)
    results = []
    results.append(("gospa_cardinality",
                    abs(gospa([(0.0, 10.0)], np.zeros((0, 2)), cfg)
                        - 33.75 / np.sqrt(2)) < 1e-12))
    results.append(("gospa_pair",
                    abs(gospa([(0.0, 10.0)], [(0.0, 12.0)], cfg) - 2.0) < 1e-12))
    results.append(("pmd_hand", abs(pmd([(2, 1), (3, 5)]) - 0.2) < 1e-12))
    results.append(("pfa_hand", abs(pfa([(0, 1)], 5) - 0.2) < 1e-12))
    return results


def run(verbose: bool = False, seeds=range(3)) -> int:
    failures = 0
    for name, check, tol in GRADIENT_CHECKS:
        worst = max(check(s) for s in seeds)
        ok = worst <= tol
        failures += not ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] fd:{name}  worst={worst:.3e}  tol={tol:g}")
    for name, ok in metric_oracles():
        failures += not ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] oracle:{name}")
    return failures
