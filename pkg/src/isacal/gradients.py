"""Analytic gradient engine.

All losses are real functions of the flat real parameter vector
[Re b_tx, Im b_tx, w_tx, Re b_rx, Im b_rx, w_rx] (length 6K).  Receiver-side
losses are differentiated directly; transmitter credit flows either through
the score-function estimator (unsupervised) or through the privileged
differentiable channel in this module (supervised baseline only).

Adjoint convention: for a real loss L of a complex array Z, the adjoint G
satisfies  dL = 2 Re{ vdot(G, dZ) }  for any perturbation dZ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LearnableParams, ArrayImpairments, WaveformConfig, \
    steering_vector, freq_steering
from .precoder import DegenerateCombinationError, PerturbedPrecoder, log_pdf_grad, \
    sector_grid_indices
from .scenario import CommScene, Sector, SensingScene, SymbolBlock
from .sensing_rx import Dictionaries, _solve_gram

TWO_PI = 2.0 * np.pi

# How often the privileged (channel-gradient-aware) path has been used.
# The unsupervised trainer must never bump this; a probe test asserts it.
PRIVILEGED_CALLS = 0


# ---------------------------------------------------------------------------
# flat parameter vector

def pack_params(tx: LearnableParams, rx: LearnableParams) -> np.ndarray:
    return np.concatenate([tx.betas.real, tx.betas.imag, tx.omegas,
                           rx.betas.real, rx.betas.imag, rx.omegas])


def unpack_params(vec: np.ndarray) -> tuple[LearnableParams, LearnableParams]:
    k = vec.size // 6
    if vec.size != 6 * k:
        raise ValueError("parameter vector length must be 6K")
    def side(off):
        return LearnableParams(betas=vec[off:off + k] + 1j * vec[off + k:off + 2 * k],
                               omegas=vec[off + 2 * k:off + 3 * k])
    return side(0), side(3 * k)


def tx_slice(k: int) -> slice:
    return slice(0, 3 * k)


def rx_slice(k: int) -> slice:
    return slice(3 * k, 6 * k)


@dataclass
class GradSample:
    gradient: np.ndarray    # length 6K
    loss: float
    estimator: str          # direct | score-function | privileged


# ---------------------------------------------------------------------------
# steering-vector building blocks

def _steering_parts(theta: float, params: LearnableParams, wavelength: float):
    """Returns (a, e, c): the steering vector, the bare phase factors
    exp(-j*c*omega_k), and the spatial frequency c = 2*pi*sin(theta)/lambda."""
    c = TWO_PI * np.sin(theta) / wavelength
    e = np.exp(-1j * c * params.omegas)
    return params.betas * e, e, c


def _accumulate_rx_grad(out: np.ndarray, coeff: complex, e: np.ndarray,
                        u: np.ndarray, c: float, m: np.ndarray) -> None:
    """Adds -2 Re{coeff * (du/dp)^T m} into the [Re b, Im b, w] blocks.

    du/dReb_k = e_k, du/dImb_k = j e_k, du/dw_k = -j c u_k (single-entry)."""
    k = e.size
    base = coeff * e * m
    out[0:k] += -2.0 * np.real(base)
    out[k:2 * k] += -2.0 * np.real(1j * base)
    out[2 * k:3 * k] += -2.0 * np.real(coeff * (-1j * c) * u * m)


def _accumulate_rx_grad_conj(out: np.ndarray, coeff: complex, e: np.ndarray,
                             u: np.ndarray, c: float, w: np.ndarray) -> None:
    """Adds -2 Re{coeff * (du/dp)^H w} (conjugated atom, as in u^H Y v*)."""
    k = e.size
    base = coeff * np.conj(e) * w
    out[0:k] += -2.0 * np.real(base)
    out[k:2 * k] += -2.0 * np.real(-1j * base)
    out[2 * k:3 * k] += -2.0 * np.real(coeff * 1j * c * np.conj(u) * w)


# ---------------------------------------------------------------------------
# receiver-side gradients (direct paths, RX segments only)

def grad_adm_max_rx(y: np.ndarray, dicts: Dictionaries, cell: tuple[int, int],
                    params_rx: LearnableParams, wavelength: float) -> np.ndarray:
    """Gradient of -|u^H Y v*|^2 at the frozen argmax cell, w.r.t. Psi_rx."""
    i, j = cell
    theta = dicts.angle_grid[i]
    u, e, c = _steering_parts(theta, params_rx, wavelength)
    v = dicts.phi_d[:, j]
    w = y @ np.conj(v)
    z = np.conj(u) @ w
    out = np.zeros(3 * params_rx.num_antennas)
    _accumulate_rx_grad_conj(out, np.conj(z), e, u, c, w)
    return out


def _refit_gains(y, atoms_u, atoms_v):
    """Joint LS gains for rank-1 atoms u_t v_t^T."""
    n = len(atoms_u)
    gram = np.empty((n, n), dtype=complex)
    rhs = np.empty(n, dtype=complex)
    for a in range(n):
        rhs[a] = np.conj(atoms_u[a]) @ y @ np.conj(atoms_v[a])
        for b in range(n):
            gram[a, b] = (np.conj(atoms_u[a]) @ atoms_u[b]) * \
                         (np.conj(atoms_v[a]) @ atoms_v[b])
    return _solve_gram(gram, rhs)


def residual_loss_pinned(y: np.ndarray, dicts_delay: np.ndarray,
                         angle_thetas: np.ndarray, params_rx: LearnableParams,
                         x: SymbolBlock, wavelength: float,
                         subcarrier_spacing: float) -> float:
    """Forward residual loss with the atom selection pinned: rebuild the
    selected atoms from `params_rx`, refit gains jointly, return ||R||_F^2.
    Used both by the gradient below (implicitly) and by its FD oracle."""
    s = x.symbols.size
    atoms_u = [steering_vector(t, params_rx, wavelength) for t in angle_thetas]
    atoms_v = [x.symbols * freq_steering(tau, s, subcarrier_spacing)
               for tau in dicts_delay]
    gains = _refit_gains(y, atoms_u, atoms_v)
    r = y - sum(g * np.outer(u, v) for g, u, v in zip(gains, atoms_u, atoms_v))
    return float(np.real(np.vdot(r, r)))


def grad_omp_residual_rx(y: np.ndarray, dicts: Dictionaries,
                         angle_idx: np.ndarray, delay_idx: np.ndarray,
                         params_rx: LearnableParams,
                         wavelength: float) -> np.ndarray:
    """Gradient of the frozen-support residual loss w.r.t. Psi_rx.

    The joint-LS stationarity zeroes the gain-path term, so the derivative
    reduces to the direct dependence of the selected angular atoms."""
    out = np.zeros(3 * params_rx.num_antennas)
    if angle_idx.size == 0:
        return out
    atoms_u, parts = [], []
    for i in angle_idx:
        u, e, c = _steering_parts(dicts.angle_grid[i], params_rx, wavelength)
        atoms_u.append(u)
        parts.append((e, c))
    atoms_v = [dicts.phi_d[:, j] for j in delay_idx]
    gains = _refit_gains(y, atoms_u, atoms_v)
    r = y - sum(g * np.outer(u, v) for g, u, v in zip(gains, atoms_u, atoms_v))
    for g, u, v, (e, c) in zip(gains, atoms_u, atoms_v, parts):
        m = np.conj(r) @ v
        _accumulate_rx_grad(out, g, e, u, c, m)
    return out


def grad_slcb_sensing_rx(y: np.ndarray, scene: SensingScene,
                         params_rx: LearnableParams, x: SymbolBlock,
                         wavelength: float,
                         subcarrier_spacing: float) -> np.ndarray:
    """Gradient of the supervised sensing loss w.r.t. Psi_rx."""
    t = scene.num_targets
    out = np.zeros(3 * params_rx.num_antennas)
    if t == 0:
        return out
    s = x.symbols.size
    for theta, tau in zip(scene.thetas, scene.delays):
        u, e, c = _steering_parts(theta, params_rx, wavelength)
        v = x.symbols * freq_steering(tau, s, subcarrier_spacing)
        w = y @ np.conj(v)
        z = np.conj(u) @ w
        _accumulate_rx_grad_conj(out, np.conj(z) / t, e, u, c, w)
    return out


# ---------------------------------------------------------------------------
# precoder Jacobian (TX segments)

def sector_precoder_jacobian(sector: Sector, grid: np.ndarray,
                             params_tx: LearnableParams, wavelength: float):
    """Unit-norm sector beam and its complex K x 3K Jacobian w.r.t. Psi_tx."""
    k = params_tx.num_antennas
    idx = sector_grid_indices(sector, grid)
    c = TWO_PI * np.sin(grid[idx]) / wavelength           # (N,)
    phase = np.exp(1j * np.outer(params_tx.omegas, c))    # (K, N): e^{+j c_i w_k}
    e_sum = phase.sum(axis=1)                             # (K,)
    f_sum = (1j * c[None, :] * phase).sum(axis=1)         # (K,)
    g = np.conj(params_tx.betas) * e_sum
    # dg/dp has a single nonzero entry per parameter
    dg = np.zeros((k, 3 * k), dtype=complex)
    rows = np.arange(k)
    dg[rows, rows] = e_sum
    dg[rows, k + rows] = -1j * e_sum
    dg[rows, 2 * k + rows] = np.conj(params_tx.betas) * f_sum
    norm = np.linalg.norm(g)
    f = g / norm
    dnorm = np.real(np.conj(g) @ dg) / norm               # (3K,)
    jac = dg / norm - np.outer(g, dnorm) / norm**2
    return f, jac


def precoder_jacobian(sector_s: Sector, sector_c: Sector, grid: np.ndarray,
                      params_tx: LearnableParams, omega_r: float, power: float,
                      wavelength: float):
    """ISAC precoder f and its complex K x 3K Jacobian w.r.t. Psi_tx."""
    f_s, j_s = sector_precoder_jacobian(sector_s, grid, params_tx, wavelength)
    f_c, j_c = sector_precoder_jacobian(sector_c, grid, params_tx, wavelength)
    h = np.sqrt(omega_r) * f_s + np.sqrt(1.0 - omega_r) * f_c
    jh = np.sqrt(omega_r) * j_s + np.sqrt(1.0 - omega_r) * j_c
    norm = np.linalg.norm(h)
    if norm < 1e-9:
        raise DegenerateCombinationError("sensing and comm beams cancel")
    scale = np.sqrt(power)
    f = scale * h / norm
    dnorm = np.real(np.conj(h) @ jh) / norm
    jac = scale * (jh / norm - np.outer(h, dnorm) / norm**2)
    return f, jac


def score_function_grad(loss: float, pp: PerturbedPrecoder,
                        jacobian: np.ndarray) -> np.ndarray:
    """Single-sample score-function (log-trick) TX gradient: loss * grad log p."""
    return loss * log_pdf_grad(pp, jacobian)


# ---------------------------------------------------------------------------
# adjoints of the receiver losses (dL = 2 Re{vdot(G, dZ)})

def adjoint_adm_max(y: np.ndarray, dicts: Dictionaries,
                    cell: tuple[int, int]) -> np.ndarray:
    i, j = cell
    u = dicts.phi_a[:, i]
    v = dicts.phi_d[:, j]
    z = np.conj(u) @ y @ np.conj(v)
    return -z * np.outer(u, v)


def adjoint_omp_residual(y: np.ndarray, dicts: Dictionaries,
                         angle_idx: np.ndarray,
                         delay_idx: np.ndarray) -> np.ndarray:
    atoms_u = [dicts.phi_a[:, i] for i in angle_idx]
    atoms_v = [dicts.phi_d[:, j] for j in delay_idx]
    if not atoms_u:
        return y.copy()
    gains = _refit_gains(y, atoms_u, atoms_v)
    return y - sum(g * np.outer(u, v) for g, u, v in zip(gains, atoms_u, atoms_v))


def adjoint_slcb_sensing(y: np.ndarray, scene: SensingScene,
                         params_rx: LearnableParams, x: SymbolBlock,
                         wavelength: float,
                         subcarrier_spacing: float) -> np.ndarray:
    t = scene.num_targets
    g = np.zeros_like(y)
    s = x.symbols.size
    for theta, tau in zip(scene.thetas, scene.delays):
        u = steering_vector(theta, params_rx, wavelength)
        v = x.symbols * freq_steering(tau, s, subcarrier_spacing)
        z = np.conj(u) @ y @ np.conj(v)
        g -= (z / t) * np.outer(u, v)
    return g


def adjoint_comm_energy(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return -y, np.zeros_like(y)


def adjoint_slcb_comm(y: np.ndarray, csi: np.ndarray,
                      x: SymbolBlock) -> tuple[np.ndarray, np.ndarray]:
    from .losses import CCE_DISTANCE_FLOOR, slcb_comm_posteriors
    from .scenario import CONSTELLATIONS

    points = CONSTELLATIONS[x.constellation]
    s = y.size
    r = y[:, None] - csi[:, None] * points[None, :]
    dist = np.real(r * np.conj(r))
    post = slcb_comm_posteriors(y, csi, x.constellation)
    onehot = np.zeros_like(post)
    onehot[np.arange(s), x.indices] = 1.0
    w = (onehot - post) / np.maximum(dist, CCE_DISTANCE_FLOOR) / s
    w[dist < CCE_DISTANCE_FLOOR] = 0.0   # clamped cells carry no derivative
    g_y = (w * r).sum(axis=1)
    g_k = -(w * r * np.conj(points)[None, :]).sum(axis=1)
    return g_y, g_k


# ---------------------------------------------------------------------------
# privileged differentiable channel (supervised baseline only)

def priv_sensing_tx_grad(scene: SensingScene, tx_imp: ArrayImpairments,
                         rx_imp: ArrayImpairments, wf: WaveformConfig,
                         x: SymbolBlock, jacobian: np.ndarray,
                         adjoint: np.ndarray) -> np.ndarray:
    """Chain a sensing-loss adjoint through dY/df and the precoder Jacobian.

    dY/df_p = sum_t alpha_t (a_tx,t^T J[:,p]) a_rx,t (x * rho_t)^T, so the
    TX gradient is 2 Re{ (sum_t alpha_t c_t a_tx,t^T) J } with
    c_t = vdot(G, outer(a_rx,t, x * rho_t)).
    """
    global PRIVILEGED_CALLS
    PRIVILEGED_CALLS += 1
    s = x.symbols.size
    acc = np.zeros(jacobian.shape[0], dtype=complex)
    for alpha, theta, tau in zip(scene.alphas, scene.thetas, scene.delays):
        a_tx = steering_vector(theta, tx_imp, wf.wavelength)
        a_rx = steering_vector(theta, rx_imp, wf.wavelength)
        v = x.symbols * freq_steering(tau, s, wf.subcarrier_spacing)
        c_t = complex(np.conj(adjoint @ np.conj(v)) @ a_rx)
        acc += alpha * c_t * a_tx
    return 2.0 * np.real(acc @ jacobian)


def priv_comm_tx_grad(scene: CommScene, tx_imp, wf: WaveformConfig,
                      x: SymbolBlock, jacobian: np.ndarray,
                      g_y: np.ndarray, g_k: np.ndarray) -> np.ndarray:
    """Chain comm-loss adjoints (dy, dkappa) through the precoder Jacobian."""
    global PRIVILEGED_CALLS
    PRIVILEGED_CALLS += 1
    s = x.symbols.size
    acc = np.zeros(jacobian.shape[0], dtype=complex)
    weights = np.conj(g_y) * x.symbols + np.conj(g_k)
    for alpha, theta, tau in zip(scene.alphas, scene.thetas, scene.delays):
        a_tx = steering_vector(theta, tx_imp, wf.wavelength)
        rho = freq_steering(tau, s, wf.subcarrier_spacing)
        acc += alpha * (weights @ rho) * a_tx
    return 2.0 * np.real(acc @ jacobian)


# ---------------------------------------------------------------------------
# finite-difference validation harness

def fd_check(forward, point: np.ndarray, gradient: np.ndarray,
             num_directions: int = 8,
             rng: np.random.Generator | None = None) -> float:
    """Worst relative error of `gradient` against central differences of
    `forward` along random directions."""
    if rng is None:
        rng = np.random.default_rng(0)
    point = np.asarray(point, dtype=float)
    worst = 0.0
    for _ in range(num_directions):
        d = rng.standard_normal(point.size)
        d /= np.linalg.norm(d)
        h = 1e-6 * (1.0 + np.linalg.norm(point))
        fp = forward(point + h * d)
        fm = forward(point - h * d)
        fd = (fp - fm) / (2.0 * h)
        an = float(gradient @ d)
        denom = max(abs(fd), abs(an), 1e-300)
        worst = max(worst, abs(fd - an) / denom)
    return worst
