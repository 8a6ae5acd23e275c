"""Multi-target estimation: angle/delay dictionaries, the angle-delay map,
and greedy sparse recovery with joint least-squares gain refits.

The greedy loop works on the complex map  M = Phi_a^H Y conj(Phi_d)  and
updates it with rank-1 corrections per selected atom, so each iteration
after the first costs O(N_theta * N_tau) instead of a full re-projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import LearnableParams, steering_matrix, freq_steering_matrix
from .scenario import SPEED_OF_LIGHT, SymbolBlock


class NumericalDegeneracyError(ArithmeticError):
    """Repeated duplicate atom selection made the LS system singular."""


class CalibrationError(RuntimeError):
    """Threshold calibration could not be performed."""


@dataclass(frozen=True)
class Dictionaries:
    phi_a: np.ndarray       # K x N_theta, built from the RX calibration params
    phi_d: np.ndarray       # S x N_tau, symbol-modulated delay atoms
    angle_grid: np.ndarray  # rad
    delay_grid: np.ndarray  # s

    def __post_init__(self):
        if self.phi_a.shape[1] != self.angle_grid.size:
            raise ValueError("angular dictionary/grid size mismatch")
        if self.phi_d.shape[1] != self.delay_grid.size:
            raise ValueError("delay dictionary/grid size mismatch")


@dataclass
class OmpResult:
    """Ordered detections with jointly refit gains and residual tracking."""

    thetas: np.ndarray              # rad
    taus: np.ndarray                # s
    angle_idx: np.ndarray
    delay_idx: np.ndarray
    gains: np.ndarray               # final joint-LS gains
    residual_sq: list               # squared Frobenius norms, iteration 0 first
    residual: np.ndarray            # final residual matrix
    peaks: list = field(default_factory=list)  # ADM maxima examined per iteration

    @property
    def num_detections(self) -> int:
        return self.thetas.size


def build_dictionaries(angle_grid: np.ndarray, delay_grid: np.ndarray,
                       params_rx: LearnableParams, x: SymbolBlock,
                       wavelength: float, subcarrier_spacing: float) -> Dictionaries:
    phi_a = steering_matrix(angle_grid, params_rx, wavelength)
    rho = freq_steering_matrix(delay_grid, x.symbols.size, subcarrier_spacing)
    phi_d = x.symbols[:, None] * rho
    return Dictionaries(phi_a=phi_a, phi_d=phi_d,
                        angle_grid=np.asarray(angle_grid, dtype=float),
                        delay_grid=np.asarray(delay_grid, dtype=float))


def delay_grid_for(range_interval: tuple[float, float], n_tau: int) -> np.ndarray:
    lo, hi = range_interval
    return np.linspace(2.0 * lo / SPEED_OF_LIGHT, 2.0 * hi / SPEED_OF_LIGHT, n_tau)


def complex_map(y: np.ndarray, dicts: Dictionaries) -> np.ndarray:
    """Phi_a^H Y conj(Phi_d); the ADM is its squared magnitude."""
    return np.conj(dicts.phi_a).T @ y @ np.conj(dicts.phi_d)


def adm(y: np.ndarray, dicts: Dictionaries) -> np.ndarray:
    """Angle-delay map |Phi_a^H Y conj(Phi_d)|^2."""
    m = complex_map(y, dicts)
    return np.real(m * np.conj(m))


def _solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = scipy.linalg.cho_factor(gram, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    except scipy.linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(np.real(np.trace(gram)), 1.0)
    try:
        c = scipy.linalg.cho_factor(gram + jitter * np.eye(gram.shape[0]),
                                    check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalDegeneracyError("singular LS system in gain refit") from exc
    return scipy.linalg.cho_solve(c, rhs, check_finite=False)


def omp(y: np.ndarray, dicts: Dictionaries, delta: float, max_iter: int,
        m0: np.ndarray | None = None) -> OmpResult:
    """Greedy multi-target recovery with joint LS gain refits each iteration.

    Stops when the residual's ADM maximum drops to `delta` or below, or after
    `max_iter` detections.  `m0` may carry a precomputed complex map of `y`.
    """
    if m0 is None:
        m0 = complex_map(y, dicts)
    m = m0.copy()
    n_theta, n_tau = m.shape
    y_sq = float(np.real(np.vdot(y, y)))
    residual_sq = [y_sq]

    sel_i: list[int] = []
    sel_j: list[int] = []
    selected: set[tuple[int, int]] = set()
    ga_cols: list[np.ndarray] = []   # Phi_a^H Phi_a[:, i_t]
    gd_cols: list[np.ndarray] = []   # Phi_d^H Phi_d[:, j_t]
    gains = np.zeros(0, dtype=complex)
    power = np.real(m * np.conj(m))
    peaks: list[float] = []

    while len(sel_i) < max_iter:
        # Joint-LS stationarity zeroes the map at selected cells; any nonzero
        # value there is floating-point noise, so mask them out before argmax.
        for a, b in selected:
            power[a, b] = -np.inf
        flat = int(np.argmax(power))
        peaks.append(float(power.flat[flat]))
        if power.flat[flat] <= delta:
            break
        i, j = divmod(flat, n_tau)
        sel_i.append(i)
        sel_j.append(j)
        selected.add((i, j))
        ga_cols.append(np.conj(dicts.phi_a).T @ dicts.phi_a[:, i])
        gd_cols.append(np.conj(dicts.phi_d).T @ dicts.phi_d[:, j])

        n = len(sel_i)
        gram = np.empty((n, n), dtype=complex)
        for b in range(n):
            gram[:, b] = ga_cols[b][sel_i] * gd_cols[b][sel_j]
        rhs = m0[sel_i, sel_j]
        gains = _solve_gram(gram, rhs)

        m = m0.copy()
        for t in range(n):
            m -= gains[t] * np.outer(ga_cols[t], gd_cols[t])
        power = np.real(m * np.conj(m))
        residual_sq.append(max(y_sq - float(np.real(np.vdot(gains, rhs))), 0.0))

    sel_i_arr = np.array(sel_i, dtype=int)
    sel_j_arr = np.array(sel_j, dtype=int)
    if sel_i_arr.size:
        recon = (dicts.phi_a[:, sel_i_arr] * gains) @ dicts.phi_d[:, sel_j_arr].T
    else:
        recon = np.zeros_like(y)
    return OmpResult(thetas=dicts.angle_grid[sel_i_arr],
                     taus=dicts.delay_grid[sel_j_arr],
                     angle_idx=sel_i_arr, delay_idx=sel_j_arr,
                     gains=np.asarray(gains, dtype=complex),
                     residual_sq=residual_sq,
                     residual=y - recon, peaks=peaks)


def detections_at(peaks, delta: float) -> int:
    """Detections the greedy loop would accept at threshold `delta`, given the
    peak sequence recorded by an unthresholded run (the greedy selections of a
    thresholded run are a prefix of the unthresholded ones)."""
    n = 0
    for p in peaks:
        if p <= delta:
            break
        n += 1
    return n


def positions_from(result: OmpResult) -> np.ndarray:
    """(N, 2) Cartesian positions, BS at the origin, boresight along +y."""
    ranges = SPEED_OF_LIGHT * result.taus / 2.0
    return np.column_stack((ranges * np.sin(result.thetas),
                            ranges * np.cos(result.thetas)))


def calibrate_threshold(observations, dictionaries, target_pfa: float,
                        t_max: int, max_iter: int | None = None) -> float:
    """Pick the ADM threshold whose empirical noise-only false-alarm rate
    matches `target_pfa`.

    `observations` and `dictionaries` are parallel sequences of target-free
    observations and their per-sample dictionaries.  The false-alarm rate is
    sum(min(det_i, t_max)) / (B * t_max), monotone non-increasing in the
    threshold, so a bisection over the empirical max-ADM values suffices.
    """
    n = len(observations)
    if n < 1000:
        raise CalibrationError("threshold calibration needs >= 1000 noise-only samples")
    if max_iter is None:
        max_iter = t_max + 3
    if target_pfa >= 1.0:
        return 0.0

    maps = [complex_map(y, d) for y, d in zip(observations, dictionaries)]
    maxima = np.array([float(np.max(np.real(m * np.conj(m)))) for m in maps])

    def pfa_at(delta: float) -> float:
        count = 0
        for y, d, m0, mx in zip(observations, dictionaries, maps, maxima):
            if mx <= delta:
                continue
            res = omp(y, d, delta, max_iter, m0=m0)
            count += min(res.num_detections, t_max)
        return count / (n * t_max)

    candidates = np.sort(maxima)
    lo, hi = 0, candidates.size  # candidates[idx] as delta; hi means above all maxima
    top = candidates[-1] * (1.0 + 1e-9)
    # smallest index whose threshold achieves pfa <= target
    while lo < hi:
        mid = (lo + hi) // 2
        delta = candidates[mid] if mid < candidates.size else top
        if pfa_at(delta) <= target_pfa:
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo]) if lo < candidates.size else float(top)
