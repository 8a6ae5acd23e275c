"""Scene sampling, symbol sampling, noise-power derivation, and configuration.

Every draw is a pure function of an explicit numpy Generator; batch code
derives one Generator per (master seed, sample index) so sampling is
reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Iterable

import numpy as np
import yaml

from .core import InvalidConfigError, WaveformConfig

SPEED_OF_LIGHT = 299_792_458.0


class SceneGenerationError(RuntimeError):
    """Rejection sampling failed to produce a valid scene."""


# ---------------------------------------------------------------------------
# constellations

CONSTELLATIONS: dict[str, np.ndarray] = {
    "bpsk": np.array([1.0 + 0j, -1.0 + 0j]),
    "qpsk": np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0),
}
_qam16 = (np.array([-3, -1, 1, 3])[:, None] + 1j * np.array([-3, -1, 1, 3])[None, :]).ravel()
CONSTELLATIONS["16qam"] = _qam16 / np.sqrt(np.mean(np.abs(_qam16) ** 2))


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class Sector:
    theta_min: float
    theta_max: float

    def __post_init__(self):
        if self.theta_min > self.theta_max:
            raise InvalidConfigError("sector bounds out of order")

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min

    def contains(self, theta) -> np.ndarray:
        return (theta >= self.theta_min) & (theta <= self.theta_max)


@dataclass(frozen=True)
class SensingScene:
    """Targets plus the angular sector and range interval they were drawn from.

    `alphas` are the complex channel gains; their magnitudes follow the radar
    equation |a|^2 = rcs * lambda^2 / ((4 pi)^3 R^4).
    """

    thetas: np.ndarray      # rad, per target
    ranges: np.ndarray      # m
    rcs: np.ndarray         # m^2
    alphas: np.ndarray      # complex gains
    sector: Sector
    range_interval: tuple[float, float]

    def __post_init__(self):
        if not np.all(self.sector.contains(self.thetas)):
            raise InvalidConfigError("target angle outside sector")
        lo, hi = self.range_interval
        if np.any((self.ranges < lo) | (self.ranges > hi)):
            raise InvalidConfigError("target range outside interval")

    @property
    def num_targets(self) -> int:
        return self.thetas.size

    @property
    def delays(self) -> np.ndarray:
        return 2.0 * self.ranges / SPEED_OF_LIGHT

    def positions(self) -> np.ndarray:
        """(T, 2) target positions, boresight along +y."""
        return np.column_stack((self.ranges * np.sin(self.thetas),
                                self.ranges * np.cos(self.thetas)))


@dataclass(frozen=True)
class CommScene:
    """Multipath BS->UE geometry; path 0 is the line-of-sight path."""

    thetas: np.ndarray      # departure angles, rad
    alphas: np.ndarray      # complex path gains
    delays: np.ndarray      # s
    ue_range: float         # m
    sector: Sector

    def __post_init__(self):
        if self.thetas.size < 1:
            raise InvalidConfigError("comm scene needs at least the LoS path")
        if self.delays.size > 1 and np.any(self.delays[1:] < self.delays[0]):
            raise InvalidConfigError("scattered path shorter than LoS")

    @property
    def num_paths(self) -> int:
        return self.thetas.size


@dataclass(frozen=True)
class SymbolBlock:
    symbols: np.ndarray
    indices: np.ndarray     # positions in the constellation table
    constellation: str

    def __post_init__(self):
        points = CONSTELLATIONS[self.constellation]
        if not np.allclose(points[self.indices], self.symbols):
            raise InvalidConfigError("symbols do not match constellation indices")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ScenarioConfig:
    t_max: int = 3
    t_tilde_max: int = 6
    rcs_mean_m2: float = 1.0
    snr_s_db: float = -3.0
    snr_c_db: float = 14.4
    range_min_m: float = 10.0     # outer bounds the per-scene interval is drawn from
    range_max_m: float = 43.75
    ue_range_min_m: float = 10.0
    ue_range_max_m: float = 200.0
    cp_fraction: float = 0.25
    sector_mean_max_deg: float = 60.0
    sector_width_min_deg: float = 10.0
    sector_width_max_deg: float = 20.0

    @property
    def cyclic_prefix(self) -> float:
        # resolved against the waveform's subcarrier spacing at use sites
        return self.cp_fraction


@dataclass
class PrecoderSettings:
    grid_step_deg: float = 1.0
    sigma_over_lambda: float = 5.0


@dataclass
class SensingSettings:
    n_theta: int = 181
    n_tau_per_subcarrier: int = 2
    max_iter_slack: int = 3


@dataclass
class LossSettings:
    sensing_kind: str = "omp_residual"   # or "adm_max"
    omp_iters: int = 1
    eta_mode: str = "tied"               # or "fixed"
    eta_value: float = 0.5


@dataclass
class TrainSettings:
    batch: int = 128
    iterations: int = 800
    lr_gains: float = 1e-2
    lr_positions: float = 1e-4
    scheduler_factor: float = 0.5
    scheduler_patience: int = 500
    scheduler_cooldown: int = 500
    baseline: str = "unsupervised"       # unsupervised | slcb | slcb_perturbed | none


@dataclass
class EvalSettings:
    n_test: int = 10_000
    target_pfa: float = 1e-2
    n_calib: int = 2000                  # noise-only draws for threshold calibration


@dataclass
class ExperimentConfig:
    waveform: WaveformConfig
    scenario: ScenarioConfig
    precoder: PrecoderSettings
    sensing: SensingSettings
    loss: LossSettings
    train: TrainSettings
    eval: EvalSettings
    constellation: str = "qpsk"

    def __post_init__(self):
        if self.constellation not in CONSTELLATIONS:
            raise InvalidConfigError(f"unknown constellation '{self.constellation}'")
        # Solve both noise PSDs once; the sensing one rides on the waveform.
        self.n0_sensing = derive_noise_psd(self, self.scenario.snr_s_db, "sensing")
        self.n0_comm = derive_noise_psd(self, self.scenario.snr_c_db, "comm")
        object.__setattr__(self.waveform, "noise_psd", self.n0_sensing)

    @property
    def cp_duration(self) -> float:
        return self.scenario.cp_fraction / self.waveform.subcarrier_spacing

    @property
    def gospa_cutoff(self) -> float:
        return self.scenario.range_max_m - self.scenario.range_min_m

    @property
    def n_tau(self) -> int:
        return self.sensing.n_tau_per_subcarrier * self.waveform.num_subcarriers

    def angle_grid(self) -> np.ndarray:
        return np.linspace(-np.pi / 2, np.pi / 2, self.sensing.n_theta)

    def to_tree(self) -> dict:
        wf = self.waveform
        return {
            "waveform": {
                "S": wf.num_subcarriers,
                "delta_f_hz": wf.subcarrier_spacing,
                "lambda_m": wf.wavelength,
                "power_w": wf.tx_power,
                "K": wf.num_antennas,
                "fov_deg": float(np.degrees(wf.field_of_view)),
            },
            "scenario": asdict(self.scenario),
            "precoder": asdict(self.precoder),
            "sensing": asdict(self.sensing),
            "loss": asdict(self.loss),
            "train": asdict(self.train),
            "eval": asdict(self.eval),
            "constellation": self.constellation,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_tree(), sort_keys=False)


def _require(tree: dict, path: str):
    node = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise InvalidConfigError(f"missing config key '{path}'")
        node = node[part]
    return node


def config_from_tree(tree: dict) -> ExperimentConfig:
    wf = WaveformConfig(
        num_subcarriers=int(_require(tree, "waveform.S")),
        subcarrier_spacing=float(_require(tree, "waveform.delta_f_hz")),
        wavelength=float(_require(tree, "waveform.lambda_m")),
        tx_power=float(_require(tree, "waveform.power_w")),
        num_antennas=int(_require(tree, "waveform.K")),
        field_of_view=float(np.radians(_require(tree, "waveform.fov_deg"))),
    )

    def section(name, cls):
        sub = _require(tree, name)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(sub) - known
        if extra:
            raise InvalidConfigError(f"unknown key '{name}.{sorted(extra)[0]}'")
        return cls(**sub)

    return ExperimentConfig(
        waveform=wf,
        scenario=section("scenario", ScenarioConfig),
        precoder=section("precoder", PrecoderSettings),
        sensing=section("sensing", SensingSettings),
        loss=section("loss", LossSettings),
        train=section("train", TrainSettings),
        eval=section("eval", EvalSettings),
        constellation=str(_require(tree, "constellation")),
    )


def config_from_file(path) -> ExperimentConfig:
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    if not isinstance(tree, dict):
        raise InvalidConfigError(f"config file {path} is not a key-value tree")
    return config_from_tree(tree)


def preset(name: str) -> ExperimentConfig:
    if name == "desk":
        return ExperimentConfig(
            waveform=WaveformConfig(num_subcarriers=64, subcarrier_spacing=240e3,
                                    wavelength=5e-3, tx_power=0.1, num_antennas=16),
            scenario=ScenarioConfig(t_max=3),
            precoder=PrecoderSettings(),
            sensing=SensingSettings(),
            loss=LossSettings(),
            train=TrainSettings(batch=128, iterations=800),
            eval=EvalSettings(n_test=10_000),
        )
    if name == "paper_full":
        return ExperimentConfig(
            waveform=WaveformConfig(num_subcarriers=256, subcarrier_spacing=240e3,
                                    wavelength=5e-3, tx_power=0.1, num_antennas=64),
            scenario=ScenarioConfig(t_max=5),
            precoder=PrecoderSettings(),
            sensing=SensingSettings(),
            loss=LossSettings(),
            train=TrainSettings(batch=4000, iterations=5000),
            eval=EvalSettings(n_test=1_000_000),
        )
    raise InvalidConfigError(f"unknown preset '{name}'")


# ---------------------------------------------------------------------------
# sampling

def sample_rng(*keys: int) -> np.random.Generator:
    """Deterministic per-sample generator from integer keys."""
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]))


def draw_sectors(config: ExperimentConfig, rng: np.random.Generator) -> tuple[Sector, Sector]:
    """Independent sensing and communication angular uncertainty sectors."""
    sc = config.scenario
    fov = config.waveform.field_of_view
    out = []
    for _ in range(2):
        mean = np.radians(rng.uniform(-sc.sector_mean_max_deg, sc.sector_mean_max_deg))
        width = np.radians(rng.uniform(sc.sector_width_min_deg, sc.sector_width_max_deg))
        lo = np.clip(mean - width / 2, -fov, fov)
        hi = np.clip(mean + width / 2, -fov, fov)
        out.append(Sector(lo, hi))
    return out[0], out[1]


def gain_magnitude_sq(rcs, ranges, wavelength) -> np.ndarray:
    """Radar-equation gain power for monostatic sensing."""
    return rcs * wavelength**2 / ((4 * np.pi) ** 3 * np.asarray(ranges, dtype=float) ** 4)


def draw_range_interval(config: ExperimentConfig, rng: np.random.Generator,
                        min_width: float = 1.0) -> tuple[float, float]:
    sc = config.scenario
    for _ in range(1000):
        a, b = np.sort(rng.uniform(sc.range_min_m, sc.range_max_m, 2))
        if b - a >= min_width:
            return float(a), float(b)
    raise SceneGenerationError("could not draw a non-degenerate range interval")


def draw_sensing_scene(config: ExperimentConfig, sector: Sector,
                       rng: np.random.Generator) -> SensingScene:
    sc = config.scenario
    lam = config.waveform.wavelength
    interval = draw_range_interval(config, rng)
    t = int(rng.integers(0, sc.t_max + 1))
    thetas = rng.uniform(sector.theta_min, sector.theta_max, t)
    ranges = rng.uniform(interval[0], interval[1], t)
    rcs = rng.exponential(sc.rcs_mean_m2, t)
    phases = rng.uniform(0.0, 2 * np.pi, t)
    alphas = np.sqrt(gain_magnitude_sq(rcs, ranges, lam)) * np.exp(1j * phases)
    return SensingScene(thetas=thetas, ranges=ranges, rcs=rcs, alphas=alphas,
                        sector=sector, range_interval=interval)


def draw_comm_scene(config: ExperimentConfig, sector: Sector,
                    rng: np.random.Generator) -> CommScene:
    sc = config.scenario
    lam = config.waveform.wavelength
    t_cp = config.cp_duration

    t_tilde = int(rng.integers(1, sc.t_tilde_max + 1))
    ue_theta = rng.uniform(sector.theta_min, sector.theta_max)
    ue_range = rng.uniform(sc.ue_range_min_m, sc.ue_range_max_m)
    ue_pos = np.array([ue_range * np.sin(ue_theta), ue_range * np.cos(ue_theta)])

    thetas = [ue_theta]
    delays = [ue_range / SPEED_OF_LIGHT]
    gains2 = [lam**2 / (4 * np.pi * ue_range) ** 2]
    attempts = 0
    while len(thetas) < t_tilde:
        attempts += 1
        if attempts > 1000:
            raise SceneGenerationError("delay-spread rejection loop exceeded 1000 attempts")
        theta = rng.uniform(sector.theta_min, sector.theta_max)
        r1 = rng.uniform(sc.ue_range_min_m, ue_range)
        scat = np.array([r1 * np.sin(theta), r1 * np.cos(theta)])
        r2 = float(np.linalg.norm(scat - ue_pos))
        delay = (r1 + r2) / SPEED_OF_LIGHT
        if delay - delays[0] > t_cp:
            continue
        rcs = rng.exponential(sc.rcs_mean_m2)
        gains2.append(lam**2 * rcs / ((4 * np.pi) ** 3 * r1**2 * r2**2))
        thetas.append(theta)
        delays.append(delay)
    phases = rng.uniform(0.0, 2 * np.pi, t_tilde)
    alphas = np.sqrt(np.array(gains2)) * np.exp(1j * phases)
    return CommScene(thetas=np.array(thetas), alphas=alphas, delays=np.array(delays),
                     ue_range=float(ue_range), sector=sector)


def expected_inverse_range_pow4(r_min: float, r_max: float) -> float:
    """E[1/R^4] for R ~ U[r_min, r_max], in closed form."""
    return (r_min**-3 - r_max**-3) / (3.0 * (r_max - r_min))


def expected_inverse_range_pow2(r_min: float, r_max: float) -> float:
    """E[1/R^2] for R ~ U[r_min, r_max], in closed form."""
    return (1.0 / r_min - 1.0 / r_max) / (r_max - r_min)


def expected_gain_power(config: ExperimentConfig, mode: str) -> float:
    """Mean channel-gain power used by the SNR definitions.

    Sensing averages the radar equation over the widest range interval;
    comm uses the line-of-sight branch only.
    """
    sc = config.scenario
    lam = config.waveform.wavelength
    if mode == "sensing":
        e_r4 = expected_inverse_range_pow4(sc.range_min_m, sc.range_max_m)
        return sc.rcs_mean_m2 * lam**2 / (4 * np.pi) ** 3 * e_r4
    if mode == "comm":
        e_r2 = expected_inverse_range_pow2(sc.ue_range_min_m, sc.ue_range_max_m)
        return lam**2 / (4 * np.pi) ** 2 * e_r2
    raise InvalidConfigError(f"unknown SNR mode '{mode}'")


def derive_noise_psd(config: ExperimentConfig, target_snr_db: float, mode: str) -> float:
    """Solve SNR = P*K*E[|alpha|^2] / (N0*S*delta_f) for N0."""
    wf = config.waveform
    snr = 10.0 ** (target_snr_db / 10.0)
    return (wf.tx_power * wf.num_antennas * expected_gain_power(config, mode)
            / (snr * wf.num_subcarriers * wf.subcarrier_spacing))


def draw_symbols(num_subcarriers: int, constellation: str,
                 rng: np.random.Generator) -> SymbolBlock:
    points = CONSTELLATIONS[constellation]
    idx = rng.integers(0, points.size, num_subcarriers)
    return SymbolBlock(symbols=points[idx], indices=idx, constellation=constellation)
