"""Experiment driver: reproducible calibration runs and CSV evaluation sweeps.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.

CSV schemas
-----------
TrainLog (calibrate):  iter, loss, sens_loss, comm_loss, lr_mult_gain,
                       lr_mult_pos, grad_norm_tx, grad_norm_rx
RunRecord (roc / tradeoff / snr-sweep):
    baseline, impairment_seed, seed, omega_r, eta_r, target_pfa, delta,
    snr_s_db, p_md, p_fa, gospa, ser, wall_time_s
  Aggregate rows repeat each grid point with impairment_seed = mean | std.
Precoder dump: variant, angle_deg, response_db
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import (InvalidConfigError, LearnableParams, draw_impairments,
                   ideal_params)
from .comm_rx import ml_detect
from .channel import comm_forward, sensing_forward
from .metrics import GospaConfig, gospa, pfa, pmd, precoder_response
from .precoder import isac_precoder, sector_precoder
from .scenario import (ExperimentConfig, SceneGenerationError, Sector,
                       config_from_file, derive_noise_psd, draw_comm_scene,
                       draw_sectors, draw_sensing_scene, draw_symbols, preset,
                       sample_rng)
from .sensing_rx import (CalibrationError, build_dictionaries, delay_grid_for,
                         detections_at, omp, positions_from)
from .trainer import save_checkpoint, load_checkpoint, train, unpack_params

RUN_RECORD_HEADER = ("baseline", "impairment_seed", "seed", "omega_r", "eta_r",
                     "target_pfa", "delta", "snr_s_db", "p_md", "p_fa",
                     "gospa", "ser", "wall_time_s")

# disjoint stream tags so evaluation never replays training randomness
_TAG_IMPAIR_TX, _TAG_IMPAIR_RX = 0xA11CE, 0xB0B00
_TAG_CALIB, _TAG_TEST = 0xCA11B, 0x7E57


def _config_from_args(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return config_from_file(args.config)
    return preset(args.preset)


def _manifest(path: Path, config: ExperimentConfig, args) -> None:
    digest = hashlib.sha256(config.to_yaml().encode()).hexdigest()
    doc = {
        "version": __version__,
        "config_sha256": digest,
        "argv": [str(a) for a in sys.argv[1:]],
        "seed": getattr(args, "seed", None),
        "impairment_seeds": getattr(args, "impairment_seeds", None),
        "config": config.to_tree(),
    }
    path.write_text(yaml.safe_dump(doc, sort_keys=False))


def _draw_true_arrays(config: ExperimentConfig, impairment_seed: int):
    wf = config.waveform
    tx = draw_impairments(wf.num_antennas, wf.wavelength,
                          sample_rng(impairment_seed, _TAG_IMPAIR_TX))
    rx = draw_impairments(wf.num_antennas, wf.wavelength,
                          sample_rng(impairment_seed, _TAG_IMPAIR_RX))
    return tx, rx


def _resolve_params(baseline: str, checkpoint, config: ExperimentConfig,
                    tx_imp, rx_imp) -> tuple[LearnableParams, LearnableParams]:
    """Assumed steering parameters for evaluation, per baseline mode."""
    wf = config.waveform
    if baseline == "matched":
        return (LearnableParams(betas=tx_imp.gains, omegas=tx_imp.positions),
                LearnableParams(betas=rx_imp.gains, omegas=rx_imp.positions))
    if baseline == "mismatched":
        ideal = ideal_params(wf.num_antennas, wf.wavelength)
        return ideal, ideal
    if baseline in ("ul", "slcb", "slcb-perturbed"):
        if checkpoint is None:
            raise InvalidConfigError(
                f"baseline '{baseline}' needs --checkpoint with trained parameters")
        data = load_checkpoint(checkpoint)
        return unpack_params(np.asarray(data["params"], dtype=float))
    raise InvalidConfigError(f"unknown baseline '{baseline}'")


# ---------------------------------------------------------------------------
# shared evaluation pipeline

@dataclass
class DetectionRecord:
    """One transmission reduced to what threshold sweeps need: the true
    target count/positions and the unthresholded greedy detection trace."""
    num_targets: int
    truth: np.ndarray        # (T, 2) positions
    peaks: list              # ADM maxima per greedy iteration
    positions: np.ndarray    # (t_max, 2) detection positions, greedy order


def detection_pass(config: ExperimentConfig, params_tx: LearnableParams,
                   params_rx: LearnableParams, tx_imp, rx_imp,
                   omega_r: float, seed: int, tag: int, n_samples: int,
                   n0_sensing: float, with_comm: bool = False):
    """Simulate transmissions and run the unthresholded greedy detector.

    Returns (records, symbol errors, total symbols); metrics at any threshold
    follow by truncating each record's greedy trace."""
    wf = config.waveform
    grid = config.angle_grid()
    t_max = config.scenario.t_max
    records = []
    err = tot = 0
    for i in range(n_samples):
        rng = sample_rng(seed, tag, i)
        sector_s, sector_c = draw_sectors(config, rng)
        x = draw_symbols(wf.num_subcarriers, config.constellation, rng)
        scene_s = draw_sensing_scene(config, sector_s, rng)
        scene_c = draw_comm_scene(config, sector_c, rng)

        f_s = sector_precoder(sector_s, grid, params_tx, wf.wavelength)
        f_c = sector_precoder(sector_c, grid, params_tx, wf.wavelength)
        f = isac_precoder(f_s, f_c, omega_r, wf.tx_power).weights

        y = sensing_forward(scene_s, f, x, tx_imp, rx_imp, wf,
                            n0_sensing, rng).y
        delay_grid = delay_grid_for(scene_s.range_interval, config.n_tau)
        dicts = build_dictionaries(grid, delay_grid, params_rx, x,
                                   wf.wavelength, wf.subcarrier_spacing)
        det = omp(y, dicts, delta=-1.0, max_iter=t_max)
        records.append(DetectionRecord(num_targets=scene_s.num_targets,
                                       truth=scene_s.positions(),
                                       peaks=det.peaks,
                                       positions=positions_from(det)))
        if with_comm:
            obs = comm_forward(scene_c, f, x, tx_imp, wf, config.n0_comm, rng)
            decided = ml_detect(obs, config.constellation)
            err += int(np.sum(decided.indices != x.indices))
            tot += x.indices.size
    return records, err, tot


def counts_at(records, delta: float):
    return [(r.num_targets, detections_at(r.peaks, delta)) for r in records]


def calibrate_delta(config: ExperimentConfig, params_tx: LearnableParams,
                    params_rx: LearnableParams, tx_imp, rx_imp,
                    omega_r: float, target_pfa: float, seed: int,
                    n0_sensing: float) -> float:
    """Threshold achieving the target false-alarm rate on a held-out
    calibration stream of regular transmissions (operating points are set on
    the measured false-alarm probability)."""
    n = config.eval.n_calib
    if n < 1000:
        raise CalibrationError(
            "threshold calibration needs >= 1000 calibration samples")
    records, _, _ = detection_pass(config, params_tx, params_rx, tx_imp,
                                   rx_imp, omega_r, seed, _TAG_CALIB, n,
                                   n0_sensing)
    t_max = config.scenario.t_max
    if all(r.num_targets == t_max for r in records):
        raise CalibrationError("false-alarm rate undefined: all scenes full")
    if target_pfa >= 1.0:
        return 0.0

    def pfa_at(delta: float) -> float:
        return pfa(counts_at(records, delta), t_max)

    candidates = np.unique(np.concatenate([r.peaks for r in records]))
    lo, hi = 0, candidates.size
    top = float(candidates[-1]) * (1.0 + 1e-9)
    while lo < hi:      # smallest threshold whose pfa meets the target
        mid = (lo + hi) // 2
        if pfa_at(float(candidates[mid])) <= target_pfa:
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo]) if lo < candidates.size else top


def evaluate_point(config: ExperimentConfig, params_tx: LearnableParams,
                   params_rx: LearnableParams, tx_imp, rx_imp,
                   omega_r: float, delta: float, seed: int,
                   n0_sensing: float) -> dict:
    """Monte-Carlo metrics for one (parameters, omega_r, threshold) point."""
    t_max = config.scenario.t_max
    gospa_cfg = GospaConfig(cutoff=config.gospa_cutoff)
    records, err, tot = detection_pass(config, params_tx, params_rx, tx_imp,
                                       rx_imp, omega_r, seed, _TAG_TEST,
                                       config.eval.n_test, n0_sensing,
                                       with_comm=True)
    counts = counts_at(records, delta)
    gospas = [gospa(r.truth, r.positions[:min(n_det, t_max)], gospa_cfg)
              for r, (_, n_det) in zip(records, counts)]
    return {"p_md": pmd(counts), "p_fa": pfa(counts, t_max),
            "gospa": float(np.mean(gospas)), "ser": err / tot}


def _write_records(out, rows) -> None:
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_RECORD_HEADER)
        w.writerows(rows)


def _aggregate(rows, group_keys=("omega_r", "target_pfa", "snr_s_db")):
    """Append mean/std rows over impairment seeds per grid point."""
    idx = {h: i for i, h in enumerate(RUN_RECORD_HEADER)}
    metric_cols = ["p_md", "p_fa", "gospa", "ser"]
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault(tuple(r[idx[k]] for k in group_keys), []).append(r)
    extra = []
    for key, members in groups.items():
        if len(members) < 2:
            continue
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            row = list(members[0])
            row[idx["impairment_seed"]] = stat
            for c in metric_cols:
                vals = np.array([m[idx[c]] for m in members], dtype=float)
                row[idx[c]] = float(fn(vals))
            row[idx["wall_time_s"]] = ""
            extra.append(tuple(row))
    return rows + extra


def _eval_sweep(args, sweep: str):
    """Common driver for roc / tradeoff / snr-sweep."""
    config = _config_from_args(args)
    rows = []
    for imp_seed in args.impairment_seeds:
        tx_imp, rx_imp = _draw_true_arrays(config, imp_seed)
        params_tx, params_rx = _resolve_params(args.baseline, args.checkpoint,
                                               config, tx_imp, rx_imp)
        if sweep == "roc":
            points = [("target_pfa", p) for p in args.pfa_grid]
        elif sweep == "tradeoff":
            points = [("omega_r", w) for w in args.omega_grid]
        else:
            points = [("snr_s_db", s) for s in args.snr_grid]

        delta_cache: dict[tuple, float] = {}
        for kind, value in points:
            start = time.perf_counter()
            omega_r = value if kind == "omega_r" else args.omega_r
            target_pfa = value if kind == "target_pfa" else args.target_pfa
            snr_db = value if kind == "snr_s_db" else config.scenario.snr_s_db
            n0 = derive_noise_psd(config, snr_db, "sensing")
            ckey = (target_pfa, round(snr_db, 9), round(omega_r, 9))
            if ckey not in delta_cache:
                delta_cache[ckey] = calibrate_delta(config, params_tx,
                                                    params_rx, tx_imp, rx_imp,
                                                    omega_r, target_pfa,
                                                    args.seed, n0)
            delta = delta_cache[ckey]
            res = evaluate_point(config, params_tx, params_rx, tx_imp, rx_imp,
                                 omega_r, delta, args.seed, n0)
            eta = omega_r if config.loss.eta_mode == "tied" else config.loss.eta_value
            rows.append((args.baseline, imp_seed, args.seed, omega_r, eta,
                         target_pfa, delta, snr_db, res["p_md"], res["p_fa"],
                         res["gospa"], res["ser"],
                         round(time.perf_counter() - start, 3)))
    rows = _aggregate(rows)
    _write_records(args.out, rows)
    _manifest(Path(str(args.out) + ".manifest.yaml"), config, args)
    return 0


# ---------------------------------------------------------------------------
# subcommands

def cmd_calibrate(args) -> int:
    config = _config_from_args(args)
    imp_seed = args.impairment_seeds[0]
    if imp_seed == args.seed:
        raise InvalidConfigError("impairment seed must differ from the data seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.baseline in ("slcb", "slcb-perturbed"):
        config.train.baseline = args.baseline.replace("-", "_")
    tx_imp, rx_imp = _draw_true_arrays(config, imp_seed)
    result = train(config, tx_imp, rx_imp, args.seed,
                   log_path=out / "trainlog.csv")
    save_checkpoint(out / "checkpoint.npz", result, config)
    _manifest(out / "manifest.yaml", config, args)
    return 0


def cmd_precoder_dump(args) -> int:
    config = _config_from_args(args)
    wf = config.waveform
    grid = config.angle_grid()
    tx_imp, rx_imp = _draw_true_arrays(config, args.impairment_seeds[0])
    sector_s = Sector(*np.radians(args.sector_s))
    sector_c = Sector(*np.radians(args.sector_c))

    variants = {"matched": _resolve_params("matched", None, config, tx_imp, rx_imp)[0],
                "mismatched": _resolve_params("mismatched", None, config,
                                              tx_imp, rx_imp)[0]}
    if args.checkpoint:
        variants["learned"] = _resolve_params("ul", args.checkpoint, config,
                                              tx_imp, rx_imp)[0]

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("variant", "angle_deg", "response_db"))
        for name, params_tx in variants.items():
            f_s = sector_precoder(sector_s, grid, params_tx, wf.wavelength)
            f_c = sector_precoder(sector_c, grid, params_tx, wf.wavelength)
            f = isac_precoder(f_s, f_c, args.omega_r, wf.tx_power).weights
            resp = precoder_response(tx_imp, f, grid, wf.wavelength)
            for theta, r in zip(np.degrees(grid), resp):
                w.writerow((name, round(float(theta), 6), float(r)))
    _manifest(Path(str(args.out) + ".manifest.yaml"), config, args)
    return 0


def cmd_selftest(args) -> int:
    """Gradient finite-difference checks and metric oracles; exit 3 on failure."""
    from . import selftest
    failures = selftest.run(verbose=True)
    return 0 if failures == 0 else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isacal", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, eval_flags=True):
        sp.add_argument("--config", help="YAML config path (overrides --preset)")
        sp.add_argument("--preset", default="desk", choices=("desk", "paper_full"))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--impairment-seeds", type=lambda s: [int(v) for v in s.split(",")],
                        default=[1], help="comma-separated impairment seeds")
        sp.add_argument("--out", required=True)
        if eval_flags:
            sp.add_argument("--baseline", default="matched",
                            choices=("matched", "mismatched", "ul", "slcb",
                                     "slcb-perturbed"))
            sp.add_argument("--checkpoint", help="trained checkpoint (.npz)")
            sp.add_argument("--omega-r", type=float, default=0.5)
            sp.add_argument("--target-pfa", type=float, default=1e-2)

    sp = sub.add_parser("calibrate", help="run the training loop")
    common(sp, eval_flags=False)
    sp.add_argument("--baseline", default="unsupervised",
                    choices=("unsupervised", "slcb", "slcb-perturbed", "none"))
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("roc", help="p_md / GOSPA vs false-alarm target")
    common(sp)
    sp.add_argument("--pfa-grid", type=lambda s: [float(v) for v in s.split(",")],
                    default=[1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    sp.set_defaults(func=lambda a: _eval_sweep(a, "roc"))

    sp = sub.add_parser("tradeoff", help="GOSPA / SER vs omega_r")
    common(sp)
    sp.add_argument("--omega-grid", type=lambda s: [float(v) for v in s.split(",")],
                    default=[0.0, 0.25, 0.5, 0.75, 1.0])
    sp.set_defaults(func=lambda a: _eval_sweep(a, "tradeoff"))

    sp = sub.add_parser("snr-sweep", help="p_md vs sensing SNR")
    common(sp)
    sp.add_argument("--snr-grid", type=lambda s: [float(v) for v in s.split(",")],
                    default=[-9.0, -6.0, -3.0, 0.0, 3.0])
    sp.set_defaults(func=lambda a: _eval_sweep(a, "snr-sweep"))

    sp = sub.add_parser("precoder-dump", help="precoder response CSV per variant")
    common(sp, eval_flags=False)
    sp.add_argument("--checkpoint", help="optional learned checkpoint")
    sp.add_argument("--omega-r", type=float, default=0.5)
    sp.add_argument("--sector-s", type=lambda s: [float(v) for v in s.split(",")],
                    default=[-40.0, -20.0], help="sensing sector bounds, deg")
    sp.add_argument("--sector-c", type=lambda s: [float(v) for v in s.split(",")],
                    default=[20.0, 40.0], help="comm sector bounds, deg")
    sp.set_defaults(func=cmd_precoder_dump)

    sp = sub.add_parser("selftest", help="FD gradient checks and metric oracles")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, ArithmeticError, CalibrationError,
            SceneGenerationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
