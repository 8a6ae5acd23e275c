#!/usr/bin/env python3
"""Dump one simulated angle-delay map as CSV (angle_deg, range_m,
power_db) — the input the `plot --kind adm` heatmap consumes.

Usage:
    python3 scripts/dump_adm.py --out adm.csv [--seed 0] [--impairment-seed 1]
"""

import argparse
import csv

import numpy as np

from isacal.channel import sensing_forward
from isacal.cli import _draw_true_arrays
from isacal.core import LearnableParams
from isacal.precoder import isac_precoder, sector_precoder
from isacal.scenario import (SPEED_OF_LIGHT, draw_sectors, draw_sensing_scene,
                             draw_symbols, preset, sample_rng)
from isacal.sensing_rx import adm, build_dictionaries, delay_grid_for


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--impairment-seed", type=int, default=1)
    p.add_argument("--omega-r", type=float, default=1.0)
    args = p.parse_args()

    cfg = preset("desk")
    rng = sample_rng(args.seed)
    tx_imp, rx_imp = _draw_true_arrays(cfg, args.impairment_seed)
    params_rx = LearnableParams(betas=rx_imp.gains, omegas=rx_imp.positions)
    params_tx = LearnableParams(betas=tx_imp.gains, omegas=tx_imp.positions)

    wf = cfg.waveform
    grid = cfg.angle_grid()
    sector_s, sector_c = draw_sectors(cfg, rng)
    x = draw_symbols(wf.num_subcarriers, cfg.constellation, rng)
    scene = draw_sensing_scene(cfg, sector_s, rng)
    f_s = sector_precoder(sector_s, grid, params_tx, wf.wavelength)
    f_c = sector_precoder(sector_c, grid, params_tx, wf.wavelength)
    f = isac_precoder(f_s, f_c, args.omega_r, wf.tx_power).weights
    y = sensing_forward(scene, f, x, tx_imp, rx_imp, wf,
                        cfg.n0_sensing, rng).y
    delay_grid = delay_grid_for(scene.range_interval, cfg.n_tau)
    dicts = build_dictionaries(grid, delay_grid, params_rx, x,
                               wf.wavelength, wf.subcarrier_spacing)
    power = adm(y, dicts)
    power_db = 10.0 * np.log10(power / power.max())

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("angle_deg", "range_m", "power_db"))
        for i, theta in enumerate(np.degrees(grid)):
            for j, tau in enumerate(delay_grid):
                w.writerow((round(float(theta), 6),
                            round(SPEED_OF_LIGHT * float(tau) / 2.0, 6),
                            round(float(power_db[i, j]), 6)))
    print(f"wrote {args.out}; true targets at "
          f"{np.degrees(scene.thetas).round(1)} deg")


if __name__ == "__main__":
    main()
