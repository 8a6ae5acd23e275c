#!/usr/bin/env python3
"""End-to-end desk-scale study: train the unsupervised calibration for a
few impairment seeds, then dump ROC, trade-off, SNR-sweep and precoder
CSVs for the learned model and both model-based baselines.

Usage:
    python3 scripts/run_desk_study.py [--outdir results] [--seeds 1,2]

Roughly 10 minutes per impairment seed on one core.  Outputs land in
<outdir>/ and can be fed straight to the `plot` tool, e.g.

    plot --kind roc --in results/roc_matched.csv results/roc_ul.csv \
         --out results/roc.png
"""

import argparse
import sys
from pathlib import Path

from isacal.cli import main as isacal


def run(argv):
    print("+ isacal", " ".join(argv))
    rc = isacal(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--outdir", default="results")
    p.add_argument("--seeds", default="1,2",
                   help="comma-separated impairment seeds")
    p.add_argument("--data-seed", type=int, default=7)
    args = p.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds.split(",")

    for imp in seeds:
        run(["calibrate", "--preset", "desk", "--seed", str(args.data_seed),
             "--impairment-seeds", imp, "--out", str(out / f"train_imp{imp}")])

    for baseline in ("matched", "mismatched", "ul"):
        for imp in seeds:
            extra = []
            if baseline == "ul":
                extra = ["--checkpoint",
                         str(out / f"train_imp{imp}" / "checkpoint.npz")]
            common = ["--preset", "desk", "--seed", str(args.data_seed + 100),
                      "--impairment-seeds", imp, "--baseline", baseline] + extra
            run(["roc"] + common
                + ["--out", str(out / f"roc_{baseline}_imp{imp}.csv")])
            run(["tradeoff"] + common
                + ["--out", str(out / f"tradeoff_{baseline}_imp{imp}.csv")])

    run(["precoder-dump", "--preset", "desk", "--impairment-seeds", seeds[0],
         "--checkpoint", str(out / f"train_imp{seeds[0]}" / "checkpoint.npz"),
         "--out", str(out / "precoder.csv")])
    print(f"done; CSVs in {out}/")


if __name__ == "__main__":
    main()
