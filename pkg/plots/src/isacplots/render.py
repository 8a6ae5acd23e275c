"""Figure assembly: one function per kind, a dispatching `render`.

Each kind draws from the documented CSV schemas (see io.py).  For the
run-record kinds, per-grid-point aggregate rows (impairment_seed ==
"mean" / "std") are preferred when present and drawn as mean curves with
standard-deviation error bars; otherwise the raw per-seed rows are drawn
as plain curves, one per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import load_csv

_AGGREGATE_TAGS = ("mean", "std")


@dataclass(frozen=True)
class FigureSpec:
    kind: str                 # roc | tradeoff | snr | precoder | adm
    inputs: tuple             # CSV paths
    out: str                  # image path


def _split_aggregates(rows):
    raw = [r for r in rows if r["impairment_seed"] not in _AGGREGATE_TAGS]
    mean = [r for r in rows if r["impairment_seed"] == "mean"]
    std = [r for r in rows if r["impairment_seed"] == "std"]
    return raw, mean, std


def _series(rows, x_col: str, y_col: str):
    pts = sorted((float(r[x_col]), float(r[y_col])) for r in rows)
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


def _plot_runs(ax, path, kind, x_col, y_col, key_col, style=None):
    """One curve per input: mean +/- std when aggregates exist, else one
    curve per impairment seed.  Returns (num curves, error bars drawn)."""
    rows = load_csv(path, kind)
    raw, mean, std = _split_aggregates(rows)
    label = raw[0]["baseline"] if raw else mean[0]["baseline"]
    style = style or {}
    if mean and std:
        x, y = _series(mean, x_col, y_col)
        err = dict(zip(np.round([float(r[key_col]) for r in std], 12),
                       [float(r[y_col]) for r in std]))
        key = np.round([float(r[key_col]) for r in sorted(
            mean, key=lambda r: float(r[x_col]))], 12)
        yerr = np.array([err[k] for k in key])
        ax.errorbar(x, y, yerr=yerr, label=label, capsize=3, **style)
        return 1, True
    seeds = sorted({r["impairment_seed"] for r in raw})
    for s in seeds:
        x, y = _series([r for r in raw if r["impairment_seed"] == s],
                       x_col, y_col)
        name = label if len(seeds) == 1 else f"{label} (imp {s})"
        ax.plot(x, y, label=name, **style)
    return len(seeds), False


def render_roc(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    curves = 0
    bars = False
    for path in spec.inputs:
        n, b = _plot_runs(ax, path, "roc", "p_fa", "p_md", "target_pfa",
                          style={"marker": "o"})
        curves += n
        bars = bars or b
    ax.set_xscale("log")
    ax.set_xlabel("false-alarm probability")
    ax.set_ylabel("misdetection probability")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(spec.out, bbox_inches="tight")
    plt.close(fig)
    return {"kind": "roc", "curves": curves, "error_bars": bars}


def render_tradeoff(spec: FigureSpec):
    fig, ax_g = plt.subplots(figsize=(6, 4.5))
    ax_s = ax_g.twinx()
    curves = 0
    bars = False
    for path in spec.inputs:
        n, b = _plot_runs(ax_g, path, "tradeoff", "omega_r", "gospa",
                          "omega_r", style={"marker": "o"})
        _plot_runs(ax_s, path, "tradeoff", "omega_r", "ser", "omega_r",
                   style={"marker": "s", "linestyle": "--"})
        curves += n
        bars = bars or b
    ax_g.set_xlabel("sensing power share")
    ax_g.set_ylabel("GOSPA [m] (solid)")
    ax_s.set_ylabel("SER (dashed)")
    ax_g.grid(True, alpha=0.3)
    ax_g.legend(loc="upper left")
    fig.savefig(spec.out, bbox_inches="tight")
    plt.close(fig)
    return {"kind": "tradeoff", "curves": curves, "error_bars": bars}


def render_snr(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    curves = 0
    bars = False
    for path in spec.inputs:
        n, b = _plot_runs(ax, path, "snr", "snr_s_db", "p_md", "snr_s_db",
                          style={"marker": "o"})
        curves += n
        bars = bars or b
    ax.set_xlabel("sensing SNR [dB]")
    ax.set_ylabel("misdetection probability")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(spec.out, bbox_inches="tight")
    plt.close(fig)
    return {"kind": "snr", "curves": curves, "error_bars": bars}


def render_precoder(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    curves = 0
    for path in spec.inputs:
        rows = load_csv(path, "precoder")
        for variant in sorted({r["variant"] for r in rows}):
            x, y = _series([r for r in rows if r["variant"] == variant],
                           "angle_deg", "response_db")
            ax.plot(x, y, label=variant)
            curves += 1
    ax.set_xlabel("angle [deg]")
    ax.set_ylabel("response [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(spec.out, bbox_inches="tight")
    plt.close(fig)
    return {"kind": "precoder", "curves": curves, "error_bars": False}


def render_adm(spec: FigureSpec):
    if len(spec.inputs) != 1:
        raise ValueError("adm figures take exactly one input CSV")
    rows = load_csv(spec.inputs[0], "adm")
    angles = np.array(sorted({float(r["angle_deg"]) for r in rows}))
    ranges = np.array(sorted({float(r["range_m"]) for r in rows}))
    grid = np.full((ranges.size, angles.size), np.nan)
    a_idx = {a: i for i, a in enumerate(angles)}
    r_idx = {r: i for i, r in enumerate(ranges)}
    for row in rows:
        grid[r_idx[float(row["range_m"])],
             a_idx[float(row["angle_deg"])]] = float(row["power_db"])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(angles, ranges, grid, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="power [dB]")
    ax.set_xlabel("angle [deg]")
    ax.set_ylabel("range [m]")
    fig.savefig(spec.out, bbox_inches="tight")
    plt.close(fig)
    return {"kind": "adm", "curves": 1, "error_bars": False}


_RENDERERS = {
    "roc": render_roc,
    "tradeoff": render_tradeoff,
    "snr": render_snr,
    "precoder": render_precoder,
    "adm": render_adm,
}


def render(spec: FigureSpec) -> dict:
    """Write the figure for `spec`; returns a summary of what was drawn."""
    if spec.kind not in _RENDERERS:
        raise ValueError(f"unknown figure kind '{spec.kind}'")
    if not spec.inputs:
        raise ValueError("at least one input CSV is required")
    return _RENDERERS[spec.kind](spec)
