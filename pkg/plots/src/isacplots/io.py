"""CSV loading and schema validation for the figure kinds.

Expected schemas (header row required):

run records (kinds roc / tradeoff / snr), as written by the isacal
evaluation commands:
    baseline, impairment_seed, seed, omega_r, eta_r, target_pfa, delta,
    snr_s_db, p_md, p_fa, gospa, ser, wall_time_s
Rows with impairment_seed equal to "mean" / "std" are per-grid-point
aggregates over impairment seeds.

precoder kind:  variant, angle_deg, response_db
adm kind:       angle_deg, range_m, power_db
"""

from __future__ import annotations

import csv

REQUIRED_COLUMNS = {
    "roc": ("baseline", "impairment_seed", "target_pfa", "p_fa", "p_md"),
    "tradeoff": ("baseline", "impairment_seed", "omega_r", "gospa", "ser"),
    "snr": ("baseline", "impairment_seed", "snr_s_db", "p_md"),
    "precoder": ("variant", "angle_deg", "response_db"),
    "adm": ("angle_deg", "range_m", "power_db"),
}


class SchemaError(ValueError):
    """Input CSV does not carry the expected header."""


class EmptyInputError(ValueError):
    """Input CSV has no data rows."""


def load_csv(path, kind: str) -> list[dict]:
    """Rows as dicts, validated against the kind's required columns."""
    required = REQUIRED_COLUMNS[kind]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"missing column '{col}' in {path}")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"no data rows in {path}")
    return rows
