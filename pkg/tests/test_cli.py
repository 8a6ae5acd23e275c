import csv

import numpy as np
import pytest
import yaml

from isacal.cli import RUN_RECORD_HEADER, main
from isacal.scenario import preset
from isacal.trainer import TRAIN_LOG_HEADER, load_checkpoint


@pytest.fixture
def tiny_yaml(tmp_path, small_config):
    cfg = small_config
    cfg.eval.n_test = 60
    cfg.eval.n_calib = 1000
    cfg.train.iterations = 2
    path = tmp_path / "tiny.yaml"
    path.write_text(cfg.to_yaml())
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_calibrate_writes_artifacts(tmp_path, tiny_yaml):
    out = tmp_path / "run"
    rc = main(["calibrate", "--config", tiny_yaml, "--seed", "3",
               "--impairment-seeds", "1", "--out", str(out)])
    assert rc == 0
    data = load_checkpoint(out / "checkpoint.npz")
    assert data["params"].size == 6 * 8
    rows = _read_csv(out / "trainlog.csv")
    assert rows[0] == list(TRAIN_LOG_HEADER)
    assert len(rows) == 3
    manifest = yaml.safe_load((out / "manifest.yaml").read_text())
    assert {"version", "config_sha256", "argv", "seed",
            "impairment_seeds", "config"} <= set(manifest)


def test_calibrate_rejects_equal_seeds(tmp_path, tiny_yaml):
    rc = main(["calibrate", "--config", tiny_yaml, "--seed", "1",
               "--impairment-seeds", "1", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_calibrate_deterministic_trainlog(tmp_path, tiny_yaml):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["calibrate", "--config", tiny_yaml, "--seed", "7",
                     "--impairment-seeds", "1", "--out", str(out)]) == 0
        outs.append((out / "trainlog.csv").read_bytes())
    assert outs[0] == outs[1]


def test_roc_csv_schema_and_aggregation(tmp_path, tiny_yaml):
    out = tmp_path / "roc.csv"
    rc = main(["roc", "--config", tiny_yaml, "--seed", "3",
               "--impairment-seeds", "1,2", "--baseline", "mismatched",
               "--pfa-grid", "0.05,0.2", "--out", str(out)])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0] == list(RUN_RECORD_HEADER)
    body = rows[1:]
    # 2 seeds x 2 grid points + mean/std per grid point
    assert len(body) == 4 + 4
    stats = [r for r in body if r[1] in ("mean", "std")]
    assert len(stats) == 4
    assert (tmp_path / "roc.csv.manifest.yaml").exists()


def test_roc_ul_requires_checkpoint(tmp_path, tiny_yaml):
    rc = main(["roc", "--config", tiny_yaml, "--baseline", "ul",
               "--out", str(tmp_path / "r.csv")])
    assert rc == 2


def test_tradeoff_runs(tmp_path, tiny_yaml):
    out = tmp_path / "t.csv"
    rc = main(["tradeoff", "--config", tiny_yaml, "--seed", "4",
               "--impairment-seeds", "1", "--baseline", "matched",
               "--omega-grid", "0.0,1.0", "--target-pfa", "0.1",
               "--out", str(out)])
    assert rc == 0
    body = _read_csv(out)[1:]
    assert sorted(float(r[3]) for r in body) == [0.0, 1.0]


def test_precoder_dump_schema(tmp_path, tiny_yaml):
    out = tmp_path / "p.csv"
    rc = main(["precoder-dump", "--config", tiny_yaml,
               "--impairment-seeds", "1", "--out", str(out)])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0] == ["variant", "angle_deg", "response_db"]
    variants = {r[0] for r in rows[1:]}
    assert variants == {"matched", "mismatched"}
    cfg = preset("desk")
    # grid resolution rows per variant
    assert len(rows) - 1 == 2 * 61  # tiny config n_theta


def test_missing_config_file_exits_2(tmp_path):
    rc = main(["roc", "--config", str(tmp_path / "nope.yaml"),
               "--out", str(tmp_path / "o.csv")])
    assert rc == 2


def test_selftest_passes():
    assert main(["selftest"]) == 0
