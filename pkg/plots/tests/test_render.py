from pathlib import Path

import pytest

pytest.importorskip("isacplots")

from isacplots.cli import main
from isacplots.io import EmptyInputError, SchemaError, load_csv
from isacplots.render import FigureSpec, render

FIXTURES = Path(__file__).parent / "fixtures"


def _spec(kind, out, *names):
    return FigureSpec(kind=kind,
                      inputs=tuple(str(FIXTURES / n) for n in names),
                      out=str(out))


@pytest.mark.parametrize("kind,fixture", [
    ("roc", "roc_single.csv"),
    ("tradeoff", "tradeoff_multi.csv"),
    ("snr", "snr_single.csv"),
    ("precoder", "precoder.csv"),
    ("adm", "adm.csv"),
])
def test_each_kind_renders(tmp_path, kind, fixture):
    out = tmp_path / f"{kind}.png"
    summary = render(_spec(kind, out, fixture))
    assert out.exists() and out.stat().st_size > 0
    assert summary["kind"] == kind
    assert summary["curves"] >= 1


def test_single_seed_has_no_error_bars(tmp_path):
    summary = render(_spec("roc", tmp_path / "r.png", "roc_single.csv"))
    assert summary == {"kind": "roc", "curves": 1, "error_bars": False}


def test_multi_seed_aggregates_become_error_bars(tmp_path):
    summary = render(_spec("roc", tmp_path / "r.png", "roc_multi.csv"))
    assert summary["error_bars"] is True
    assert summary["curves"] == 1  # one mean curve, not one per seed


def test_multiple_inputs_one_curve_each(tmp_path):
    summary = render(_spec("roc", tmp_path / "r.png",
                           "roc_single.csv", "roc_multi.csv"))
    assert summary["curves"] == 2


def test_tradeoff_error_bars(tmp_path):
    summary = render(_spec("tradeoff", tmp_path / "t.png",
                           "tradeoff_multi.csv"))
    assert summary["error_bars"] is True


def test_schema_mismatch_names_missing_column():
    with pytest.raises(SchemaError, match="p_md"):
        load_csv(FIXTURES / "roc_bad_schema.csv", "roc")


def test_empty_csv_is_an_explicit_error(tmp_path):
    with pytest.raises(EmptyInputError, match="no data rows"):
        render(_spec("roc", tmp_path / "r.png", "roc_empty.csv"))
    assert not (tmp_path / "r.png").exists()


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="kind"):
        render(FigureSpec(kind="pie", inputs=("x.csv",),
                          out=str(tmp_path / "p.png")))


def test_rendering_is_deterministic(tmp_path):
    outs = []
    for name in ("a.png", "b.png"):
        out = tmp_path / name
        render(_spec("precoder", out, "precoder.csv"))
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_success(tmp_path):
    out = tmp_path / "roc.png"
    rc = main(["--kind", "roc", "--in", str(FIXTURES / "roc_multi.csv"),
               "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_cli_schema_error_exits_2(tmp_path, capsys):
    rc = main(["--kind", "roc", "--in", str(FIXTURES / "roc_bad_schema.csv"),
               "--out", str(tmp_path / "x.png")])
    assert rc == 2
    assert "p_md" in capsys.readouterr().err


def test_cli_missing_file_exits_2(tmp_path):
    rc = main(["--kind", "roc", "--in", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path / "x.png")])
    assert rc == 2
