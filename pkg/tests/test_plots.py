import csv

import pytest

from urlret.harness import CURVE_COLUMNS
from urlret.plots import PlotError, plot_curves


def _write_curves(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _row(cell, step, loss, ppl):
    return {"cell_id": cell, "axis": "corpus_size", "value": "4", "seed": "0",
            "step": str(step), "loss": f"{loss}", "ppl": f"{ppl}",
            "wall_ms": "12"}


@pytest.fixture()
def curves_csv(tmp_path):
    rows = [_row("corpus_size=4_seed=0", s, 3.0 - 0.01 * s, 20.0 - 0.05 * s)
            for s in range(0, 100, 10)]
    rows += [_row("corpus_size=8_seed=0", s, 3.5 - 0.01 * s, 33.0 - 0.05 * s)
             for s in range(0, 100, 10)]
    return _write_curves(tmp_path / "study_corpus_size.csv", rows)


def test_output_name_follows_stem_and_metric(curves_csv, tmp_path):
    out = plot_curves(curves_csv, tmp_path / "figs", metric="ppl")
    assert out.name == "study_corpus_size_ppl.svg"
    assert out.exists() and out.stat().st_size > 0


def test_loss_metric_renders(curves_csv, tmp_path):
    out = plot_curves(curves_csv, tmp_path / "figs", metric="loss")
    assert out.name == "study_corpus_size_loss.svg"


def test_svg_bytes_stable_across_renders(curves_csv, tmp_path):
    a = plot_curves(curves_csv, tmp_path / "a")
    b = plot_curves(curves_csv, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


def test_missing_column_error_names_the_column(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["cell_id", "step", "loss"])
        writer.writeheader()
        writer.writerow({"cell_id": "c", "step": "0", "loss": "1.0"})
    with pytest.raises(PlotError, match="'axis'"):
        plot_curves(path, tmp_path / "figs")


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(PlotError, match="empty"):
        plot_curves(path, tmp_path / "figs")


def test_header_only_rejected(tmp_path):
    path = _write_curves(tmp_path / "no_rows.csv", [])
    with pytest.raises(PlotError, match="no data rows"):
        plot_curves(path, tmp_path / "figs")


def test_unknown_metric_rejected(curves_csv, tmp_path):
    with pytest.raises(PlotError, match="metric"):
        plot_curves(curves_csv, tmp_path / "figs", metric="accuracy")
