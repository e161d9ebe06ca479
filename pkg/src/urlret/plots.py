"""Render harness curve CSVs to SVG line charts (loss/PPL vs. step)."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import CURVE_COLUMNS


class PlotError(ValueError):
    pass


def _read_curves(csv_path: Path) -> dict[str, list[dict]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotError(f"{csv_path}: empty CSV")
        missing = [c for c in CURVE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise PlotError(f"{csv_path}: missing column {missing[0]!r}")
        by_cell: dict[str, list[dict]] = defaultdict(list)
        for row in reader:
            by_cell[row["cell_id"]].append(row)
    if not by_cell:
        raise PlotError(f"{csv_path}: no data rows")
    return by_cell


def plot_curves(csv_path: str | Path, out_dir: str | Path,
                metric: str = "ppl") -> Path:
    """One SVG per input CSV, one line per cell. Output is byte-stable
    for identical input."""
    if metric not in ("ppl", "loss"):
        raise PlotError(f"unknown metric {metric!r}")
    csv_path = Path(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_cell = _read_curves(csv_path)

    plt.rcParams["svg.hashsalt"] = "urlret"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6, 4))
    for cell in sorted(by_cell):
        rows = sorted(by_cell[cell], key=lambda r: int(r["step"]))
        steps = [int(r["step"]) for r in rows]
        values = [float(r[metric]) for r in rows]
        ax.plot(steps, values, marker="o", markersize=3, label=cell)
    ax.set_xlabel("training step")
    ax.set_ylabel(metric)
    if metric == "ppl":
        ax.set_yscale("log")
    ax.set_title(csv_path.stem)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = out / f"{csv_path.stem}_{metric}.svg"
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
