"""Desk-scale experiment grids: scaling studies over corpus size, model
size, passage truncation length, pseudo-query count, and prompt use, plus
the four-row ablation table. Emits CSV curves and a manifest JSON."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import torch

from . import augment as aug
from . import data as ds
from . import model as mdl
from .corpus import Corpus, QueryRecord
from .pipeline import RunConfig, run_pipeline
from .tokenizer import train_tokenizer

CURVE_COLUMNS = ["cell_id", "axis", "value", "seed", "step", "loss", "ppl", "wall_ms"]


class HarnessError(RuntimeError):
    pass


@dataclass
class ExperimentGrid:
    """One-axis-at-a-time scaling grid around a fixed base config."""

    corpus_sizes: list[int] = field(default_factory=lambda: [100, 1000, 5000])
    model_tags: list[str] = field(default_factory=lambda: ["tiny", "small", "medium"])
    passage_truncs: list[int] = field(default_factory=lambda: [16, 32, 64])
    pseudo_query_counts: list[int] = field(default_factory=lambda: [5, 10, 20])
    prompt_flags: list[bool] = field(default_factory=lambda: [True, False])
    base: RunConfig = field(default_factory=RunConfig)
    base_corpus_size: int = 1000
    seeds: list[int] = field(default_factory=lambda: [0])
    budget: int = 500

    def axes(self) -> dict[str, list]:
        return {
            "corpus_size": self.corpus_sizes,
            "model_tag": self.model_tags,
            "passage_trunc": self.passage_truncs,
            "pseudo_query_count": self.pseudo_query_counts,
            "use_prompts": self.prompt_flags,
        }

    def cells(self) -> list[tuple[str, object, int]]:
        out = []
        for axis, values in self.axes().items():
            if not values:
                continue
            for value in values:
                for seed in self.seeds:
                    out.append((axis, value, seed))
        if not out:
            raise HarnessError("grid has no cells")
        return out


def cell_id(axis: str, value, seed: int) -> str:
    return f"{axis}={value}_seed={seed}"


def subsample_corpus(corpus: Corpus, size: int, seed: int) -> Corpus:
    """Seeded nested subsample: smaller sizes are prefixes of larger ones,
    so scaling cells train on strict subsets of each other."""
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    picked = sorted(order[: min(size, len(corpus))])
    return Corpus(records=[corpus.records[i] for i in picked])


def _corpus_hash(corpus: Corpus) -> str:
    h = hashlib.sha256()
    for r in corpus.records:
        h.update(f"{r.id}\x1f{r.title}\x1f{r.passage}\x1f{r.assigned_url}\x1e".encode())
    return h.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _cell_config(base: RunConfig, axis: str, value) -> RunConfig:
    cfg = dataclasses.replace(base)
    if axis == "model_tag":
        cfg = dataclasses.replace(cfg, stage1_size=str(value))
    elif axis == "passage_trunc":
        trunc = int(value)
        cfg = dataclasses.replace(cfg, passage_trunc=trunc,
                                  stage1_target_max=max(cfg.stage1_target_max, trunc + 16))
    elif axis == "pseudo_query_count":
        cfg = dataclasses.replace(cfg, k=int(value))
    elif axis == "use_prompts":
        cfg = dataclasses.replace(cfg, use_prompts=bool(value))
    elif axis != "corpus_size":
        raise HarnessError(f"unknown axis {axis!r}")
    return cfg


@dataclass
class CurvePoint:
    cell_id: str
    axis: str
    value: str
    seed: int
    step: int
    loss: float
    ppl: float
    wall_ms: float


def run_cell(
    corpus: Corpus,
    grid: ExperimentGrid,
    axis: str,
    value,
    seed: int,
    out_dir: Path,
) -> list[CurvePoint]:
    """Train stage 1 for one cell, resuming from saved state if present."""
    cid = cell_id(axis, value, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _cell_config(grid.base, axis, value)
    size = int(value) if axis == "corpus_size" else grid.base_corpus_size
    sub = subsample_corpus(corpus, size, grid.base.seed)

    tok = train_tokenizer(sub, cfg.vocab_size, seed=cfg.seed)
    acfg = dataclasses.replace(cfg.augment_config(), seed=seed)
    pairs = ds.build_stage1(aug.build_augmented_set(sub, acfg), sub,
                            cfg.stage1_spec(), tok)

    tcfg = cfg.train_config(grid.budget, cfg.stage1_warmup)
    tcfg.seed = seed
    tcfg.eval_every = max(1, min(tcfg.eval_every, grid.budget // 5 or 1))

    mcfg = mdl.ModelConfig.from_tag(cfg.stage1_size, vocab_size=len(tok),
                                    max_source_len=cfg.query_max,
                                    max_target_len=cfg.stage1_target_max)
    model = mdl.init_model(mcfg, seed=seed)
    trainer = mdl.Trainer(model, tcfg)

    state_path = out_dir / f"{cid}.state.pt"
    points: list[CurvePoint] = []
    if state_path.exists():
        state = torch.load(state_path, weights_only=False)
        model.load_state_dict(state["model"])
        model.step = state["step"]
        trainer.opt.load_state_dict(state["opt"])
        trainer.rng.set_state(state["rng"])
        points = [CurvePoint(**p) for p in state["points"]]

    t0 = time.monotonic()
    while model.step < tcfg.max_steps:
        entry = trainer.step(trainer.sample_batch(pairs))
        if entry.step % tcfg.eval_every == 0 or entry.step == tcfg.max_steps:
            ppl = mdl.perplexity(model, pairs)
            points.append(CurvePoint(
                cell_id=cid, axis=axis, value=str(value), seed=seed,
                step=entry.step, loss=entry.loss, ppl=ppl,
                wall_ms=(time.monotonic() - t0) * 1000.0,
            ))
            torch.save({
                "model": model.state_dict(), "step": model.step,
                "opt": trainer.opt.state_dict(), "rng": trainer.rng.get_state(),
                "points": [asdict(p) for p in points],
            }, state_path)
    return points


def _write_curves(points: list[CurvePoint], path: Path) -> None:
    rows = [CURVE_COLUMNS] + [
        [p.cell_id, p.axis, p.value, p.seed, p.step,
         f"{p.loss:.6f}", f"{p.ppl:.6f}", f"{p.wall_ms:.1f}"]
        for p in points
    ]
    _atomic_write(path, "\n".join(",".join(str(c) for c in r) for r in rows) + "\n")


def run_grid(grid: ExperimentGrid, corpus: Corpus, out_dir: str | Path) -> dict:
    """Run every cell; one curve CSV per cell, one combined CSV per axis
    study, and a manifest of resolved configs. Cell failures are recorded
    and remaining cells proceed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"cells": {}, "axes": {k: [str(v) for v in vals]
                                            for k, vals in grid.axes().items()}}
    by_axis: dict[str, list[CurvePoint]] = {}
    for axis, value, seed in grid.cells():
        cid = cell_id(axis, value, seed)
        cfg = _cell_config(grid.base, axis, value)
        size = int(value) if axis == "corpus_size" else grid.base_corpus_size
        sub = subsample_corpus(corpus, size, grid.base.seed)
        entry = {
            "axis": axis, "value": str(value), "seed": seed,
            "config": asdict(cfg), "budget": grid.budget,
            "corpus_size": len(sub), "corpus_hash": _corpus_hash(sub),
        }
        try:
            points = run_cell(corpus, grid, axis, value, seed, out)
            _write_curves(points, out / f"{cid}.csv")
            by_axis.setdefault(axis, []).extend(points)
            entry["status"] = "ok"
        except Exception as exc:  # keep remaining cells running
            entry["status"] = f"failed: {exc}"
        manifest["cells"][cid] = entry
    for axis, points in by_axis.items():
        _write_curves(points, out / f"study_{axis}.csv")
    manifest["directional"] = _directional_report(by_axis, grid)
    _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2))
    return manifest


def _final_metric(points: list[CurvePoint], cid_prefix: str, seed: int, key: str) -> float | None:
    cell = [p for p in points if p.cell_id.startswith(cid_prefix) and p.seed == seed]
    if not cell:
        return None
    last = max(cell, key=lambda p: p.step)
    return getattr(last, key)


def _directional_report(by_axis: dict[str, list[CurvePoint]], grid: ExperimentGrid) -> dict:
    """Soft sign-consistency checks for the expected scaling directions;
    reported, never enforced."""
    report: dict = {}
    if "passage_trunc" in by_axis and len(grid.passage_truncs) >= 2:
        lo, hi = min(grid.passage_truncs), max(grid.passage_truncs)
        votes = []
        for seed in grid.seeds:
            a = _final_metric(by_axis["passage_trunc"], f"passage_trunc={lo}_", seed, "ppl")
            b = _final_metric(by_axis["passage_trunc"], f"passage_trunc={hi}_", seed, "ppl")
            if a is not None and b is not None:
                votes.append(a < b)
        report["shorter_trunc_lower_ppl"] = {"votes": votes, "consistent": sum(votes)}
    if "model_tag" in by_axis and len(grid.model_tags) >= 2:
        small, large = grid.model_tags[0], grid.model_tags[-1]
        votes = []
        for seed in grid.seeds:
            a = _final_metric(by_axis["model_tag"], f"model_tag={large}_", seed, "loss")
            b = _final_metric(by_axis["model_tag"], f"model_tag={small}_", seed, "loss")
            if a is not None and b is not None:
                votes.append(a < b)
        report["larger_model_lower_loss"] = {"votes": votes, "consistent": sum(votes)}
    return report


ABLATION_VARIANTS = ["base", "no_prompt", "increased_maxlen", "reduced_pseudo_query"]


def ablation_config(base: RunConfig, variant: str) -> RunConfig:
    """Each variant differs from base in exactly one knob."""
    if variant == "base":
        return dataclasses.replace(base)
    if variant == "no_prompt":
        return dataclasses.replace(base, use_prompts=False)
    if variant == "increased_maxlen":
        trunc = base.passage_trunc * 4
        return dataclasses.replace(
            base, passage_trunc=trunc,
            stage1_target_max=max(base.stage1_target_max, trunc + 16),
            stage2_source_max=max(base.stage2_source_max, trunc + 16),
        )
    if variant == "reduced_pseudo_query":
        return dataclasses.replace(base, k=max(1, base.k // 2))
    raise HarnessError(f"unknown ablation variant {variant!r}")


def run_ablations(
    base: RunConfig,
    corpus: Corpus,
    queries: list[QueryRecord],
    out_dir: str | Path,
    seeds: list[int] | None = None,
) -> list[dict]:
    """Train and evaluate the full two-stage pipeline per variant; emits
    ablations.csv with one row per (variant, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = seeds or [base.seed]
    rows: list[dict] = []
    for variant in ABLATION_VARIANTS:
        for seed in seeds:
            cfg = dataclasses.replace(ablation_config(base, variant),
                                      seed=seed, run_single_stage=False)
            arts = run_pipeline(corpus, queries, cfg, out / f"{variant}_seed{seed}")
            report = arts.reports["two_stage"]
            rows.append({
                "variant": variant, "seed": seed,
                "hits_at_1": report.hits_at_1,
                "n_queries": report.n_queries,
                "budget_stage1": cfg.stage1_steps,
                "budget_stage2": cfg.stage2_steps,
            })
    header = ["variant", "seed", "hits_at_1", "n_queries", "budget_stage1", "budget_stage2"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(r[c]) for c in header))
    _atomic_write(out / "ablations.csv", "\n".join(lines) + "\n")
    return rows
