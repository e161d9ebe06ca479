"""Command-line entrypoint for the whole workflow.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import torch

from . import augment as aug
from . import data as ds
from . import evaluate as ev
from . import harness as hn
from . import model as mdl
from . import plots
from . import retrieve as ret
from . import synth
from .corpus import (Corpus, CorpusError, ingest_corpus, load_queries,
                     write_corpus)
from .pipeline import RunConfig, run_pipeline
from .tokenizer import Tokenizer, TokenizerError, train_tokenizer


class _Ctx:
    def __init__(self, config: str | None, seed: int | None, out: str,
                 dry_run: bool, threads: int):
        self.config_path = config
        self.seed = seed
        self.out = Path(out)
        self.dry_run = dry_run
        self.threads = threads

    def run_config(self, **overrides) -> RunConfig:
        if self.seed is not None:
            overrides.setdefault("seed", self.seed)
        if self.config_path:
            return RunConfig.from_file(self.config_path, **overrides)
        return RunConfig(**{k: v for k, v in overrides.items() if v is not None})

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else 0


def _plan(ctx: _Ctx, name: str, plan: dict) -> bool:
    if ctx.dry_run:
        click.echo(json.dumps({"command": name, "plan": plan}, indent=2, sort_keys=True))
        return True
    ctx.out.mkdir(parents=True, exist_ok=True)
    return False


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON config file; CLI flags override file values.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default="out")
@click.option("--dry-run", is_flag=True, help="Validate and print the plan only.")
@click.option("--threads", type=int, default=1,
              help="Torch CPU threads (1 keeps runs bit-deterministic).")
@click.pass_context
def main(ctx, config, seed, out, dry_run, threads):
    """Two-stage generative retrieval lab: synth, ingest, train, retrieve,
    evaluate, and scaling/ablation experiments."""
    torch.set_num_threads(threads)
    ctx.obj = _Ctx(config, seed, out, dry_run, threads)


@main.command(name="synth")
@click.option("--n-records", type=int, required=True)
@click.option("--detail-words", type=int, default=0,
              help="Random words appended to each passage.")
@click.pass_obj
def synth_cmd(ctx: _Ctx, n_records, detail_words):
    """Generate a synthetic corpus JSONL + queries TSV."""
    if _plan(ctx, "synth", {"n_records": n_records, "seed": ctx.resolved_seed(),
                            "detail_words": detail_words}):
        return
    corpus_path = ctx.out / "corpus.jsonl"
    queries_path = ctx.out / "queries.tsv"
    synth.write_synth(n_records, ctx.resolved_seed(), corpus_path, queries_path,
                      detail_words=detail_words)
    click.echo(f"wrote {corpus_path} and {queries_path}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@click.pass_obj
def ingest(ctx: _Ctx, corpus_path):
    """Validate a corpus and freeze URL assignments."""
    if _plan(ctx, "ingest", {"corpus": corpus_path, "seed": ctx.resolved_seed()}):
        return
    corpus = ingest_corpus(corpus_path, ctx.resolved_seed())
    out_path = ctx.out / "corpus.canonical.jsonl"
    write_corpus(corpus, out_path)
    click.echo(f"ingested {len(corpus)} records -> {out_path}")


@main.command(name="train-tokenizer")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--vocab-size", type=int, default=2048)
@click.pass_obj
def train_tokenizer_cmd(ctx: _Ctx, corpus_path, vocab_size):
    """Learn a byte-level BPE vocabulary over the corpus."""
    if _plan(ctx, "train-tokenizer", {"corpus": corpus_path, "vocab_size": vocab_size}):
        return
    corpus = ingest_corpus(corpus_path, ctx.resolved_seed())
    tok = train_tokenizer(corpus, vocab_size, seed=ctx.resolved_seed())
    out_path = ctx.out / "tokenizer.json"
    tok.save(out_path)
    click.echo(f"trained vocab of {len(tok)} -> {out_path} (hash {tok.content_hash()[:12]})")


@main.command(name="augment")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.pass_obj
def augment_cmd(ctx: _Ctx, corpus_path):
    """Generate pseudo queries per passage."""
    cfg = ctx.run_config()
    if _plan(ctx, "augment", {"corpus": corpus_path, "augment": asdict(cfg.augment_config())}):
        return
    corpus = ingest_corpus(corpus_path, cfg.seed)
    queries = aug.build_augmented_set(corpus, cfg.augment_config())
    out_path = ctx.out / "pseudo_queries.tsv"
    aug.write_pseudo_queries(queries, out_path)
    click.echo(f"wrote {len(queries)} pseudo queries -> {out_path}")


@main.command(name="build-data")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--pseudo", "pseudo_path", type=click.Path(exists=True), default=None)
@click.option("--stage", type=click.Choice(["1", "2", "single"]), required=True)
@click.pass_obj
def build_data(ctx: _Ctx, corpus_path, tokenizer_path, pseudo_path, stage):
    """Assemble tokenized training pairs for one stage."""
    cfg = ctx.run_config()
    if _plan(ctx, "build-data", {"corpus": corpus_path, "stage": stage}):
        return
    corpus = ingest_corpus(corpus_path, cfg.seed)
    tok = Tokenizer.load(tokenizer_path)
    if stage in ("1", "single") and pseudo_path is None:
        raise click.UsageError("--pseudo is required for stage 1 / single")
    if stage == "1":
        pairs = ds.build_stage1(aug.load_pseudo_queries(pseudo_path), corpus,
                                cfg.stage1_spec(), tok)
        spec = cfg.stage1_spec()
    elif stage == "2":
        spec = cfg.stage2_spec()
        pairs = ds.build_stage2(corpus, spec, tok, stage1_spec=cfg.stage1_spec())
    else:
        spec = cfg.single_spec()
        pairs = ds.build_single_stage(aug.load_pseudo_queries(pseudo_path), corpus, spec, tok)
    out_path = ctx.out / f"stage{stage}.jsonl"
    ds.save_pairs(pairs, spec, tok, out_path)
    click.echo(f"wrote {len(pairs)} pairs -> {out_path}")


@main.command(name="train")
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--size", type=click.Choice(sorted(mdl.SIZE_LADDER)), default="tiny")
@click.option("--steps", type=int, default=2000)
@click.option("--warmup", type=int, default=200)
@click.option("--ckpt-name", default="model.ckpt")
@click.pass_obj
def train_cmd(ctx: _Ctx, dataset_path, tokenizer_path, size, steps, warmup, ckpt_name):
    """Train one generation model on a serialized dataset."""
    cfg = ctx.run_config()
    if _plan(ctx, "train", {"dataset": dataset_path, "size": size, "steps": steps}):
        return
    tok = Tokenizer.load(tokenizer_path)
    pairs, spec = ds.load_pairs(dataset_path, tok)
    mcfg = mdl.ModelConfig.from_tag(size, vocab_size=len(tok),
                                    max_source_len=spec.source_max,
                                    max_target_len=spec.target_max)
    model = mdl.init_model(mcfg, seed=cfg.seed)
    tcfg = cfg.train_config(steps, min(warmup, steps))
    mdl.train(model, pairs, tcfg, stats_path=ctx.out / "train_stats.csv")
    ckpt = ctx.out / ckpt_name
    mdl.save_checkpoint(model, ckpt, tok.content_hash())
    ppl = mdl.perplexity(model, pairs)
    click.echo(f"trained {size} for {steps} steps, train ppl {ppl:.3f} -> {ckpt}")


@main.command(name="retrieve")
@click.argument("queries_path", type=click.Path(exists=True))
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice([ret.TWO_STAGE, ret.SINGLE_STAGE, ret.BM25]),
              default=ret.TWO_STAGE)
@click.option("--stage1-ckpt", type=click.Path(exists=True), default=None)
@click.option("--stage2-ckpt", type=click.Path(exists=True), default=None)
@click.option("--model-ckpt", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None,
              help="Required for bm25.")
@click.pass_obj
def retrieve_cmd(ctx: _Ctx, queries_path, tokenizer_path, method,
                 stage1_ckpt, stage2_ckpt, model_ckpt, corpus_path):
    """Run retrieval over a queries TSV, writing results JSONL."""
    cfg = ctx.run_config()
    if _plan(ctx, "retrieve", {"queries": queries_path, "method": method}):
        return
    tok = Tokenizer.load(tokenizer_path)
    queries = load_queries(queries_path)
    results: list[ret.RetrievalResult] = []
    if method == ret.BM25:
        if corpus_path is None:
            raise click.UsageError("--corpus is required for bm25")
        corpus = ingest_corpus(corpus_path, cfg.seed)
        index = ret.bm25_build(corpus)
        results = [ret.bm25_result(index, corpus, q.text, q.query_id) for q in queries]
    elif method == ret.TWO_STAGE:
        if not (stage1_ckpt and stage2_ckpt):
            raise click.UsageError("two_stage needs --stage1-ckpt and --stage2-ckpt")
        s1 = mdl.load_checkpoint(stage1_ckpt, tok.content_hash())
        s2 = mdl.load_checkpoint(stage2_ckpt, tok.content_hash())
        results = [ret.two_stage_retrieve(s1, s2, q.text, cfg.stage1_spec(),
                                          cfg.stage2_spec(), tok, query_id=q.query_id)
                   for q in queries]
    else:
        if not model_ckpt:
            raise click.UsageError("single_stage needs --model-ckpt")
        model = mdl.load_checkpoint(model_ckpt, tok.content_hash())
        results = [ret.single_stage_retrieve(model, q.text, cfg.single_spec(), tok,
                                             query_id=q.query_id)
                   for q in queries]
    out_path = ctx.out / "results.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps({
                "query_id": r.query_id, "method": r.method,
                "predicted_url": r.predicted_url,
                "intermediate_passage": r.intermediate_passage,
                "logprob_sum": r.logprob_sum,
            }, sort_keys=True) + "\n")
    click.echo(f"wrote {len(results)} results -> {out_path}")


@main.command(name="eval")
@click.argument("results_path", type=click.Path(exists=True))
@click.argument("queries_path", type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None,
              help="Enables membership analysis for two-stage results.")
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True), default=None)
@click.pass_obj
def eval_cmd(ctx: _Ctx, results_path, queries_path, corpus_path, tokenizer_path):
    """Score a results JSONL against labeled queries."""
    cfg = ctx.run_config()
    if _plan(ctx, "eval", {"results": results_path, "queries": queries_path}):
        return
    queries = load_queries(queries_path)
    results = []
    with open(results_path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            results.append(ret.RetrievalResult(
                query_id=obj["query_id"], predicted_url=obj["predicted_url"],
                method=obj["method"], per_step_logprobs=(),
                intermediate_passage=obj.get("intermediate_passage"),
            ))
    corpus = tok = None
    if corpus_path:
        corpus = ingest_corpus(corpus_path, cfg.seed)
        labels = {q.query_id: {corpus.get(p).assigned_url for p in q.positive_passage_ids}
                  for q in queries}
        if tokenizer_path:
            tok = Tokenizer.load(tokenizer_path)
    else:
        # without a corpus, positives must already be URLs
        labels = {q.query_id: set(q.positive_passage_ids) for q in queries}
    report = ev.evaluate(results, labels, corpus=corpus,
                         spec=cfg.stage1_spec() if tok else None, tok=tok)
    out_path = ctx.out / "eval_report.json"
    out_path.write_text(report.to_json(), encoding="utf-8")
    click.echo(f"hits@1 {report.hits_at_1:.4f} over {report.n_queries} queries -> {out_path}")
    if corpus is not None:
        by_qid = {q.query_id: q for q in queries}
        ev.export_traces(results, corpus, labels,
                         {q.query_id: list(q.positive_passage_ids) for q in queries},
                         {q.query_id: q.text for q in queries},
                         ctx.out / "traces.jsonl")


@main.command(name="grid")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--budget", type=int, default=500)
@click.option("--seeds", default="0", help="Comma-separated seed list.")
@click.option("--corpus-sizes", default="", help="Comma-separated; empty disables the axis.")
@click.option("--model-tags", default="", help="Comma-separated; empty disables the axis.")
@click.option("--passage-truncs", default="", help="Comma-separated; empty disables the axis.")
@click.option("--pseudo-query-counts", default="")
@click.option("--prompt-flags", default="")
@click.pass_obj
def grid_cmd(ctx: _Ctx, corpus_path, budget, seeds, corpus_sizes, model_tags,
             passage_truncs, pseudo_query_counts, prompt_flags):
    """Run the scaling grid, emitting curve CSVs + manifest."""
    cfg = ctx.run_config()
    grid = hn.ExperimentGrid(
        corpus_sizes=[int(x) for x in corpus_sizes.split(",") if x],
        model_tags=[x for x in model_tags.split(",") if x],
        passage_truncs=[int(x) for x in passage_truncs.split(",") if x],
        pseudo_query_counts=[int(x) for x in pseudo_query_counts.split(",") if x],
        prompt_flags=[x == "true" for x in prompt_flags.split(",") if x],
        base=cfg,
        seeds=[int(x) for x in seeds.split(",") if x],
        budget=budget,
    )
    if _plan(ctx, "grid", {"cells": [hn.cell_id(a, v, s) for a, v, s in grid.cells()]}):
        return
    corpus = ingest_corpus(corpus_path, cfg.seed)
    manifest = hn.run_grid(grid, corpus, ctx.out)
    n_ok = sum(1 for c in manifest["cells"].values() if c["status"] == "ok")
    click.echo(f"grid done: {n_ok}/{len(manifest['cells'])} cells ok -> {ctx.out}")


@main.command(name="ablate")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("queries_path", type=click.Path(exists=True))
@click.option("--seeds", default="0")
@click.pass_obj
def ablate_cmd(ctx: _Ctx, corpus_path, queries_path, seeds):
    """Run the four-variant ablation table."""
    cfg = ctx.run_config()
    seed_list = [int(x) for x in seeds.split(",") if x]
    if _plan(ctx, "ablate", {"variants": hn.ABLATION_VARIANTS, "seeds": seed_list}):
        return
    corpus = ingest_corpus(corpus_path, cfg.seed)
    queries = load_queries(queries_path)
    rows = hn.run_ablations(cfg, corpus, queries, ctx.out, seeds=seed_list)
    for r in rows:
        click.echo(f"{r['variant']:>22} seed={r['seed']} hits@1={r['hits_at_1']:.4f}")


@main.command(name="plot")
@click.argument("csv_paths", type=click.Path(exists=True), nargs=-1, required=True)
@click.option("--metric", type=click.Choice(["ppl", "loss"]), default="ppl")
@click.pass_obj
def plot_cmd(ctx: _Ctx, csv_paths, metric):
    """Render curve CSVs to SVG line charts."""
    if _plan(ctx, "plot", {"csvs": list(csv_paths), "metric": metric}):
        return
    for p in csv_paths:
        out_path = plots.plot_curves(p, ctx.out, metric=metric)
        click.echo(f"wrote {out_path}")


@main.command(name="pipeline")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("queries_path", type=click.Path(exists=True))
@click.option("--eval-on", type=click.Choice(["dev", "train"]), default="dev")
@click.option("--skip-train", is_flag=True, help="BM25 baseline only.")
@click.pass_obj
def pipeline_cmd(ctx: _Ctx, corpus_path, queries_path, eval_on, skip_train):
    """Run the full two-stage flow end to end and print method rows."""
    cfg = ctx.run_config()
    if skip_train:
        cfg = dataclasses.replace(cfg, train_models=False)
    if _plan(ctx, "pipeline", {"corpus": corpus_path, "queries": queries_path,
                               "config": asdict(cfg)}):
        return
    corpus = ingest_corpus(corpus_path, cfg.seed)
    queries = load_queries(queries_path)
    arts = run_pipeline(corpus, queries, cfg, ctx.out, eval_on=eval_on)
    click.echo(f"{'method':>14}  hits@1")
    for method in (ret.TWO_STAGE, ret.SINGLE_STAGE, ret.BM25):
        if method in arts.reports:
            click.echo(f"{method:>14}  {arts.reports[method].hits_at_1:.4f}")


def run_main() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except (CorpusError, TokenizerError, ValueError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    run_main()
