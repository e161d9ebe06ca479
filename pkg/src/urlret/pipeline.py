"""End-to-end workflow: corpus -> tokenizer -> augmentation -> datasets ->
two-stage + single-stage training -> retrieval -> evaluation, with a BM25
baseline alongside."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import augment as aug
from . import data as ds
from . import evaluate as ev
from . import model as mdl
from . import retrieve as ret
from .corpus import Corpus, QueryRecord, split_queries, validate_queries
from .tokenizer import Tokenizer, train_tokenizer


@dataclass
class RunConfig:
    """Resolved configuration for a full pipeline run.

    Every field has a default; file values and CLI flags override.
    """

    seed: int = 0
    vocab_size: int = 2048
    dev_fraction: float = 0.2
    # augmentation
    k: int = 20
    query_min_len: int = 3
    query_max_len: int = 8
    drop_prob: float = 0.1
    shuffle_window: int = 1
    # stage specs
    use_prompts: bool = True
    passage_trunc: int = 32
    query_max: int = 32
    stage1_target_max: int = 64
    stage2_source_max: int = 64
    url_max: int = 80
    # models
    stage1_size: str = "tiny"
    stage2_size: str = "tiny"
    single_size: str = "tiny"
    # training
    lr_peak: float = 3e-4
    stage1_warmup: int = 200
    stage2_warmup: int = 50
    stage1_steps: int = 3000
    stage2_steps: int = 1500
    batch_size: int = 32
    eval_every: int = 250
    grad_clip: float = 1.0
    # switches
    train_models: bool = True
    run_single_stage: bool = True

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        values = json.loads(Path(path).read_text(encoding="utf-8"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def stage1_spec(self) -> ds.StageSpec:
        return ds.StageSpec(stage=ds.PASSAGE_GEN, source_max=self.query_max,
                            target_max=self.stage1_target_max,
                            use_prompts=self.use_prompts,
                            passage_trunc=self.passage_trunc)

    def stage2_spec(self) -> ds.StageSpec:
        return ds.StageSpec(stage=ds.URL_GEN, source_max=self.stage2_source_max,
                            target_max=self.url_max,
                            use_prompts=self.use_prompts,
                            passage_trunc=self.passage_trunc)

    def single_spec(self) -> ds.StageSpec:
        return ds.StageSpec(stage=ds.URL_GEN, source_max=self.query_max,
                            target_max=self.url_max,
                            use_prompts=self.use_prompts,
                            passage_trunc=self.passage_trunc)

    def augment_config(self) -> aug.AugmentConfig:
        return aug.AugmentConfig(k=self.k, min_len=self.query_min_len,
                                 max_len=self.query_max_len,
                                 drop_prob=self.drop_prob,
                                 shuffle_window=self.shuffle_window,
                                 seed=self.seed)

    def train_config(self, steps: int, warmup: int, seed_offset: int = 0) -> mdl.TrainConfig:
        return mdl.TrainConfig(lr_peak=self.lr_peak, warmup_steps=min(warmup, steps),
                               max_steps=steps, batch_size=self.batch_size,
                               grad_clip=self.grad_clip, seed=self.seed + seed_offset,
                               eval_every=self.eval_every)


def _train_model(cfg: RunConfig, size: str, pairs, spec: ds.StageSpec,
                 tok: Tokenizer, steps: int, warmup: int, seed_offset: int,
                 stats_path: Path | None = None) -> mdl.Seq2SeqModel:
    mcfg = mdl.ModelConfig.from_tag(
        size, vocab_size=len(tok),
        max_source_len=spec.source_max, max_target_len=spec.target_max,
    )
    model = mdl.init_model(mcfg, seed=cfg.seed + seed_offset)
    mdl.train(model, pairs, cfg.train_config(steps, warmup, seed_offset),
              stats_path=stats_path)
    return model


@dataclass
class PipelineArtifacts:
    tokenizer: Tokenizer
    stage1: mdl.Seq2SeqModel | None
    stage2: mdl.Seq2SeqModel | None
    single: mdl.Seq2SeqModel | None
    reports: dict[str, ev.EvalReport]
    results: dict[str, list[ret.RetrievalResult]]


def run_pipeline(
    corpus: Corpus,
    queries: list[QueryRecord],
    cfg: RunConfig,
    out_dir: str | Path,
    eval_on: str = "dev",
) -> PipelineArtifacts:
    """Run the full flow and write artifacts under out_dir.

    eval_on: "dev" evaluates the held-out natural-query split; "train"
    evaluates on training pseudo queries (memorization probe).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    validate_queries(queries, corpus)

    tok = train_tokenizer(corpus, cfg.vocab_size, seed=cfg.seed)
    tok.save(out / "tokenizer.json")
    tok_hash = tok.content_hash()

    pseudo = aug.build_augmented_set(corpus, cfg.augment_config())
    aug.write_pseudo_queries(pseudo, out / "pseudo_queries.tsv")

    s1_spec, s2_spec, ss_spec = cfg.stage1_spec(), cfg.stage2_spec(), cfg.single_spec()
    stage1_pairs = ds.build_stage1(pseudo, corpus, s1_spec, tok)
    stage2_pairs = ds.build_stage2(corpus, s2_spec, tok, stage1_spec=s1_spec)
    ds.save_pairs(stage1_pairs, s1_spec, tok, out / "stage1.jsonl")
    ds.save_pairs(stage2_pairs, s2_spec, tok, out / "stage2.jsonl")

    stage1 = stage2 = single = None
    if cfg.train_models:
        stage1 = _train_model(cfg, cfg.stage1_size, stage1_pairs, s1_spec, tok,
                              cfg.stage1_steps, cfg.stage1_warmup, 1,
                              stats_path=out / "stage1_train.csv")
        stage2 = _train_model(cfg, cfg.stage2_size, stage2_pairs, s2_spec, tok,
                              cfg.stage2_steps, cfg.stage2_warmup, 2,
                              stats_path=out / "stage2_train.csv")
        mdl.save_checkpoint(stage1, out / "stage1.ckpt", tok_hash)
        mdl.save_checkpoint(stage2, out / "stage2.ckpt", tok_hash)
        if cfg.run_single_stage:
            single_pairs = ds.build_single_stage(pseudo, corpus, ss_spec, tok)
            single = _train_model(cfg, cfg.single_size, single_pairs, ss_spec, tok,
                                  cfg.stage1_steps, cfg.stage1_warmup, 3,
                                  stats_path=out / "single_train.csv")
            mdl.save_checkpoint(single, out / "single.ckpt", tok_hash)

    if eval_on == "dev":
        _, eval_queries = split_queries(queries, cfg.dev_fraction, cfg.seed)
    elif eval_on == "train":
        eval_queries = queries
    else:
        raise ValueError(f"unknown eval_on {eval_on!r}")
    labels = {q.query_id: {corpus.get(pid).assigned_url for pid in q.positive_passage_ids}
              for q in eval_queries}

    results: dict[str, list[ret.RetrievalResult]] = {}
    reports: dict[str, ev.EvalReport] = {}

    index = ret.bm25_build(corpus)
    results[ret.BM25] = [ret.bm25_result(index, corpus, q.text, q.query_id)
                         for q in eval_queries]
    reports[ret.BM25] = ev.hits_at_1(results[ret.BM25], labels)

    if stage1 is not None and stage2 is not None:
        results[ret.TWO_STAGE] = [
            ret.two_stage_retrieve(stage1, stage2, q.text, s1_spec, s2_spec, tok,
                                   query_id=q.query_id)
            for q in eval_queries
        ]
        reports[ret.TWO_STAGE] = ev.evaluate(results[ret.TWO_STAGE], labels,
                                             corpus=corpus, spec=s1_spec, tok=tok)
    if single is not None:
        results[ret.SINGLE_STAGE] = [
            ret.single_stage_retrieve(single, q.text, ss_spec, tok, query_id=q.query_id)
            for q in eval_queries
        ]
        reports[ret.SINGLE_STAGE] = ev.hits_at_1(results[ret.SINGLE_STAGE], labels)

    _write_results(results, out / "results.jsonl")
    report_obj = {
        "config": asdict(cfg),
        "eval_on": eval_on,
        "methods": {m: asdict(r) for m, r in reports.items()},
    }
    (out / "eval_report.json").write_text(
        json.dumps(report_obj, sort_keys=True, indent=2), encoding="utf-8"
    )
    return PipelineArtifacts(tokenizer=tok, stage1=stage1, stage2=stage2,
                             single=single, reports=reports, results=results)


def _write_results(results: dict[str, list[ret.RetrievalResult]], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for method in sorted(results):
            for r in results[method]:
                fh.write(json.dumps({
                    "query_id": r.query_id,
                    "method": r.method,
                    "predicted_url": r.predicted_url,
                    "intermediate_passage": r.intermediate_passage,
                    "logprob_sum": r.logprob_sum,
                }, sort_keys=True) + "\n")
