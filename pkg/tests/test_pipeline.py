import dataclasses
import hashlib
import json

import pytest

import urlret.retrieve as ret
from urlret.corpus import ingest_corpus, load_queries
from urlret.pipeline import RunConfig, run_pipeline
from urlret.synth import write_synth


SMALL = dict(seed=0, vocab_size=330, k=3, stage1_steps=30, stage2_steps=30,
             stage1_warmup=10, stage2_warmup=10, batch_size=8, eval_every=10,
             dev_fraction=0.25)


@pytest.fixture(scope="module")
def synth_inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    write_synth(8, 0, root / "corpus.jsonl", root / "queries.tsv")
    corpus = ingest_corpus(root / "corpus.jsonl", seed=0)
    queries = load_queries(root / "queries.tsv")
    return corpus, queries


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 3, "k": 5}), encoding="utf-8")
    cfg = RunConfig.from_file(path, vocab_size=512)
    assert (cfg.seed, cfg.k, cfg.vocab_size) == (3, 5, 512)


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"learning_rate": 1.0}), encoding="utf-8")
    with pytest.raises(ValueError, match="learning_rate"):
        RunConfig.from_file(path)


def test_bm25_only_run_writes_core_artifacts(synth_inputs, tmp_path):
    corpus, queries = synth_inputs
    cfg = RunConfig(**SMALL, train_models=False)
    arts = run_pipeline(corpus, queries, cfg, tmp_path, eval_on="dev")
    assert set(arts.reports) == {ret.BM25}
    assert arts.stage1 is None and arts.single is None
    for name in ("tokenizer.json", "pseudo_queries.tsv", "stage1.jsonl",
                 "stage2.jsonl", "results.jsonl", "eval_report.json"):
        assert (tmp_path / name).exists(), name
    report = json.loads((tmp_path / "eval_report.json").read_text())
    assert report["eval_on"] == "dev"
    assert set(report["methods"]) == {ret.BM25}


def test_unknown_eval_split_rejected(synth_inputs, tmp_path):
    corpus, queries = synth_inputs
    cfg = RunConfig(**SMALL, train_models=False)
    with pytest.raises(ValueError, match="eval_on"):
        run_pipeline(corpus, queries, cfg, tmp_path, eval_on="test")


def test_trained_run_is_deterministic(synth_inputs, tmp_path):
    corpus, queries = synth_inputs
    cfg = dataclasses.replace(RunConfig(**SMALL), run_single_stage=False)
    run_pipeline(corpus, queries, cfg, tmp_path / "a", eval_on="dev")
    run_pipeline(corpus, queries, cfg, tmp_path / "b", eval_on="dev")
    for name in ("eval_report.json", "results.jsonl", "stage1.ckpt",
                 "stage2.ckpt", "tokenizer.json"):
        a = hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest()
        b = hashlib.sha256((tmp_path / "b" / name).read_bytes()).hexdigest()
        assert a == b, name


def test_trained_run_reports_all_methods(synth_inputs, tmp_path):
    corpus, queries = synth_inputs
    cfg = RunConfig(**SMALL)
    arts = run_pipeline(corpus, queries, cfg, tmp_path, eval_on="train")
    assert set(arts.reports) == {ret.BM25, ret.TWO_STAGE, ret.SINGLE_STAGE}
    two_stage = arts.reports[ret.TWO_STAGE]
    assert two_stage.membership_rate is not None
    assert (tmp_path / "single.ckpt").exists()
