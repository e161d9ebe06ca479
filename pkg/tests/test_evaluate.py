import json

import pytest

from urlret.corpus import normalize_text
from urlret.data import default_stage1_spec, format_stage1_target
from urlret.evaluate import (EvalError, evaluate, export_traces,
                             formatted_target_index, hits_at_1,
                             membership_analysis)
from urlret.retrieve import SINGLE_STAGE, TWO_STAGE, RetrievalResult


def _result(qid, url, method=SINGLE_STAGE, passage=None):
    return RetrievalResult(query_id=qid, predicted_url=url, method=method,
                           per_step_logprobs=(), intermediate_passage=passage)


def test_hits_basic():
    results = [_result("q1", "u1"), _result("q2", "u9")]
    report = hits_at_1(results, {"q1": {"u1"}, "q2": {"u2"}})
    assert report.hits_at_1 == 0.5
    assert report.n_queries == 2


def test_hits_normalizes_whitespace():
    report = hits_at_1([_result("q1", "  u1 ")], {"q1": {"u1"}})
    assert report.hits_at_1 == 1.0


def test_hits_empty_results_error():
    with pytest.raises(EvalError):
        hits_at_1([], {})


def test_hits_missing_label_names_query():
    with pytest.raises(EvalError, match="q7"):
        hits_at_1([_result("q7", "u")], {"q1": {"u"}})


def test_hits_permutation_invariant():
    results = [_result(f"q{i}", f"u{i}") for i in range(5)]
    labels = {f"q{i}": {f"u{i}" if i % 2 else "nope"} for i in range(5)}
    a = hits_at_1(results, labels)
    b = hits_at_1(list(reversed(results)), labels)
    assert a.hits_at_1 == b.hits_at_1
    assert a.per_query == b.per_query


def test_report_self_consistent():
    results = [_result("q1", "u1"), _result("q2", "u2"), _result("q3", "x")]
    labels = {"q1": {"u1"}, "q2": {"u2"}, "q3": {"u3"}}
    report = hits_at_1(results, labels)
    assert report.hits_at_1 == sum(r["correct"] for r in report.per_query) / report.n_queries


def _two_stage_results(toy_corpus, toy_tokenizer, spec, correct=True):
    out = []
    for i, r in enumerate(toy_corpus.records):
        passage = toy_tokenizer.decode(format_stage1_target(r, spec, toy_tokenizer))
        url = r.assigned_url if correct else "https://wrong.example/x"
        out.append(_result(f"q{i}", url, method=TWO_STAGE, passage=passage))
    return out


def _labels(toy_corpus, correct=True):
    return {f"q{i}": {r.assigned_url} for i, r in enumerate(toy_corpus.records)}


def test_membership_all_verbatim(toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    results = _two_stage_results(toy_corpus, toy_tokenizer, spec)
    rate, miss_rate = membership_analysis(results, toy_corpus,
                                          _labels(toy_corpus), spec, toy_tokenizer)
    assert rate == 1.0
    assert miss_rate is None  # perfect hits -> empty denominator


def test_membership_on_misses(toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    results = _two_stage_results(toy_corpus, toy_tokenizer, spec, correct=False)
    rate, miss_rate = membership_analysis(results, toy_corpus,
                                          _labels(toy_corpus), spec, toy_tokenizer)
    assert rate == 1.0
    assert miss_rate == 1.0


def test_membership_rejects_single_stage(toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    with pytest.raises(EvalError):
        membership_analysis([_result("q0", "u")], toy_corpus,
                            {"q0": {"u"}}, spec, toy_tokenizer)


def test_membership_two_oracles_agree(toy_corpus, toy_tokenizer):
    # oracle A: the formatted_target_index set; oracle B: rebuild each
    # record's formatted target independently and compare one by one
    spec = default_stage1_spec()
    index = formatted_target_index(toy_corpus, spec, toy_tokenizer)
    for r in toy_corpus.records:
        text = toy_tokenizer.decode(format_stage1_target(r, spec, toy_tokenizer))
        in_a = normalize_text(text) in index
        in_b = any(
            normalize_text(text) == normalize_text(
                toy_tokenizer.decode(format_stage1_target(other, spec, toy_tokenizer)))
            for other in toy_corpus.records
        )
        assert in_a == in_b is True


def test_membership_floor_subset(toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    results = _two_stage_results(toy_corpus, toy_tokenizer, spec)
    report = evaluate(results, _labels(toy_corpus), corpus=toy_corpus,
                      spec=spec, tok=toy_tokenizer)
    for row in report.per_query:
        if row["correct"]:
            # every correct answer backed by a formatted target counts
            # toward membership
            assert row["passage_in_corpus"]
    assert report.membership_rate >= report.hits_at_1 * 0  # subset holds row-wise


def test_export_traces(tmp_path, toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    results = _two_stage_results(toy_corpus, toy_tokenizer, spec)
    labels = _labels(toy_corpus)
    positives = {f"q{i}": [r.id] for i, r in enumerate(toy_corpus.records)}
    queries = {f"q{i}": f"query {i}" for i in range(len(toy_corpus))}
    path = tmp_path / "traces.jsonl"
    export_traces(results, toy_corpus, labels, positives, queries, path)
    rows = [json.loads(l) for l in path.read_text().splitlines()]
    assert len(rows) == len(results)
    for row in rows:
        pid = positives[row["query_id"]][0]
        assert row["label_passages"] == [toy_corpus.get(pid).passage]
        assert row["correct"]
    # deterministic
    path2 = tmp_path / "traces2.jsonl"
    export_traces(results, toy_corpus, labels, positives, queries, path2)
    assert path.read_bytes() == path2.read_bytes()
