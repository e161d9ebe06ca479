"""Metrics: Hits@1 by exact text match, corpus-membership analysis of
generated passages, and per-query trace export."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .corpus import Corpus, normalize_text
from .data import StageSpec, format_stage1_target
from .retrieve import TWO_STAGE, RetrievalResult
from .tokenizer import Tokenizer


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    hits_at_1: float
    n_queries: int
    per_query: list[dict]
    membership_rate: float | None = None
    membership_rate_on_misses: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def hits_at_1(results: list[RetrievalResult], labels: dict[str, set[str]]) -> EvalReport:
    """Fraction of queries whose predicted URL exactly matches a label.

    Matching uses the corpus text normalization (NFC, collapsed
    whitespace, case preserved).
    """
    if not results:
        raise EvalError("no results to evaluate")
    per_query = []
    for r in sorted(results, key=lambda r: r.query_id):
        if r.query_id not in labels:
            raise EvalError(f"no label for query {r.query_id!r}")
        label_set = {normalize_text(u) for u in labels[r.query_id]}
        row = {
            "query_id": r.query_id,
            "correct": normalize_text(r.predicted_url) in label_set,
            "predicted_url": r.predicted_url,
            "label_urls": sorted(label_set),
        }
        per_query.append(row)
    hits = sum(row["correct"] for row in per_query) / len(per_query)
    return EvalReport(hits_at_1=hits, n_queries=len(per_query), per_query=per_query)


def formatted_target_index(corpus: Corpus, spec: StageSpec, tok: Tokenizer) -> set[str]:
    """Normalized formatted stage-1 target texts, the space stage 1 emits.

    Targets are round-tripped through encoding so the index holds exactly
    the (possibly length-truncated) text the model was trained to produce.
    """
    return {
        normalize_text(tok.decode(format_stage1_target(r, spec, tok)))
        for r in corpus.records
    }


def membership_analysis(
    results: list[RetrievalResult],
    corpus: Corpus,
    labels: dict[str, set[str]],
    spec: StageSpec,
    tok: Tokenizer,
) -> tuple[float, float | None]:
    """(membership_rate, membership_rate_on_misses) of stage-1 outputs.

    Membership is tested against the formatted (prompted, truncated)
    stage-1 targets rather than raw passages, since that is the space the
    passage generator was trained to emit. Queries with empty stage-1
    output are excluded from the misses denominator.
    """
    targets = formatted_target_index(corpus, spec, tok)
    n_member = 0
    miss_total, miss_member = 0, 0
    for r in results:
        if r.method != TWO_STAGE or r.intermediate_passage is None:
            raise EvalError("membership analysis requires two-stage results")
        label_set = {normalize_text(u) for u in labels[r.query_id]}
        in_corpus = normalize_text(r.intermediate_passage) in targets
        n_member += in_corpus
        correct = normalize_text(r.predicted_url) in label_set
        if not correct and r.intermediate_passage.strip():
            miss_total += 1
            miss_member += in_corpus
    rate = n_member / len(results)
    miss_rate = miss_member / miss_total if miss_total else None
    return rate, miss_rate


def evaluate(
    results: list[RetrievalResult],
    labels: dict[str, set[str]],
    corpus: Corpus | None = None,
    spec: StageSpec | None = None,
    tok: Tokenizer | None = None,
) -> EvalReport:
    """Full report; membership analysis added when a corpus is supplied
    and the results are two-stage."""
    report = hits_at_1(results, labels)
    two_stage = all(r.method == TWO_STAGE for r in results)
    if corpus is not None and spec is not None and tok is not None and two_stage:
        by_qid = {r.query_id: r for r in results}
        rate, miss_rate = membership_analysis(results, corpus, labels, spec, tok)
        report.membership_rate = rate
        report.membership_rate_on_misses = miss_rate
        targets = formatted_target_index(corpus, spec, tok)
        for row in report.per_query:
            passage = by_qid[row["query_id"]].intermediate_passage or ""
            row["passage_in_corpus"] = normalize_text(passage) in targets
    return report


def export_traces(
    results: list[RetrievalResult],
    corpus: Corpus,
    labels: dict[str, set[str]],
    positives: dict[str, list[str]],
    queries: dict[str, str],
    path: str | Path,
) -> None:
    """Case-study JSONL: query, label passages, generated passage, URL."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(results, key=lambda r: r.query_id):
            label_set = {normalize_text(u) for u in labels[r.query_id]}
            fh.write(json.dumps({
                "query_id": r.query_id,
                "query": queries.get(r.query_id, ""),
                "label_passages": [corpus.get(pid).passage
                                   for pid in positives.get(r.query_id, [])],
                "label_urls": sorted(label_set),
                "generated_passage": r.intermediate_passage,
                "predicted_url": r.predicted_url,
                "correct": normalize_text(r.predicted_url) in label_set,
            }, ensure_ascii=False, sort_keys=True) + "\n")
