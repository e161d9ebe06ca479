"""Inference: greedy decoding, the two-stage and single-stage pipelines,
and an Okapi BM25 baseline over an inverted index."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import torch

from .corpus import Corpus
from .data import StageSpec
from .model import Seq2SeqModel
from .tokenizer import BOS, EOS, N_SPECIALS, SOURCE, Tokenizer

TWO_STAGE = "two_stage"
SINGLE_STAGE = "single_stage"
BM25 = "bm25"


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    predicted_url: str
    method: str
    per_step_logprobs: tuple[float, ...]
    intermediate_passage: str | None = None

    @property
    def logprob_sum(self) -> float:
        return float(sum(self.per_step_logprobs))


@torch.no_grad()
def greedy_decode(
    model: Seq2SeqModel, source, max_len: int, tok: Tokenizer
) -> tuple[str, list[float]]:
    """Argmax decoding from BOS until EOS or max_len.

    Tie rule: among content tokens the lowest id wins (first argmax);
    specials never win ties -- EOS is emitted only when its logit strictly
    exceeds the best content logit, PAD/BOS/UNK are never emitted.
    """
    if hasattr(source, "ids"):
        source = source.ids
    model.eval()
    src = torch.tensor([list(source)], dtype=torch.long)
    prefix = [BOS]
    out_ids: list[int] = []
    logprobs: list[float] = []
    for _ in range(max_len):
        logits = model(src, torch.tensor([prefix], dtype=torch.long))[0, -1]
        content = logits[N_SPECIALS:]
        best_content = int(torch.argmax(content).item()) + N_SPECIALS
        if float(logits[EOS]) > float(logits[best_content]):
            nxt = EOS
        else:
            nxt = best_content
        logp = torch.log_softmax(logits, dim=-1)
        logprobs.append(float(logp[nxt]))
        if nxt == EOS:
            break
        out_ids.append(nxt)
        prefix.append(nxt)
        if len(prefix) >= model.config.max_target_len:
            break
    return tok.decode(out_ids), logprobs


def _check_hash(model_hash: str, tok: Tokenizer) -> None:
    if model_hash != tok.content_hash():
        raise RetrievalError("model was trained with a different tokenizer")


def two_stage_retrieve(
    stage1: Seq2SeqModel,
    stage2: Seq2SeqModel,
    query: str,
    stage1_spec: StageSpec,
    stage2_spec: StageSpec,
    tok: Tokenizer,
    query_id: str = "",
    stage1_hash: str | None = None,
    stage2_hash: str | None = None,
) -> RetrievalResult:
    """Query -> passage text -> URL; the intermediate passage is recorded."""
    for h in (stage1_hash, stage2_hash):
        if h is not None:
            _check_hash(h, tok)
    q_ids = tok.encode(query, SOURCE, stage1_spec.source_max)
    # stage-1 decode length capped at the stage-2 source bound, so its
    # output re-encodes within what stage 2 was trained on
    passage_text, lp1 = greedy_decode(stage1, q_ids, stage2_spec.source_max, tok)
    p_ids = tok.encode(passage_text, SOURCE, stage2_spec.source_max)
    url_text, lp2 = greedy_decode(stage2, p_ids, stage2_spec.target_max, tok)
    return RetrievalResult(
        query_id=query_id, predicted_url=url_text, method=TWO_STAGE,
        per_step_logprobs=tuple(lp1 + lp2), intermediate_passage=passage_text,
    )


def single_stage_retrieve(
    model: Seq2SeqModel,
    query: str,
    spec: StageSpec,
    tok: Tokenizer,
    query_id: str = "",
    model_hash: str | None = None,
) -> RetrievalResult:
    """Direct query -> URL generation."""
    if model_hash is not None:
        _check_hash(model_hash, tok)
    q_ids = tok.encode(query, SOURCE, spec.source_max)
    url_text, lp = greedy_decode(model, q_ids, spec.target_max, tok)
    return RetrievalResult(
        query_id=query_id, predicted_url=url_text, method=SINGLE_STAGE,
        per_step_logprobs=tuple(lp),
    )


# -- BM25 baseline ------------------------------------------------------------

_BM25_TOKEN = re.compile(r"[a-z0-9]+")


def bm25_tokenize(text: str) -> list[str]:
    return _BM25_TOKEN.findall(text.lower())


@dataclass
class Bm25Index:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float = 1.2
    b: float = 0.75


def bm25_build(corpus: Corpus, k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Inverted index over title+passage; postings sorted by doc id."""
    if len(corpus) == 0:
        raise RetrievalError("corpus is empty")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for r in corpus.records:
        terms = bm25_tokenize(r.title + " " + r.passage)
        doc_lengths[r.id] = len(terms)
        for t in terms:
            postings.setdefault(t, {}).setdefault(r.id, 0)
            postings[t][r.id] += 1
    return Bm25Index(
        postings={t: sorted(tf.items()) for t, tf in postings.items()},
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_lengths),
        doc_count=len(corpus),
        k1=k1, b=b,
    )


def bm25_retrieve(index: Bm25Index, query: str, topk: int = 10) -> list[tuple[str, float]]:
    """Okapi scoring; ties broken toward the lower doc id."""
    if topk < 1:
        raise RetrievalError("topk must be >= 1")
    terms = bm25_tokenize(query)
    if not terms:
        return []
    scores: dict[str, float] = {}
    N, k1, b = index.doc_count, index.k1, index.b
    for t in terms:
        plist = index.postings.get(t)
        if plist is None:
            continue  # absent terms contribute zero everywhere
        df = len(plist)
        idf = math.log((N - df + 0.5) / (df + 0.5) + 1.0)
        for doc_id, tf in plist:
            norm = k1 * (1 - b + b * index.doc_lengths[doc_id] / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:topk]


def bm25_result(index: Bm25Index, corpus: Corpus, query: str, query_id: str = "") -> RetrievalResult:
    """Top-1 BM25 hit expressed as a URL prediction."""
    ranked = bm25_retrieve(index, query, topk=1)
    url = corpus.get(ranked[0][0]).assigned_url if ranked else ""
    return RetrievalResult(
        query_id=query_id, predicted_url=url, method=BM25, per_step_logprobs=(),
    )
