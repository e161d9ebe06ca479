"""Pseudo-query generation for stage-1 training data.

A lightweight span-sampling generator stands in for a learned
query-generation model: each pseudo query is a contiguous word window
drawn from title+passage, optionally word-dropped and locally shuffled.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, PassageRecord

METHOD_TAG = "span_sample"


class AugmentError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    k: int = 20
    min_len: int = 3
    max_len: int = 8
    drop_prob: float = 0.1
    shuffle_window: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= 64:
            raise AugmentError("k must be in [1, 64]")
        if self.min_len > self.max_len or self.min_len < 1:
            raise AugmentError("need 1 <= min_len <= max_len")
        if not 0 <= self.drop_prob < 1:
            raise AugmentError("drop_prob must be in [0, 1)")
        if self.shuffle_window < 0:
            raise AugmentError("shuffle_window must be >= 0")


@dataclass(frozen=True)
class PseudoQuery:
    text: str
    passage_id: str
    method: str = METHOD_TAG


def _record_rng(seed: int, record_id: str) -> random.Random:
    # Stable per-record stream so per-record generation parallelizes
    # without changing output.
    digest = hashlib.sha256(f"{seed}:{record_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _sample_query(words: list[str], cfg: AugmentConfig, rng: random.Random) -> str:
    span_len = rng.randint(cfg.min_len, min(cfg.max_len, len(words)))
    start = rng.randint(0, len(words) - span_len)
    span = words[start:start + span_len]
    if cfg.drop_prob > 0 and len(span) > 1:
        kept = [w for w in span if rng.random() >= cfg.drop_prob]
        if kept:
            span = kept
    if cfg.shuffle_window > 0:
        span = span[:]
        for i in range(len(span)):
            j = min(len(span) - 1, i + rng.randint(0, cfg.shuffle_window))
            span[i], span[j] = span[j], span[i]
    return " ".join(span)


def generate_pseudo_queries(record: PassageRecord, cfg: AugmentConfig) -> list[PseudoQuery]:
    """Exactly cfg.k queries for one record; duplicates re-rolled once."""
    words = (record.title + " " + record.passage).split()
    if len(record.passage.split()) < cfg.min_len:
        words = record.title.split()
        if len(words) < cfg.min_len:
            raise AugmentError(
                f"record {record.id}: too short for min_len={cfg.min_len}"
            )
    rng = _record_rng(cfg.seed, record.id)
    out: list[PseudoQuery] = []
    seen: set[str] = set()
    for _ in range(cfg.k):
        text = _sample_query(words, cfg, rng)
        if text in seen:
            text = _sample_query(words, cfg, rng)  # one re-roll, then accept
        seen.add(text)
        out.append(PseudoQuery(text=text, passage_id=record.id))
    return out


def build_augmented_set(corpus: Corpus, cfg: AugmentConfig) -> list[PseudoQuery]:
    """k pseudo queries per record, in corpus order then query index."""
    out: list[PseudoQuery] = []
    for record in corpus.records:
        out.extend(generate_pseudo_queries(record, cfg))
    return out


def write_pseudo_queries(queries: list[PseudoQuery], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(f"{q.passage_id}\t{q.text}\t{q.method}\n")


def load_pseudo_queries(path: str | Path) -> list[PseudoQuery]:
    out: list[PseudoQuery] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise AugmentError(f"line {lineno}: expected 3 columns")
            out.append(PseudoQuery(text=parts[1], passage_id=parts[0], method=parts[2]))
    return out
