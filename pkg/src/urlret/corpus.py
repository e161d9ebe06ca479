"""Corpus ingestion, normalization, and exact-membership indexing."""

from __future__ import annotations

import json
import random
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

_WS_RUN = re.compile(r"\s+")


class CorpusError(ValueError):
    """Raised on malformed or inconsistent corpus/query input."""


def normalize_text(text: str) -> str:
    """Canonical form used for membership and exact-match evaluation.

    Unicode NFC, internal whitespace runs collapsed to single spaces,
    leading/trailing whitespace stripped. Case is preserved.
    """
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", text)).strip()


@dataclass(frozen=True)
class PassageRecord:
    id: str
    title: str
    passage: str
    urls: tuple[str, ...]
    assigned_url: str

    def __post_init__(self):
        if self.assigned_url not in self.urls:
            raise CorpusError(f"record {self.id}: assigned_url not among urls")


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    text: str
    positive_passage_ids: tuple[str, ...]


@dataclass
class Corpus:
    """Immutable after ingestion; safe for concurrent readers."""

    records: list[PassageRecord]
    membership_index: dict[str, set[str]] = field(default_factory=dict)
    url_index: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.membership_index:
            for r in self.records:
                self.membership_index.setdefault(normalize_text(r.passage), set()).add(r.id)
                self.url_index.setdefault(r.assigned_url, set()).add(r.id)
        self._by_id = {r.id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def get(self, record_id: str) -> PassageRecord:
        return self._by_id[record_id]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id


def ingest_corpus(path: str | Path, seed: int) -> Corpus:
    """Load a JSONL corpus, assigning one URL per record.

    Each line must carry id, title, passage, urls (string or list).
    When a record lists several URLs one is chosen uniformly at random;
    the choice is derived from (seed, record order) so reruns on the same
    file bytes reproduce the same corpus.
    """
    rng = random.Random(seed)
    records: list[PassageRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON: {exc}") from exc
            try:
                rid = str(obj["id"])
                title = normalize_text(str(obj["title"]))
                passage = normalize_text(str(obj["passage"]))
                urls = obj["urls"]
            except KeyError as exc:
                raise CorpusError(f"line {lineno}: missing field {exc}") from exc
            if isinstance(urls, str):
                urls = [urls]
            urls = [normalize_text(str(u)) for u in urls]
            if rid in seen:
                raise CorpusError(f"line {lineno}: duplicate id {rid!r}")
            seen.add(rid)
            if not passage:
                raise CorpusError(f"line {lineno}: empty passage")
            if not title:
                raise CorpusError(f"line {lineno}: empty title")
            if not urls or any(not u for u in urls):
                raise CorpusError(f"line {lineno}: empty or missing urls")
            assigned = urls[0] if len(urls) == 1 else rng.choice(urls)
            records.append(
                PassageRecord(id=rid, title=title, passage=passage,
                              urls=tuple(urls), assigned_url=assigned)
            )
    return Corpus(records=records)


def passage_in_corpus(corpus: Corpus, text: str) -> set[str]:
    """Ids of records whose normalized passage exactly equals the input."""
    return set(corpus.membership_index.get(normalize_text(text), set()))


def split_queries(
    queries: list[QueryRecord], dev_fraction: float, seed: int
) -> tuple[list[QueryRecord], list[QueryRecord]]:
    """Seeded disjoint train/dev split with dev size round(dev_fraction * N)."""
    if not 0 < dev_fraction < 1:
        raise CorpusError("dev_fraction must be in (0, 1)")
    if len(queries) < 2:
        raise CorpusError("need at least 2 queries to split")
    order = list(range(len(queries)))
    random.Random(seed).shuffle(order)
    n_dev = round(dev_fraction * len(queries))
    dev_idx = set(order[:n_dev])
    train = [q for i, q in enumerate(queries) if i not in dev_idx]
    dev = [q for i, q in enumerate(queries) if i in dev_idx]
    return train, dev


def load_queries(path: str | Path) -> list[QueryRecord]:
    """Read a queries TSV: query_id, text, comma-joined positive ids."""
    queries: list[QueryRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"line {lineno}: expected 3 tab-separated columns")
            qid, text, pos = parts
            pos_ids = tuple(p for p in pos.split(",") if p)
            if not pos_ids:
                raise CorpusError(f"line {lineno}: query {qid!r} has no positive ids")
            queries.append(QueryRecord(query_id=qid, text=normalize_text(text),
                                       positive_passage_ids=pos_ids))
    return queries


def validate_queries(queries: list[QueryRecord], corpus: Corpus) -> None:
    for q in queries:
        for pid in q.positive_passage_ids:
            if pid not in corpus:
                raise CorpusError(f"query {q.query_id}: unknown passage id {pid!r}")


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonicalized corpus (with frozen assigned_url) as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus.records:
            fh.write(json.dumps({
                "id": r.id, "title": r.title, "passage": r.passage,
                "urls": list(r.urls), "assigned_url": r.assigned_url,
            }, ensure_ascii=False) + "\n")
