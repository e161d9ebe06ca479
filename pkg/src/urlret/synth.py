"""Self-contained synthetic corpus generator.

Produces small templated corpora (titles, passages, URLs) plus one
labeled natural query per record, so demos and the acceptance suite never
depend on external datasets.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

_ADJECTIVES = [
    "ancient", "bright", "coastal", "dusty", "eastern", "fragrant", "gentle",
    "hidden", "iron", "jagged", "keen", "lunar", "mossy", "northern", "oaken",
    "painted", "quiet", "rusty", "silver", "twisted", "upland", "violet",
    "western", "yellow", "zesty", "amber", "bold", "crimson", "deep", "early",
    "foggy", "granite", "humid", "inland", "lofty", "misty", "narrow",
    "outer", "pale", "rugged",
]

_NOUNS = [
    "archive", "bridge", "canyon", "dam", "estuary", "forge", "glacier",
    "harbor", "island", "junction", "kiln", "lagoon", "meadow", "notch",
    "orchard", "plateau", "quarry", "ridge", "summit", "terrace", "valley",
    "wharf", "basin", "cavern", "delta", "escarpment", "fjord", "grove",
    "headland", "inlet", "jetty", "knoll",
]

_VERBS = ["borders", "feeds", "overlooks", "shelters", "predates", "supplies",
          "divides", "anchors", "drains", "marks"]

_FILLER = ["local", "regional", "seasonal", "historic", "remote", "protected",
           "surveyed", "restored", "mapped", "documented"]


_ALL_WORDS = _ADJECTIVES + _NOUNS + _VERBS + _FILLER


def _slug(title: str) -> str:
    return title.lower().replace(" ", "-")


def generate_records(n_records: int, seed: int,
                     detail_words: int = 0) -> tuple[list[dict], list[dict]]:
    """Return (corpus records, query rows) as plain dicts.

    detail_words appends that many randomly drawn words to each passage,
    giving the tail roughly uniform per-token entropy like real prose;
    useful for scaling studies where passage length should carry
    information all the way through.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    rng = random.Random(seed)
    combos = [(a, b) for a in _ADJECTIVES for b in _NOUNS]
    rng.shuffle(combos)
    if n_records > len(combos):
        raise ValueError(f"at most {len(combos)} synthetic records supported")
    records, queries = [], []
    for i, (adj, noun) in enumerate(combos[:n_records]):
        title = f"{adj} {noun}"
        other_adj, other_noun = rng.choice(_ADJECTIVES), rng.choice(_NOUNS)
        verb = rng.choice(_VERBS)
        f1, f2 = rng.sample(_FILLER, 2)
        passage = (
            f"the {title} {verb} the {other_adj} {other_noun} and is a {f1} "
            f"site noted in {f2} records for its {adj} character"
        )
        if detail_words:
            detail = " ".join(rng.choice(_ALL_WORDS) for _ in range(detail_words))
            passage = f"{passage} the survey notes read {detail}"
        rid = f"d{i:04d}"
        records.append({
            "id": rid,
            "title": title,
            "passage": passage,
            "urls": [f"https://example.org/doc/{_slug(title)}"],
        })
        queries.append({
            "query_id": f"q{i:04d}",
            "text": f"which {f1} site {verb} the {other_adj} {other_noun}",
            "positive_passage_ids": [rid],
        })
    return records, queries


def write_synth(n_records: int, seed: int, corpus_path: str | Path,
                queries_path: str | Path, detail_words: int = 0) -> None:
    records, queries = generate_records(n_records, seed, detail_words=detail_words)
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    with open(queries_path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(f"{q['query_id']}\t{q['text']}\t{','.join(q['positive_passage_ids'])}\n")
