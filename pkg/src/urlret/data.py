"""Tokenized training-pair assembly for both generation stages.

Stage 1 maps pseudo queries to formatted passage texts ("title: ...
passage: ..."); stage 2 maps the identical formatted text to the record's
assigned URL, so what stage 2 sees in training is exactly what stage 1
emits at inference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .augment import PseudoQuery
from .corpus import Corpus, PassageRecord
from .tokenizer import (
    PROMPT_PASSAGE,
    PROMPT_TITLE,
    SOURCE,
    TARGET,
    TokenSequence,
    Tokenizer,
)

PASSAGE_GEN = "passage_gen"
URL_GEN = "url_gen"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class StageSpec:
    stage: str
    source_max: int = 32
    target_max: int = 64
    use_prompts: bool = True
    passage_trunc: int = 32

    def __post_init__(self):
        if self.stage not in (PASSAGE_GEN, URL_GEN):
            raise DatasetError(f"unknown stage {self.stage!r}")
        if min(self.source_max, self.target_max, self.passage_trunc) < 2:
            raise DatasetError("all length maxima must be >= 2")
        if self.stage == PASSAGE_GEN and self.passage_trunc > self.target_max:
            raise DatasetError("passage_trunc must not exceed target_max")


@dataclass(frozen=True)
class PairMeta:
    source_id: str
    passage_id: str
    url: str


@dataclass(frozen=True)
class TrainingPair:
    source: TokenSequence
    target: TokenSequence
    meta: PairMeta


def default_stage1_spec(**overrides) -> StageSpec:
    return StageSpec(stage=PASSAGE_GEN, **overrides)


def default_stage2_spec(**overrides) -> StageSpec:
    overrides.setdefault("source_max", 64)
    overrides.setdefault("target_max", 80)
    return StageSpec(stage=URL_GEN, **overrides)


def format_stage1_text(record: PassageRecord, spec: StageSpec, tok: Tokenizer) -> str:
    """Template text for stage-1 targets and stage-2 sources.

    The passage is truncated at the token level before templating so the
    prompt and title always survive.
    """
    passage_ids = tok.encode_ids(record.passage)[: spec.passage_trunc]
    passage = tok.decode(passage_ids).strip()
    if spec.use_prompts:
        return f"{PROMPT_TITLE}{record.title} {PROMPT_PASSAGE}{passage}"
    return f"{record.title} {passage}"


def format_stage1_target(record: PassageRecord, spec: StageSpec, tok: Tokenizer) -> TokenSequence:
    if spec.stage != PASSAGE_GEN:
        raise DatasetError("stage-1 targets require a passage_gen spec")
    return tok.encode(format_stage1_text(record, spec, tok), TARGET, spec.target_max)


def build_stage1(
    pairs: list[PseudoQuery], corpus: Corpus, spec: StageSpec, tok: Tokenizer
) -> list[TrainingPair]:
    """(pseudo query -> formatted passage) pairs, in input order."""
    out: list[TrainingPair] = []
    for i, pq in enumerate(pairs):
        if pq.passage_id not in corpus:
            raise DatasetError(f"pair {i}: unknown passage id {pq.passage_id!r}")
        record = corpus.get(pq.passage_id)
        out.append(TrainingPair(
            source=tok.encode(pq.text, SOURCE, spec.source_max),
            target=format_stage1_target(record, spec, tok),
            meta=PairMeta(source_id=f"pq{i}", passage_id=record.id, url=record.assigned_url),
        ))
    return out


def build_stage2(corpus: Corpus, spec: StageSpec, tok: Tokenizer,
                 stage1_spec: StageSpec | None = None) -> list[TrainingPair]:
    """(formatted passage -> URL) pairs, one per record."""
    if spec.stage != URL_GEN:
        raise DatasetError("stage-2 pairs require a url_gen spec")
    fmt_spec = stage1_spec or default_stage1_spec(
        use_prompts=spec.use_prompts, passage_trunc=spec.passage_trunc
    )
    out: list[TrainingPair] = []
    for record in corpus.records:
        text = format_stage1_text(record, fmt_spec, tok)
        out.append(TrainingPair(
            source=tok.encode(text, SOURCE, spec.source_max),
            target=tok.encode(record.assigned_url, TARGET, spec.target_max),
            meta=PairMeta(source_id=record.id, passage_id=record.id, url=record.assigned_url),
        ))
    return out


def build_single_stage(
    pairs: list[PseudoQuery], corpus: Corpus, spec: StageSpec, tok: Tokenizer
) -> list[TrainingPair]:
    """(pseudo query -> URL) pairs for the direct single-stage variant."""
    out: list[TrainingPair] = []
    for i, pq in enumerate(pairs):
        if pq.passage_id not in corpus:
            raise DatasetError(f"pair {i}: unknown passage id {pq.passage_id!r}")
        record = corpus.get(pq.passage_id)
        out.append(TrainingPair(
            source=tok.encode(pq.text, SOURCE, spec.source_max),
            target=tok.encode(record.assigned_url, TARGET, spec.target_max),
            meta=PairMeta(source_id=f"pq{i}", passage_id=record.id, url=record.assigned_url),
        ))
    return out


def save_pairs(pairs: list[TrainingPair], spec: StageSpec, tok: Tokenizer,
               path: str | Path) -> None:
    """JSONL with a header line binding the StageSpec and tokenizer hash."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"spec": asdict(spec), "tokenizer_hash": tok.content_hash()}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for p in pairs:
            fh.write(json.dumps({
                "source": list(p.source.ids), "target": list(p.target.ids),
                "meta": asdict(p.meta),
            }) + "\n")


def load_pairs(path: str | Path, tok: Tokenizer) -> tuple[list[TrainingPair], StageSpec]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header["tokenizer_hash"] != tok.content_hash():
            raise DatasetError("dataset was built with a different tokenizer")
        spec = StageSpec(**header["spec"])
        pairs: list[TrainingPair] = []
        for line in fh:
            obj = json.loads(line)
            pairs.append(TrainingPair(
                source=TokenSequence(ids=tuple(obj["source"]), role=SOURCE),
                target=TokenSequence(ids=tuple(obj["target"]), role=TARGET),
                meta=PairMeta(**obj["meta"]),
            ))
    return pairs, spec
