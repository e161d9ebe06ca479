import pytest

from urlret.augment import AugmentConfig, build_augmented_set
from urlret.data import (DatasetError, PASSAGE_GEN, URL_GEN, StageSpec,
                         build_single_stage, build_stage1, build_stage2,
                         default_stage1_spec, default_stage2_spec,
                         format_stage1_target, format_stage1_text, load_pairs,
                         save_pairs)
from urlret.tokenizer import EOS, train_tokenizer

from conftest import make_corpus


def test_template_with_prompts(toy_corpus, toy_tokenizer):
    record = toy_corpus.get("d1")
    seq = format_stage1_target(record, default_stage1_spec(), toy_tokenizer)
    assert toy_tokenizer.decode(seq) == \
        "title: red apple orchard passage: apple grows in the old orchard"


def test_template_without_prompts(toy_corpus, toy_tokenizer):
    spec = default_stage1_spec(use_prompts=False)
    seq = format_stage1_target(toy_corpus.get("d1"), spec, toy_tokenizer)
    assert toy_tokenizer.decode(seq) == \
        "red apple orchard apple grows in the old orchard"


def test_passage_token_truncation(toy_tokenizer):
    long_passage = " ".join(f"w{i}" for i in range(200))
    corpus = make_corpus([("d1", "T", long_passage, "u")])
    spec = default_stage1_spec(passage_trunc=32, target_max=64)
    text = format_stage1_text(corpus.get("d1"), spec, toy_tokenizer)
    prefix = toy_tokenizer.decode(toy_tokenizer.encode_ids(long_passage)[:32]).strip()
    assert text == f"title: T passage: {prefix}"


def test_stage1_bijection_and_meta(toy_corpus, toy_tokenizer):
    pseudo = build_augmented_set(toy_corpus, AugmentConfig(k=4, min_len=2, max_len=4))
    pairs = build_stage1(pseudo, toy_corpus, default_stage1_spec(), toy_tokenizer)
    assert len(pairs) == len(pseudo)
    for pq, p in zip(pseudo, pairs):
        assert p.meta.passage_id == pq.passage_id
        assert p.meta.url == toy_corpus.get(pq.passage_id).assigned_url
        assert len(p.source.ids) <= 32
        assert p.target.ids[-1] == EOS


def test_stage1_dangling_id(toy_corpus, toy_tokenizer):
    pseudo = build_augmented_set(toy_corpus, AugmentConfig(k=1, min_len=2, max_len=4))
    bad = [pseudo[0].__class__(text="x", passage_id="nope")]
    with pytest.raises(DatasetError):
        build_stage1(bad, toy_corpus, default_stage1_spec(), toy_tokenizer)


def test_stage2_one_pair_per_record(toy_corpus, toy_tokenizer):
    pairs = build_stage2(toy_corpus, default_stage2_spec(), toy_tokenizer)
    assert len(pairs) == len(toy_corpus)
    for p in pairs:
        assert len(p.target.ids) <= 80
        decoded = toy_tokenizer.decode(p.target)
        assert decoded == toy_corpus.get(p.meta.passage_id).assigned_url


def test_stage2_source_equals_stage1_target_text(toy_corpus, toy_tokenizer):
    s1 = default_stage1_spec()
    s2 = default_stage2_spec()
    stage2 = build_stage2(toy_corpus, s2, toy_tokenizer, stage1_spec=s1)
    for p, record in zip(stage2, toy_corpus.records):
        assert toy_tokenizer.decode(p.source.ids) == \
            format_stage1_text(record, s1, toy_tokenizer)


def test_stage2_source_starts_with_prompt(toy_corpus, toy_tokenizer):
    prompt_ids = tuple(toy_tokenizer.encode_ids("title:"))
    for p in build_stage2(toy_corpus, default_stage2_spec(), toy_tokenizer):
        assert p.source.ids[:len(prompt_ids)] == prompt_ids


def test_single_stage_targets_urls(toy_corpus, toy_tokenizer):
    pseudo = build_augmented_set(toy_corpus, AugmentConfig(k=2, min_len=2, max_len=4))
    spec = StageSpec(stage=URL_GEN, source_max=32, target_max=80)
    pairs = build_single_stage(pseudo, toy_corpus, spec, toy_tokenizer)
    assert len(pairs) == len(pseudo)
    assert toy_tokenizer.decode(pairs[0].target) == \
        toy_corpus.get(pairs[0].meta.passage_id).assigned_url


def test_spec_validation():
    with pytest.raises(DatasetError):
        StageSpec(stage="nope")
    with pytest.raises(DatasetError):
        StageSpec(stage=PASSAGE_GEN, passage_trunc=100, target_max=50)
    with pytest.raises(DatasetError):
        StageSpec(stage=URL_GEN, source_max=1)


def test_save_load_and_hash_guard(tmp_path, toy_corpus, toy_tokenizer):
    spec = default_stage2_spec()
    pairs = build_stage2(toy_corpus, spec, toy_tokenizer)
    path = tmp_path / "pairs.jsonl"
    save_pairs(pairs, spec, toy_tokenizer, path)
    loaded, loaded_spec = load_pairs(path, toy_tokenizer)
    assert loaded == pairs
    assert loaded_spec == spec
    other = train_tokenizer(toy_corpus, 290, seed=0)
    with pytest.raises(DatasetError, match="different tokenizer"):
        load_pairs(path, other)


def test_serialization_deterministic(tmp_path, toy_corpus, toy_tokenizer):
    spec = default_stage1_spec()
    pseudo = build_augmented_set(toy_corpus, AugmentConfig(k=3, min_len=2, max_len=4))
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_pairs(build_stage1(pseudo, toy_corpus, spec, toy_tokenizer), spec, toy_tokenizer, pa)
    save_pairs(build_stage1(pseudo, toy_corpus, spec, toy_tokenizer), spec, toy_tokenizer, pb)
    assert pa.read_bytes() == pb.read_bytes()
