import pytest

from urlret.corpus import ingest_corpus, load_queries, validate_queries
from urlret.synth import generate_records, write_synth


def test_counts_and_distinct_urls():
    records, queries = generate_records(40, seed=1)
    assert len(records) == 40 and len(queries) == 40
    urls = [r["urls"][0] for r in records]
    assert len(set(urls)) == len(urls)
    assert all(len(set(r["id"] for r in records)) == 40 for _ in [0])


def test_same_seed_same_records():
    assert generate_records(10, seed=7) == generate_records(10, seed=7)


def test_different_seed_differs():
    assert generate_records(10, seed=7) != generate_records(10, seed=8)


def test_queries_reference_their_record():
    records, queries = generate_records(12, seed=3)
    ids = {r["id"] for r in records}
    for q in queries:
        assert set(q["positive_passage_ids"]) <= ids


def test_rejects_nonpositive_and_oversized():
    with pytest.raises(ValueError):
        generate_records(0, seed=0)
    with pytest.raises(ValueError):
        generate_records(10_000, seed=0)


def test_written_files_round_trip_through_ingest(tmp_path):
    corpus_path = tmp_path / "corpus.jsonl"
    queries_path = tmp_path / "queries.tsv"
    write_synth(15, 0, corpus_path, queries_path)
    corpus = ingest_corpus(corpus_path, seed=0)
    queries = load_queries(queries_path)
    assert len(corpus) == 15 and len(queries) == 15
    validate_queries(queries, corpus)
