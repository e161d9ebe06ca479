import pytest

from urlret.corpus import (CorpusError, QueryRecord, ingest_corpus,
                           normalize_text, passage_in_corpus, split_queries,
                           write_corpus)

from conftest import write_jsonl


def test_single_url_forced(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl",
                       [{"id": "d1", "title": "T", "passage": "P", "urls": ["u1"]}])
    corpus = ingest_corpus(path, seed=7)
    assert corpus.records[0].assigned_url == "u1"


def test_urls_accepts_bare_string(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl",
                       [{"id": "d1", "title": "T", "passage": "P", "urls": "u1"}])
    assert ingest_corpus(path, seed=0).records[0].assigned_url == "u1"


def test_multi_url_choice_reproducible(tmp_path):
    rows = [{"id": f"d{i}", "title": "T", "passage": f"P{i}",
             "urls": ["u1", "u2", "u3"]} for i in range(20)]
    path = write_jsonl(tmp_path / "c.jsonl", rows)
    a = ingest_corpus(path, seed=5)
    b = ingest_corpus(path, seed=5)
    assert [r.assigned_url for r in a.records] == [r.assigned_url for r in b.records]
    c = ingest_corpus(path, seed=6)
    assert [r.assigned_url for r in c.records] != [r.assigned_url for r in a.records]


def test_duplicate_id_names_line(tmp_path):
    rows = [{"id": "d1", "title": "T", "passage": "P1", "urls": ["u"]},
            {"id": "d2", "title": "T", "passage": "P2", "urls": ["u"]},
            {"id": "d1", "title": "T", "passage": "P3", "urls": ["u"]}]
    path = write_jsonl(tmp_path / "c.jsonl", rows)
    with pytest.raises(CorpusError, match="line 3"):
        ingest_corpus(path, seed=0)


@pytest.mark.parametrize("bad", [
    {"id": "d1", "title": "T", "passage": "", "urls": ["u"]},
    {"id": "d1", "title": "T", "passage": "P", "urls": []},
    {"id": "d1", "title": "T", "passage": "P", "urls": [""]},
])
def test_empty_fields_rejected(tmp_path, bad):
    path = write_jsonl(tmp_path / "c.jsonl", [bad])
    with pytest.raises(CorpusError):
        ingest_corpus(path, seed=0)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "d1", broken\n')
    with pytest.raises(CorpusError, match="line 1"):
        ingest_corpus(path, seed=0)


def test_normalization():
    assert normalize_text("  a\t\tb \n c  ") == "a b c"
    assert normalize_text("CaSe") == "CaSe"


def test_membership(toy_corpus):
    assert passage_in_corpus(toy_corpus, "apple grows in the old orchard") == {"d1"}
    assert passage_in_corpus(toy_corpus, "apple grows in the old orchard   ") == {"d1"}
    assert passage_in_corpus(toy_corpus, "zzz") == set()


def test_every_record_is_member_of_itself(toy_corpus):
    for r in toy_corpus.records:
        assert r.id in passage_in_corpus(toy_corpus, r.passage)


def test_duplicate_passages_collapse():
    from conftest import make_corpus
    corpus = make_corpus([("a", "T", "same text", "u1"), ("b", "T", "same  text ", "u2")])
    assert passage_in_corpus(corpus, "same text") == {"a", "b"}
    assert len(corpus.membership_index) == 1


def _queries(n):
    return [QueryRecord(query_id=f"q{i}", text=f"t{i}", positive_passage_ids=("d1",))
            for i in range(n)]


def test_split_sizes():
    train, dev = split_queries(_queries(10), 0.2, seed=0)
    assert len(train) == 8 and len(dev) == 2
    assert {q.query_id for q in train} | {q.query_id for q in dev} == {f"q{i}" for i in range(10)}
    assert not {q.query_id for q in train} & {q.query_id for q in dev}


def test_split_deterministic():
    a = split_queries(_queries(30), 0.3, seed=4)
    b = split_queries(_queries(30), 0.3, seed=4)
    assert [q.query_id for q in a[1]] == [q.query_id for q in b[1]]


def test_split_too_few():
    with pytest.raises(CorpusError):
        split_queries(_queries(1), 0.5, seed=0)


def test_write_roundtrip(tmp_path, toy_corpus):
    out = tmp_path / "canon.jsonl"
    write_corpus(toy_corpus, out)
    again = ingest_corpus(out, seed=99)
    assert [r.assigned_url for r in again.records] == \
        [r.assigned_url for r in toy_corpus.records]
