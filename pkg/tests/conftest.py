import json

import pytest
import torch

from urlret.corpus import Corpus, PassageRecord
from urlret.tokenizer import train_tokenizer

torch.set_num_threads(1)


def make_corpus(rows):
    """Build a Corpus from (id, title, passage, url) tuples."""
    records = [
        PassageRecord(id=i, title=t, passage=p, urls=(u,), assigned_url=u)
        for i, t, p, u in rows
    ]
    return Corpus(records=records)


@pytest.fixture(scope="session")
def toy_corpus():
    return make_corpus([
        ("d1", "red apple orchard", "apple grows in the old orchard",
         "https://example.org/doc/red-apple-orchard"),
        ("d2", "river dam", "the dam holds the river apple",
         "https://example.org/doc/river-dam"),
        ("d3", "stone bridge", "a stone bridge spans the river",
         "https://example.org/doc/stone-bridge"),
    ])


@pytest.fixture(scope="session")
def toy_tokenizer(toy_corpus):
    return train_tokenizer(toy_corpus, 300, seed=0)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "",
                     soft: bool = False) -> bool:
    """Collect one pass/fail line per acceptance criterion; echoed in the
    terminal summary so they survive output capture."""
    status = "PASS" if passed else ("WARN" if soft else "FAIL")
    line = f"[{status}] criterion {number:>2} {name}: {detail}".rstrip(": ")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    return path
