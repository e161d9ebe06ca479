"""Byte-level BPE tokenizer.

URLs receive no special treatment: they go through the same byte-level
merge machinery as titles and passages, so identifiers need no separate
alphabet. Specials sit at fixed ids 0-3 and never collide with learned
tokens (learned tokens are raw byte strings; specials are markers).
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_NAMES = {"pad": PAD, "bos": BOS, "eos": EOS, "unk": UNK}
N_SPECIALS = 4
N_BYTES = 256
MIN_VOCAB = N_SPECIALS + N_BYTES

FORMAT_VERSION = 1

PROMPT_TITLE = "title: "
PROMPT_PASSAGE = "passage: "

# Whitespace-attached chunking; concatenation of chunks always equals the
# original string, so merges never cross chunk boundaries but roundtrips
# stay byte-exact.
_CHUNK = re.compile(r" ?[^\s]+|\s+")


class TokenizerError(ValueError):
    pass


SOURCE, TARGET = "source", "target"


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    role: str


class Tokenizer:
    def __init__(self, merges: list[tuple[bytes, bytes]]):
        self.merges = list(merges)
        self.ranks: dict[tuple[bytes, bytes], int] = {p: i for i, p in enumerate(merges)}
        # vocab: specials, then the 256 single bytes, then one token per merge
        self.vocab: list[bytes | None] = [None] * N_SPECIALS
        self.vocab += [bytes([b]) for b in range(N_BYTES)]
        self.vocab += [a + b for a, b in merges]
        self.token_to_id: dict[bytes, int] = {
            tok: i for i, tok in enumerate(self.vocab) if tok is not None
        }
        self.byte_fallback = True
        self._chunk_cache: dict[bytes, list[int]] = {}

    def __len__(self) -> int:
        return len(self.vocab)

    # -- encoding ---------------------------------------------------------

    def _bpe_chunk(self, chunk: bytes) -> list[int]:
        cached = self._chunk_cache.get(chunk)
        if cached is not None:
            return cached
        parts = [bytes([b]) for b in chunk]
        while len(parts) > 1:
            best: tuple[int, int] | None = None  # (rank, position)
            for i in range(len(parts) - 1):
                rank = self.ranks.get((parts[i], parts[i + 1]))
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, i)
            if best is None:
                break
            _, i = best
            parts[i:i + 2] = [parts[i] + parts[i + 1]]
        ids = [self.token_to_id[p] for p in parts]
        self._chunk_cache[chunk] = ids
        return ids

    def encode_ids(self, text: str) -> list[int]:
        """Raw subword ids, no specials, no truncation."""
        ids: list[int] = []
        for chunk in _CHUNK.findall(text):
            ids.extend(self._bpe_chunk(chunk.encode("utf-8")))
        return ids

    def encode(self, text: str, role: str, max_len: int) -> TokenSequence:
        """Encode for a model role; targets end with EOS inside max_len."""
        if max_len < 2:
            raise TokenizerError("max_len must be >= 2")
        if role not in (SOURCE, TARGET):
            raise TokenizerError(f"unknown role {role!r}")
        ids = self.encode_ids(text)
        if role == TARGET:
            ids = ids[: max_len - 1] + [EOS]
        else:
            ids = ids[:max_len]
        return TokenSequence(ids=tuple(ids), role=role)

    # -- decoding ---------------------------------------------------------

    def decode(self, ids) -> str:
        """Inverse of encode on untruncated input; stops at first EOS."""
        if isinstance(ids, TokenSequence):
            ids = ids.ids
        out = bytearray()
        for i in ids:
            if not 0 <= i < len(self.vocab):
                raise TokenizerError(f"token id {i} out of range (vocab {len(self.vocab)})")
            if i == EOS:
                break
            if i < N_SPECIALS:
                continue
            out += self.vocab[i]
        return out.decode("utf-8", errors="replace")

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "version": FORMAT_VERSION,
            "specials": dict(SPECIAL_NAMES),
            "vocab": [list(t) if t is not None else None for t in self.vocab],
            "merges": [[list(a), list(b)] for a, b in self.merges],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != FORMAT_VERSION:
            raise TokenizerError(f"unsupported tokenizer version {payload.get('version')!r}")
        merges = [(bytes(a), bytes(b)) for a, b in payload["merges"]]
        return cls(merges)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _training_texts(corpus: Corpus) -> list[str]:
    texts = [PROMPT_TITLE.strip(), PROMPT_PASSAGE.strip()]
    for r in corpus.records:
        texts.append(r.title)
        texts.append(r.passage)
        texts.append(r.assigned_url)
    return texts


def train_tokenizer(corpus: Corpus, vocab_size: int, seed: int = 0) -> Tokenizer:
    """Learn a deterministic byte-level BPE vocabulary of exactly vocab_size.

    Merge selection: highest pair frequency, ties broken by the
    lexicographically smallest (left, right) byte-string pair. The seed is
    accepted for interface uniformity; training is deterministic.
    """
    if vocab_size < MIN_VOCAB:
        raise TokenizerError(f"vocab_size must be >= {MIN_VOCAB}")
    if len(corpus) == 0:
        raise TokenizerError("corpus is empty")

    chunk_counts: Counter[bytes] = Counter()
    for text in _training_texts(corpus):
        for chunk in _CHUNK.findall(text):
            chunk_counts[chunk.encode("utf-8")] += 1

    words: list[list[bytes]] = []
    freqs: list[int] = []
    for chunk, n in sorted(chunk_counts.items()):
        words.append([bytes([b]) for b in chunk])
        freqs.append(n)

    pair_counts: Counter[tuple[bytes, bytes]] = Counter()
    pair_where: defaultdict[tuple[bytes, bytes], set[int]] = defaultdict(set)
    for w, (word, n) in enumerate(zip(words, freqs)):
        for pair in zip(word, word[1:]):
            pair_counts[pair] += n
            pair_where[pair].add(w)

    merges: list[tuple[bytes, bytes]] = []
    n_merges = vocab_size - MIN_VOCAB
    while len(merges) < n_merges:
        live = [(p, c) for p, c in pair_counts.items() if c > 0]
        if not live:
            raise TokenizerError(
                f"corpus too small to learn {n_merges} merges (got {len(merges)})"
            )
        best_pair = min(live, key=lambda pc: (-pc[1], pc[0]))[0]
        merges.append(best_pair)
        merged = best_pair[0] + best_pair[1]
        for w in sorted(pair_where[best_pair]):
            word, n = words[w], freqs[w]
            for pair in zip(word, word[1:]):
                pair_counts[pair] -= n
                pair_where[pair].discard(w)
            i = 0
            while i < len(word) - 1:
                if word[i] == best_pair[0] and word[i + 1] == best_pair[1]:
                    word[i:i + 2] = [merged]
                else:
                    i += 1
            for pair in zip(word, word[1:]):
                pair_counts[pair] += n
                pair_where[pair].add(w)
    return Tokenizer(merges)
