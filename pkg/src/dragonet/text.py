"""Tokenization, vocabulary and index-based sentence encoding."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from dragonet.errors import DataError

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
DEFAULT_MAX_LEN = 16

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters (accents kept)."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        return "".join(f"{i}\t{t}\n" for i, t in enumerate(self.tokens))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            idx, sep, tok = line.partition("\t")
            if not sep or not idx.isdigit() or int(idx) != len(tokens):
                raise DataError(f"{path}:{lineno}: expected '<id>\\t<token>' with contiguous ids")
            tokens.append(tok)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DataError(f"{path}: ids 0 and 1 must be {PAD_TOKEN} and {UNK_TOKEN}")
        return cls(tuple(tokens))


def build_vocab(corpus: Iterable[str], min_freq: int = 1) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically."""
    counts: Counter[str] = Counter()
    n = 0
    for text in corpus:
        counts.update(tokenize(text))
        n += 1
    if n == 0:
        raise DataError("build_vocab: empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary((PAD_TOKEN, UNK_TOKEN, *kept))


@dataclass(frozen=True)
class EncodedSentence:
    ids: np.ndarray
    true_length: int


def encode_text(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> EncodedSentence:
    if max_len < 1:
        raise ValueError("encode_text: max_len must be >= 1")
    ids = [vocab.id(t) for t in tokenize(text)][:max_len]
    out = np.full(max_len, PAD, dtype=np.int64)
    out[: len(ids)] = ids
    return EncodedSentence(out, len(ids))


def encode_many(texts: Iterable[str], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> np.ndarray:
    """Stack encodings into an (n, max_len) id matrix."""
    rows = [encode_text(t, vocab, max_len).ids for t in texts]
    if not rows:
        return np.zeros((0, max_len), dtype=np.int64)
    return np.stack(rows)
