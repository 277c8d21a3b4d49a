"""Shallow baselines: TF-IDF or hashed bag-of-words with cosine KNN."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from dragonet.data import Transaction
from dragonet.errors import ConfigError, DataError
from dragonet.model import SCENARIOS
from dragonet.taxonomy import Taxonomy, resolve
from dragonet.text import tokenize

DEFAULT_BUCKETS = 2**15


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray  # strictly increasing
    values: np.ndarray

    @classmethod
    def from_row(cls, row: sp.csr_matrix) -> "SparseVector":
        row = row.tocsr()
        row.sort_indices()
        return cls(row.indices.astype(np.int64), row.data.astype(np.float64))

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.indices.tolist(), self.values.tolist()))


def _l2_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.csr_matrix(sp.diags(inv) @ m)


class TfidfVectorizer:
    """Raw term counts times smoothed idf ``1 + ln((1 + N) / (1 + df))``, rows L2-normalized."""

    def __init__(self):
        self.vocabulary_: dict[str, int] | None = None
        self.idf_: np.ndarray | None = None

    def fit(self, corpus: Sequence[str]) -> "TfidfVectorizer":
        if len(corpus) == 0:
            raise DataError("tfidf: cannot fit on an empty corpus")
        df: Counter[str] = Counter()
        for doc in corpus:
            df.update(set(tokenize(doc)))
        terms = sorted(df)
        self.vocabulary_ = {t: i for i, t in enumerate(terms)}
        n = len(corpus)
        self.idf_ = 1.0 + np.log((1.0 + n) / (1.0 + np.array([df[t] for t in terms], dtype=np.float64)))
        return self

    def transform(self, texts: Sequence[str]) -> sp.csr_matrix:
        if self.vocabulary_ is None:
            raise DataError("tfidf: transform before fit")
        rows, cols, vals = [], [], []
        for r, doc in enumerate(texts):
            counts = Counter(t for t in tokenize(doc) if t in self.vocabulary_)
            for term, c in counts.items():
                j = self.vocabulary_[term]
                rows.append(r)
                cols.append(j)
                vals.append(c * self.idf_[j])
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(texts), len(self.vocabulary_)))
        m.sort_indices()
        return _l2_normalize(m)

    def fit_transform(self, corpus: Sequence[str]) -> sp.csr_matrix:
        return self.fit(corpus).transform(corpus)


def _hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


class HashingVectorizer:
    """Stateless signed feature hashing into ``n_buckets`` columns, rows L2-normalized.

    Bucket and sign come from disjoint bits of a 64-bit blake2b digest, so
    vectors are stable across processes (unlike the builtin ``hash``).
    """

    def __init__(self, n_buckets: int = DEFAULT_BUCKETS):
        if n_buckets < 1:
            raise ConfigError("hashing: n_buckets must be >= 1")
        self.n_buckets = n_buckets

    def fit(self, corpus=None) -> "HashingVectorizer":
        return self

    def transform(self, texts: Sequence[str]) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, doc in enumerate(texts):
            for token in tokenize(doc):
                h = _hash(token)
                rows.append(r)
                cols.append((h >> 1) % self.n_buckets)
                vals.append(1.0 if h & 1 else -1.0)
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(texts), self.n_buckets))
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return _l2_normalize(m)

    def fit_transform(self, corpus: Sequence[str]) -> sp.csr_matrix:
        return self.transform(corpus)


def make_vectorizer(mode: str, n_buckets: int = DEFAULT_BUCKETS):
    if mode == "tfidf":
        return TfidfVectorizer()
    if mode == "hashing":
        return HashingVectorizer(n_buckets)
    raise ConfigError(f"unknown vectorizer mode {mode!r}")


def vectorize(texts: Sequence[str], mode: str, fit_corpus: Sequence[str] | None = None, n_buckets: int = DEFAULT_BUCKETS):
    """Encode ``texts``; returns (one SparseVector per text, fitted vectorizer)."""
    vec = make_vectorizer(mode, n_buckets)
    vec.fit(texts if fit_corpus is None else fit_corpus)
    m = vec.transform(texts)
    return [SparseVector.from_row(m[i]) for i in range(m.shape[0])], vec


def scenario_text(t: Transaction, scenario: str) -> str:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if scenario == "name_only":
        return t.merchant_name
    if scenario == "activity_only":
        return t.activity
    return f"{t.merchant_name} {t.activity}"


# -- KNN ----------------------------------------------------------------


def top_k(similarity: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k largest entries per row, ties to the lower index."""
    k = min(k, similarity.shape[1])
    return np.argsort(-similarity, axis=1, kind="stable")[:, :k]


def vote(labels: np.ndarray, n_classes: int) -> tuple[int, np.ndarray]:
    """Majority label among ranked neighbors; ties go to the label seen nearest first."""
    counts = np.bincount(labels, minlength=n_classes)
    best = counts.max()
    for lab in labels:
        if counts[lab] == best:
            return int(lab), counts
    raise AssertionError("unreachable")


class KNNClassifier:
    """Cosine-similarity KNN voting independently on both taxonomy levels."""

    def __init__(self, taxonomy: Taxonomy, mode: str = "tfidf", k: int = 5, scenario: str = "both", n_buckets: int = DEFAULT_BUCKETS):
        if k < 1:
            raise ConfigError("knn: k must be >= 1")
        self.taxonomy = taxonomy
        self.mode = mode
        self.k = k
        self.scenario = scenario
        self.vectorizer = make_vectorizer(mode, n_buckets)

    def fit(self, dataset: Sequence[Transaction]) -> "KNNClassifier":
        if not dataset:
            raise DataError("knn: empty training set")
        texts = [scenario_text(t, self.scenario) for t in dataset]
        self.train_matrix = self.vectorizer.fit(texts).transform(texts)
        self.macro = np.array([t.macro for t in dataset])
        self.micro = np.array([t.micro for t in dataset])
        return self

    def neighbors(self, dataset: Sequence[Transaction]) -> np.ndarray:
        q = self.vectorizer.transform([scenario_text(t, self.scenario) for t in dataset])
        sims = np.asarray((q @ self.train_matrix.T).todense())
        return top_k(sims, self.k)

    def vote_scores(self, dataset: Sequence[Transaction]):
        """Per-query label predictions and vote-count score matrices for both levels."""
        nb = self.neighbors(dataset)
        j, kk = self.taxonomy.n_macros, self.taxonomy.n_micros
        macro = np.empty(len(nb), dtype=np.int64)
        micro = np.empty(len(nb), dtype=np.int64)
        s_macro = np.zeros((len(nb), j))
        s_micro = np.zeros((len(nb), kk))
        for r, row in enumerate(nb):
            macro[r], s_macro[r] = vote(self.macro[row], j)
            micro[r], s_micro[r] = vote(self.micro[row], kk)
        return macro, micro, s_macro, s_micro

    def predict_indices(self, dataset: Sequence[Transaction], with_tal: bool = False):
        macro, micro, s_macro, s_micro = self.vote_scores(dataset)
        if not with_tal:
            return macro, micro
        # one-hot the voted macro so TAL follows the vote's own tie-break
        onehot = np.zeros_like(s_macro)
        onehot[np.arange(len(macro)), macro] = 1.0
        # prefer the micro vote winner when it is a valid child, else best in-macro count
        boosted = s_micro + 0.5 * (np.arange(s_micro.shape[1])[None, :] == micro[:, None])
        return resolve(onehot, boosted, self.taxonomy, with_tal=True)


def knn_classify(query: SparseVector, train: Sequence[tuple[SparseVector, int, int]], k: int, taxonomy: Taxonomy) -> tuple[int, int]:
    """Single-query KNN over explicit (vector, macro, micro) training triples."""
    if not train:
        raise DataError("knn: empty training set")
    qd = query.to_dict()
    sims = np.array([[sum(qd.get(i, 0.0) * v for i, v in zip(tv.indices.tolist(), tv.values.tolist())) for tv, _, _ in train]])
    nb = top_k(sims, k)[0]
    macros = np.array([train[i][1] for i in nb])
    micros = np.array([train[i][2] for i in nb])
    return vote(macros, taxonomy.n_macros)[0], vote(micros, taxonomy.n_micros)[0]
