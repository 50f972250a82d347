"""Term indexing, tf-idf vectors, PPMI co-occurrence embeddings and
document similarity.

tf(t, d) = count(t, d) / total_tokens(d)
idf(t)   = ln((1 + N) / (1 + df(t))) + 1        (always > 0)
PPMI(w,c) = max(0, ln(n(w,c) * T / (n(w) * n(c))))

Embeddings come from a rank-k truncated SVD of the dense PPMI matrix via
seeded randomized subspace iteration (oversampling 10, 4 power iterations);
word vector = U_k * sqrt(S_k). Same seed and input reproduce the model
bitwise.
"""

from __future__ import annotations

import math
import warnings as _warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .textproc import BagOfWords


class SynonymConfigError(ValueError):
    pass


@dataclass
class TermIndex:
    vocabulary: list[str]
    df: dict[str, int]
    n_docs: int
    synonym_merges: dict[str, str] = field(default_factory=dict)  # member -> canonical

    def canonical(self, term: str) -> str:
        return self.synonym_merges.get(term, term)

    def merge_bag(self, bag: BagOfWords) -> dict[str, int]:
        merged: Counter[str] = Counter()
        for term, count in bag.counts.items():
            merged[self.canonical(term)] += count
        return dict(merged)


@dataclass
class DocVector:
    weights: dict[str, float]
    norm: float

    def dot(self, other: "DocVector") -> float:
        if len(self.weights) > len(other.weights):
            return other.dot(self)
        return sum(w * other.weights.get(t, 0.0) for t, w in self.weights.items())


@dataclass
class CooccurrenceMatrix:
    vocabulary: list[str]
    counts: dict[tuple[int, int], float]
    marginals: np.ndarray
    total: float


@dataclass
class EmbeddingModel:
    k: int
    seed: int
    word_vectors: dict[str, np.ndarray]
    warnings: list[str] = field(default_factory=list)


@dataclass
class SimilarityMatrix:
    pairs: dict[tuple[str, str], float]   # upper-triangular, a < b
    zero_ids: frozenset[str]

    def get(self, a: str, b: str) -> float:
        if a == b:
            return 0.0 if a in self.zero_ids else 1.0
        key = (a, b) if a < b else (b, a)
        return self.pairs[key]

    def to_json(self) -> list[list]:
        return [[a, b, v] for (a, b), v in sorted(self.pairs.items())]


def build_index(bags: dict[str, BagOfWords], synonym_sets: dict[str, list[str]] | None = None) -> TermIndex:
    """Build df statistics after folding synonym-set members into their canonical term."""
    if not bags:
        raise ValueError("cannot build an index from zero bags")
    merges: dict[str, str] = {}
    for canonical, members in (synonym_sets or {}).items():
        for member in members:
            if member == canonical:
                continue
            if member in merges and merges[member] != canonical:
                raise SynonymConfigError(
                    f"term '{member}' appears in synonym sets for both "
                    f"'{merges[member]}' and '{canonical}'"
                )
            if member in (synonym_sets or {}):
                raise SynonymConfigError(
                    f"term '{member}' is both a canonical term and a member of '{canonical}'"
                )
            merges[member] = canonical
    index = TermIndex(vocabulary=[], df={}, n_docs=len(bags), synonym_merges=merges)
    df: Counter[str] = Counter()
    for bag in bags.values():
        df.update(index.merge_bag(bag).keys())
    index.df = dict(df)
    index.vocabulary = sorted(df)
    return index


def idf(index: TermIndex, term: str) -> float:
    return math.log((1 + index.n_docs) / (1 + index.df.get(term, 0))) + 1.0


def tfidf_vectors(index: TermIndex, bags: dict[str, BagOfWords]) -> dict[str, DocVector]:
    """L2-normalized tf-idf vector per document; empty bags yield zero vectors."""
    vectors = {}
    for doc_id, bag in bags.items():
        merged = index.merge_bag(bag)
        total = sum(merged.values())
        if total == 0:
            vectors[doc_id] = DocVector(weights={}, norm=0.0)
            continue
        raw = {t: (c / total) * idf(index, t) for t, c in merged.items()}
        norm = math.sqrt(sum(w * w for w in raw.values()))
        vectors[doc_id] = DocVector(
            weights={t: w / norm for t, w in sorted(raw.items())},
            norm=1.0,
        )
    return vectors


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def build_cooccurrence(corpus_tokens: list[list[str]], window: int = 5) -> CooccurrenceMatrix:
    """Symmetric windowed co-occurrence counts over per-document token streams."""
    vocab = sorted({t for tokens in corpus_tokens for t in tokens})
    tid = {t: i for i, t in enumerate(vocab)}
    counts: Counter[tuple[int, int]] = Counter()
    for tokens in corpus_tokens:
        n = len(tokens)
        for i in range(n):
            wi = tid[tokens[i]]
            for j in range(i + 1, min(i + window + 1, n)):
                wj = tid[tokens[j]]
                counts[(wi, wj)] += 1
                counts[(wj, wi)] += 1
    marginals = np.zeros(len(vocab))
    for (i, _j), c in counts.items():
        marginals[i] += c
    return CooccurrenceMatrix(
        vocabulary=vocab,
        counts=dict(counts),
        marginals=marginals,
        total=float(sum(counts.values())),
    )


def ppmi_matrix(cooc: CooccurrenceMatrix) -> np.ndarray:
    """Dense PPMI matrix; zero marginals and non-co-occurring pairs stay 0."""
    n = len(cooc.vocabulary)
    mat = np.zeros((n, n))
    for (i, j), c in cooc.counts.items():
        denom = cooc.marginals[i] * cooc.marginals[j]
        if denom > 0:
            mat[i, j] = max(0.0, math.log(c * cooc.total / denom))
    return mat


def truncated_svd(mat: np.ndarray, k: int, seed: int, oversample: int = 10,
                  power_iters: int = 4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Randomized subspace-iteration SVD; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    n_cols = mat.shape[1]
    p = min(n_cols, k + oversample)
    omega = rng.standard_normal((n_cols, p))
    q, _ = np.linalg.qr(mat @ omega)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(mat.T @ q)
        q, _ = np.linalg.qr(mat @ q)
    b = q.T @ mat
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub
    return u[:, :k], s[:k], vt[:k]


def build_embeddings(corpus_tokens: list[list[str]], window: int = 5, k: int = 50,
                     seed: int = 0) -> EmbeddingModel:
    """PPMI co-occurrence + truncated SVD word vectors (U_k * sqrt(S_k))."""
    cooc = build_cooccurrence(corpus_tokens, window)
    n = len(cooc.vocabulary)
    if n == 0:
        return EmbeddingModel(k=0, seed=seed, word_vectors={})
    model_warnings = []
    if k > n:
        model_warnings.append(f"rank {k} clamped to vocabulary size {n}")
        _warnings.warn(model_warnings[-1], stacklevel=2)
        k = n
    mat = ppmi_matrix(cooc)
    u, s, _vt = truncated_svd(mat, k, seed)
    vecs = u * np.sqrt(s)[None, :]
    return EmbeddingModel(
        k=k,
        seed=seed,
        word_vectors={t: vecs[i].copy() for i, t in enumerate(cooc.vocabulary)},
        warnings=model_warnings,
    )


def doc_embeddings(model: EmbeddingModel, tfidf_vecs: dict[str, DocVector]) -> dict[str, DocVector]:
    """tf-idf-weighted sum of word vectors per document, L2-normalized.

    Terms without a word vector are skipped; a document with none gets a
    zero vector (detectable via norm == 0).
    """
    out = {}
    for doc_id, vec in tfidf_vecs.items():
        acc = np.zeros(model.k)
        hit = False
        for term, weight in vec.weights.items():
            wv = model.word_vectors.get(term)
            if wv is not None:
                acc = acc + weight * wv
                hit = True
        norm = float(np.linalg.norm(acc))
        if not hit or norm == 0.0:
            out[doc_id] = DocVector(weights={}, norm=0.0)
            continue
        acc = acc / norm
        out[doc_id] = DocVector(
            weights={str(i): float(v) for i, v in enumerate(acc)},
            norm=1.0,
        )
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def similarity_matrix(vectors: dict[str, DocVector]) -> SimilarityMatrix:
    """Cosine for every unordered pair; pairs involving a zero vector score 0."""
    ids = sorted(vectors)
    zero_ids = frozenset(i for i in ids if vectors[i].norm == 0.0)
    pairs = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if a in zero_ids or b in zero_ids:
                pairs[(a, b)] = 0.0
            else:
                # stored vectors are unit-norm, so the dot product is the cosine
                pairs[(a, b)] = vectors[a].dot(vectors[b])
    return SimilarityMatrix(pairs=pairs, zero_ids=zero_ids)


def suggest_synonyms(model: EmbeddingModel, min_cosine: float = 0.7) -> list[tuple[str, str, float]]:
    """All term pairs with embedding cosine >= min_cosine, best first. Advisory only."""
    terms = sorted(model.word_vectors)
    out = []
    for i, a in enumerate(terms):
        va = model.word_vectors[a]
        for b in terms[i + 1:]:
            c = cosine(va, model.word_vectors[b])
            if c >= min_cosine:
                out.append((a, b, c))
    out.sort(key=lambda x: (-x[2], x[0], x[1]))
    return out


def model_to_json(model: EmbeddingModel) -> dict:
    return {
        "vocabulary": sorted(model.word_vectors),
        "k": model.k,
        "seed": model.seed,
        "vectors": {t: [float(x) for x in v] for t, v in sorted(model.word_vectors.items())},
    }
