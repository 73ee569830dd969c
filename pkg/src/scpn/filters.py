"""Post-filtering of generated paraphrases by n-gram overlap and embedding similarity."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ScpnError


class EmptySentence(ScpnError):
    pass


class ZeroVector(ScpnError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    min_ngram_overlap: float = 0.5
    min_similarity: float = 0.7
    embedding_path: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.min_ngram_overlap <= 1.0:
            raise ValueError("min_ngram_overlap must be in [0, 1]")
        if not -1.0 <= self.min_similarity <= 1.0:
            raise ValueError("min_similarity must be in [-1, 1]")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_overlap(s: str, g: str, orders: Sequence[int] = (1, 2)) -> float:
    """Mean multiset Jaccard over n-gram orders (orders with no n-grams on
    either side are skipped)."""
    a, b = s.lower().split(), g.lower().split()
    if not a or not b:
        raise EmptySentence("cannot compare an empty sentence")
    scores = []
    for n in orders:
        ca, cb = _ngrams(a, n), _ngrams(b, n)
        union = sum((ca | cb).values())
        if union:
            scores.append(sum((ca & cb).values()) / union)
    return sum(scores) / len(scores)


def char_trigrams(word: str) -> list[str]:
    padded = f"#{word}#"
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def trigram_key(trigram: str) -> str:
    """Embedding-file key of a trigram: wrapped in ``#`` so it never collides with a word."""
    return f"#{trigram}#"


class EmbeddingScorer:
    """Sentence embedding = [mean word vector ; mean character-trigram vector].

    Vectors come from a file (``token v1 ... vd`` per line) or, without one,
    from a seeded hash projection so every token gets a fixed random vector.
    """

    def __init__(self, vectors: Optional[dict] = None, dim: int = 64, seed: int = 0):
        self.vectors = vectors
        self.seed = seed
        if vectors:
            self.dim = len(next(iter(vectors.values())))
        else:
            self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_file(cls, path) -> EmbeddingScorer:
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if len(parts) < 2:
                    continue
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        if not vectors:
            raise ScpnError(f"{path}: no vectors")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ScpnError(f"{path}: inconsistent vector sizes {sorted(dims)}")
        return cls(vectors)

    @classmethod
    def from_config(cls, config: FilterConfig, seed: int = 0) -> EmbeddingScorer:
        if config.embedding_path:
            return cls.from_file(config.embedding_path)
        return cls(seed=seed)

    def _vector(self, key: str) -> Optional[np.ndarray]:
        if self.vectors is not None:
            return self.vectors.get(key)
        vec = self._cache.get(key)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}\x00{key}".encode("utf-8"), digest_size=8).digest()
            vec = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(self.dim)
            self._cache[key] = vec
        return vec

    def _mean(self, keys: Iterable[str]) -> np.ndarray:
        vecs = [v for v in (self._vector(k) for k in keys) if v is not None]
        return np.mean(vecs, axis=0) if vecs else np.zeros(self.dim)

    def embed(self, sentence: str) -> np.ndarray:
        words = sentence.lower().split()
        tris = [trigram_key(t) for w in words for t in char_trigrams(w)]
        return np.concatenate([self._mean(words), self._mean(tris)])

    def similarity(self, s: str, g: str) -> float:
        u, v = self.embed(s), self.embed(g)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            raise ZeroVector("sentence has no known words or trigrams")
        return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def embed_similarity(scorer: EmbeddingScorer, s: str, g: str) -> float:
    return scorer.similarity(s, g)


@dataclass(frozen=True)
class ScoredCandidate:
    source: str
    paraphrase: str
    score: float
    overlap: float
    similarity: float


def postprocess(
    candidates: Iterable[tuple[str, str, float]],
    config: FilterConfig = FilterConfig(),
    scorer: Optional[EmbeddingScorer] = None,
) -> list[ScoredCandidate]:
    """Candidates meeting both thresholds, in input order, with their metrics."""
    scorer = scorer or EmbeddingScorer.from_config(config)
    kept = []
    for s, g, score in candidates:
        overlap = ngram_overlap(s, g)
        sim = scorer.similarity(s, g)
        if overlap >= config.min_ngram_overlap and sim >= config.min_similarity:
            kept.append(ScoredCandidate(s, g, score, overlap, sim))
    return kept
