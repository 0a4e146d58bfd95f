"""Pair embedding, the labeled-example database, and top-k retrieval.

The database is brute-force exact: at desk scale (thousands of entries) an
exhaustive ranking is cheap and removes a whole class of approximation bugs.
Databases are immutable once built; appends produce a new instance, so
concurrent readers always see a consistent snapshot.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from tracelink.model import (
    LabeledExample,
    LinkLabel,
    StakeholderRequirement,
    SystemRequirement,
    Variation,
    normalize_requirement_text,
)

LEXICAL_DIMENSION = 512


class Metric(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


class RetrievalError(ValueError):
    pass


class DegenerateVectorError(RetrievalError):
    """A similarity was requested against an all-zero vector."""


class DimensionMismatchError(RetrievalError):
    pass


def pair_text(stake_text: str, sys_text: str) -> str:
    """Whitespace-concatenate the two sides of a pair into one embedding input."""
    return normalize_requirement_text(f"{stake_text} {sys_text}")


def system_side_text(system: SystemRequirement) -> str:
    return f"{system.mature_text} {system.demature_text}"


def requirement_pair_text(stake: StakeholderRequirement, system: SystemRequirement) -> str:
    return pair_text(stake.text, system_side_text(system))


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension vector of finite reals."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise RetrievalError("an embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise RetrievalError("embedding values must be finite")

    @property
    def dimension(self) -> int:
        return len(self.values)

    @property
    def is_degenerate(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class Embedder(Protocol):
    provider_id: str
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


class LexicalEmbedder:
    """Deterministic hashed token-count embedding; the offline fallback provider.

    Tokens are hashed into a fixed number of buckets, counted, and the counts
    are L2-normalized. Hashing uses blake2b so vectors are stable across runs
    and platforms. The empty text embeds to the zero vector (degenerate).
    """

    provider_id = "lexical"

    def __init__(self, dimension: int = LEXICAL_DIMENSION) -> None:
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, text: str) -> EmbeddingVector:
        counts = np.zeros(self.dimension, dtype=float)
        for token in text.split():
            counts[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(counts))
        if norm > 0:
            counts /= norm
        return EmbeddingVector(tuple(counts.tolist()))


class EmbeddingCache:
    """File-backed cache keyed by content hash of the embedded text."""

    def __init__(self, path: str | Path | None = None) -> None:
        self._path = Path(path) if path else None
        self._entries: dict[tuple[str, str], tuple[float, ...]] = {}
        self._lock = threading.Lock()
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = (record["provider_id"], record["content_hash"])
                    self._entries[key] = tuple(record["vector"])

    @staticmethod
    def content_hash(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def get(self, provider_id: str, text: str) -> tuple[float, ...] | None:
        return self._entries.get((provider_id, self.content_hash(text)))

    def put(self, provider_id: str, text: str, vector: tuple[float, ...]) -> None:
        key = (provider_id, self.content_hash(text))
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = vector
            if self._path:
                record = {
                    "content_hash": key[1],
                    "provider_id": provider_id,
                    "vector": list(vector),
                }
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")


class CachingEmbedder:
    """Wrap an embedder with a content-hash cache to avoid repeated provider calls."""

    def __init__(self, inner: Embedder, cache: EmbeddingCache | None = None) -> None:
        self._inner = inner
        self._cache = cache if cache is not None else EmbeddingCache()
        self.provider_id = inner.provider_id
        self.dimension = inner.dimension

    def embed(self, text: str) -> EmbeddingVector:
        cached = self._cache.get(self.provider_id, text)
        if cached is not None:
            return EmbeddingVector(cached)
        vector = self._inner.embed(text)
        self._cache.put(self.provider_id, text, vector.values)
        return vector


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatchError(f"dimensions differ: {a.dimension} vs {b.dimension}")
    if a.is_degenerate or b.is_degenerate:
        raise DegenerateVectorError("cosine similarity is undefined for a zero vector")
    va, vb = a.as_array(), b.as_array()
    return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))


def euclidean_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatchError(f"dimensions differ: {a.dimension} vs {b.dimension}")
    return float(np.linalg.norm(a.as_array() - b.as_array()))


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3
    metric: Metric = Metric.COSINE
    exclusion: frozenset[str] = field(default_factory=frozenset)
    variation_exclusion: Variation | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise RetrievalError("k must be at least 1")


@dataclass(frozen=True)
class RetrievedExample:
    example: LabeledExample
    score: float  # similarity for cosine, distance for euclidean


@dataclass(frozen=True)
class RetrievalResult:
    valid: tuple[RetrievedExample, ...]
    invalid: tuple[RetrievedExample, ...]
    valid_shortfall: bool
    invalid_shortfall: bool

    def all_ids(self) -> tuple[str, ...]:
        return tuple(r.example.example_id for r in self.valid + self.invalid)


class RetrievalDatabase:
    """Immutable store of labeled examples with their pair embeddings."""

    def __init__(
        self,
        examples: list[LabeledExample],
        vectors: list[EmbeddingVector],
        metric: Metric = Metric.COSINE,
    ) -> None:
        if len(examples) != len(vectors):
            raise RetrievalError("examples and vectors must be parallel lists")
        ids = [e.example_id for e in examples]
        if len(set(ids)) != len(ids):
            raise RetrievalError("example ids must be unique")
        dims = {v.dimension for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatchError(f"mixed vector dimensions in database: {sorted(dims)}")
        self.examples: tuple[LabeledExample, ...] = tuple(examples)
        self.vectors: tuple[EmbeddingVector, ...] = tuple(vectors)
        self.metric = metric
        self._matrix = (
            np.stack([v.as_array() for v in vectors]) if vectors else np.zeros((0, 0))
        )
        self._norms = np.linalg.norm(self._matrix, axis=1) if vectors else np.zeros(0)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def dimension(self) -> int:
        if not self.examples:
            raise RetrievalError("empty database has no dimension")
        return self.vectors[0].dimension

    def with_appended(
        self, examples: list[LabeledExample], vectors: list[EmbeddingVector]
    ) -> "RetrievalDatabase":
        """Copy-on-append: existing readers keep their snapshot."""
        return RetrievalDatabase(
            list(self.examples) + examples, list(self.vectors) + vectors, self.metric
        )

    @classmethod
    def from_examples(
        cls,
        examples: list[LabeledExample],
        embedder: Embedder,
        metric: Metric = Metric.COSINE,
    ) -> "RetrievalDatabase":
        vectors = [
            embedder.embed(requirement_pair_text(e.stakeholder, e.system)) for e in examples
        ]
        return cls(examples, vectors, metric)


def retrieve_examples(
    db: RetrievalDatabase, query: EmbeddingVector, config: RetrievalConfig
) -> RetrievalResult:
    """Return the top-k valid and top-k invalid examples for a query vector.

    Ranking is descending cosine similarity or ascending Euclidean distance,
    with ties broken by ascending example id. Excluded ids and (when set)
    examples sharing the excluded stakeholder variation are never returned.
    Pools shorter than k come back whole, flagged as a shortfall.
    """
    if len(db) == 0:
        raise RetrievalError("cannot retrieve from an empty database")
    if query.dimension != db.dimension:
        raise DimensionMismatchError(
            f"query dimension {query.dimension} does not match database {db.dimension}"
        )

    q = query.as_array()
    if config.metric is Metric.COSINE:
        if query.is_degenerate:
            raise DegenerateVectorError("cosine retrieval needs a non-zero query vector")
        norms = np.where(db._norms == 0, 1.0, db._norms)
        scores = (db._matrix @ q) / (norms * np.linalg.norm(q))
        # A zero database vector has no direction; rank it below everything.
        scores = np.where(db._norms == 0, -np.inf, scores)
        better_first = True
    else:
        scores = np.linalg.norm(db._matrix - q, axis=1)
        better_first = False

    def pool(label: LinkLabel) -> tuple[tuple[RetrievedExample, ...], bool]:
        candidates = []
        for idx, example in enumerate(db.examples):
            if example.label is not label:
                continue
            if example.example_id in config.exclusion:
                continue
            if (
                config.variation_exclusion is not None
                and example.stakeholder.variation is config.variation_exclusion
            ):
                continue
            candidates.append((float(scores[idx]), example))
        if better_first:
            candidates.sort(key=lambda item: (-item[0], item[1].example_id))
        else:
            candidates.sort(key=lambda item: (item[0], item[1].example_id))
        top = tuple(RetrievedExample(example, score) for score, example in candidates[: config.k])
        return top, len(candidates) < config.k

    valid, valid_short = pool(LinkLabel.VALID)
    invalid, invalid_short = pool(LinkLabel.INVALID)
    return RetrievalResult(valid, invalid, valid_short, invalid_short)


def make_example_id(stake_id: str, sys_id: str) -> str:
    return f"{stake_id}::{sys_id}"
