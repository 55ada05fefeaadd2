"""Publication vectors and cosine similarity.

Two providers back the vectors:

* ``word``: a word2vec-style table of token vectors; a publication is the
  mean of the vectors of its in-vocabulary title/abstract tokens.
* ``publication``: precomputed vectors keyed by pub_id (for example sentence
  embeddings produced offline).

Dot products and norms are accumulated one coordinate at a time, in
coordinate order, so a value never depends on how many vectors are
processed together.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import Publication

logger = logging.getLogger(__name__)

WORD = "word"
PUBLICATION = "publication"
KINDS = (WORD, PUBLICATION)
PROVIDER_NAMES = {WORD: "word-average", PUBLICATION: "precomputed"}

_TOKEN = re.compile(r"[^\W_]+")


class VectorFormatError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class UndefinedSimilarity(ValueError):
    pass


def rowwise_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dot product of matching rows of two ``(n, D)`` arrays."""
    out = a[:, 0] * b[:, 0]
    for d in range(1, a.shape[1]):
        out += a[:, d] * b[:, d]
    return out


def row_norms(m: np.ndarray) -> np.ndarray:
    if m.shape[1] == 0:
        return np.zeros(m.shape[0])
    return np.sqrt(rowwise_dot(m, m))


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    @property
    def norm(self) -> float:
        return float(row_norms(self.values[None, :])[0])

    @property
    def is_degenerate(self) -> bool:
        return self.norm == 0.0

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __len__(self):
        return self.dimension


class VectorStore:
    """Immutable key -> vector table of one fixed dimension."""

    def __init__(self, kind: str, dimension: int, keys: dict[str, int], matrix: np.ndarray, duplicates: int = 0):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        if matrix.ndim != 2 or matrix.shape[1] != dimension:
            raise ValueError("matrix shape does not match dimension")
        self.kind = kind
        self.dimension = dimension
        self.keys = keys
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self.duplicates = duplicates
        self.norms = row_norms(matrix)

    @classmethod
    def from_mapping(cls, kind: str, vectors: dict[str, Iterable[float]]) -> "VectorStore":
        keys = {k: i for i, k in enumerate(vectors)}
        rows = [list(map(float, v)) for v in vectors.values()]
        if not rows:
            raise ValueError("empty vector mapping")
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ValueError("vectors of different lengths")
        return cls(kind, dims.pop(), keys, np.array(rows, dtype=np.float64))

    @property
    def provider(self) -> str:
        return PROVIDER_NAMES[self.kind]

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self.keys

    def get(self, key: str) -> EmbeddingVector | None:
        row = self.keys.get(key)
        return None if row is None else EmbeddingVector(self.matrix[row])

    def scaled(self, factor: float) -> "VectorStore":
        return VectorStore(self.kind, self.dimension, self.keys, self.matrix * factor)


def load_vectors(path, kind: str = WORD) -> VectorStore:
    """Read a word2vec text file (``count dim`` header, then ``key v1 .. vD``).

    Duplicate keys keep the last row; each duplicate is counted in
    ``store.duplicates``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise VectorFormatError(1, "header must be 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise VectorFormatError(1, "header must be two integers") from None
        if count < 0 or dim <= 0:
            raise VectorFormatError(1, "count must be >= 0 and dim > 0")
        matrix = np.empty((count, dim), dtype=np.float64)
        keys: dict[str, int] = {}
        duplicates = 0
        n = 0
        lineno = 1
        for lineno, line in enumerate(f, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise VectorFormatError(lineno, f"expected key and {dim} values, got {len(parts) - 1} values")
            if n >= count:
                raise VectorFormatError(lineno, f"more rows than the {count} declared in the header")
            try:
                matrix[n] = [float(x) for x in parts[1:]]
            except ValueError as e:
                raise VectorFormatError(lineno, f"non-numeric value ({e})") from None
            if not np.isfinite(matrix[n]).all():
                raise VectorFormatError(lineno, "non-finite value")
            key = parts[0]
            if key in keys:
                duplicates += 1
            keys[key] = n
            n += 1
        if n != count:
            raise VectorFormatError(lineno, f"header declares {count} rows, found {n}")
    if duplicates:
        logger.warning("%s: %d duplicate keys (last occurrence kept)", path, duplicates)
        live = sorted(keys.values())
        remap = {old: new for new, old in enumerate(live)}
        matrix = matrix[live]
        keys = {k: remap[r] for k, r in keys.items()}
    return VectorStore(kind, dim, keys, matrix, duplicates)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _word_rows(pub: Publication, store: VectorStore) -> list[int]:
    keys = store.keys
    return [keys[t] for t in tokenize(pub.title + " " + pub.abstract) if t in keys]


def _average(store: VectorStore, rows: list[int]) -> np.ndarray:
    # Summing along axis 0 adds rows one after another in token order.
    return store.matrix[rows].sum(axis=0) / len(rows)


def embed_publication(pub: Publication, store: VectorStore) -> EmbeddingVector:
    if store.kind == PUBLICATION:
        v = store.get(pub.pub_id)
        return v if v is not None else EmbeddingVector(np.zeros(store.dimension))
    rows = _word_rows(pub, store)
    if not rows:
        return EmbeddingVector(np.zeros(store.dimension))
    return EmbeddingVector(_average(store, rows))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    na, nb = a.norm, b.norm
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarity("cosine of a degenerate (zero) vector")
    dot = float(rowwise_dot(a.values[None, :], b.values[None, :])[0])
    return min(1.0, max(-1.0, dot / (na * nb)))


class CorpusVectors:
    """Vectors for every publication of a citation graph, addressed by graph
    position. ``row[i] == -1`` marks a publication without a usable vector."""

    def __init__(self, matrix: np.ndarray, row: np.ndarray, provider: str):
        self.matrix = matrix
        self.norms = row_norms(matrix)
        row = row.copy()
        ok = row >= 0
        row[ok & (self.norms[np.where(ok, row, 0)] == 0.0)] = -1
        self.row = row
        self.provider = provider

    @property
    def degenerate(self) -> np.ndarray:
        return self.row < 0

    def cosines(self, src: np.ndarray, tgt: np.ndarray, block: int = 1 << 18) -> np.ndarray:
        """Cosine similarity for position pairs; both sides must be non-degenerate."""
        out = np.empty(len(src), dtype=np.float64)
        m, norms = self.matrix, self.norms
        for lo in range(0, len(src), block):
            a = self.row[src[lo:lo + block]]
            b = self.row[tgt[lo:lo + block]]
            dot = rowwise_dot(m[a], m[b])
            sim = dot / (norms[a] * norms[b])
            np.clip(sim, -1.0, 1.0, out=out[lo:lo + block])
        return out


def embed_corpus(graph, store: VectorStore) -> CorpusVectors:
    """Vectors aligned to ``graph`` positions."""
    n = len(graph)
    if store.kind == PUBLICATION:
        row = np.fromiter((store.keys.get(pid, -1) for pid in graph.ids), dtype=np.int64, count=n)
        return CorpusVectors(store.matrix, row, store.provider)
    matrix = np.zeros((n, store.dimension), dtype=np.float64)
    row = np.full(n, -1, dtype=np.int64)
    for i, pid in enumerate(graph.ids):
        rows = _word_rows(graph.publications[pid], store)
        if rows:
            matrix[i] = _average(store, rows)
            row[i] = i
    return CorpusVectors(matrix, row, store.provider)
