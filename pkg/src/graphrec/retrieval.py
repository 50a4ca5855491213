"""Exact flat-vector retrieval for sequences (Euclidean) and items (inner product).

Indexes are immutable after construction and queried read-only. Search is a
dense scan over float32 rows; corpora at the scale this engine targets
(tens of thousands of vectors) make exactness cheap, and ties are broken by
ascending id so orderings are total and repeatable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

VECTOR_FILE_MAGIC = b"GRVEC"
VECTOR_FILE_VERSION = 1


class RetrievalError(Exception):
    """Empty index, dimension mismatch, or malformed vector file."""


@dataclass
class EmbeddingMatrix:
    """Dense float32 vectors with a parallel list of unique string ids."""

    ids: list[str]
    vectors: np.ndarray  # shape (count, dim), float32

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise RetrievalError("vectors must be a 2-D array")
        if len(self.ids) != self.vectors.shape[0]:
            raise RetrievalError("ids and vectors disagree on count")
        if len(set(self.ids)) != len(self.ids):
            raise RetrievalError("ids must be unique")
        if not np.all(np.isfinite(self.vectors)):
            raise RetrievalError("vectors must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def save_vectors(matrix: EmbeddingMatrix, path: Path) -> None:
    """Write the binary vector file: header, ids, little-endian float32 rows."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(VECTOR_FILE_MAGIC)
        fh.write(struct.pack("<III", VECTOR_FILE_VERSION, matrix.dim, matrix.count))
        for item_id in matrix.ids:
            raw = item_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(matrix.vectors, dtype="<f4").tobytes())


def load_vectors(path: Path) -> EmbeddingMatrix:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(VECTOR_FILE_MAGIC))
        if magic != VECTOR_FILE_MAGIC:
            raise RetrievalError(f"not a vector file: {path}")
        version, dim, count = struct.unpack("<III", fh.read(12))
        if version != VECTOR_FILE_VERSION:
            raise RetrievalError(f"unsupported vector file version {version}")
        ids = []
        for _ in range(count):
            (length,) = struct.unpack("<I", fh.read(4))
            ids.append(fh.read(length).decode("utf-8"))
        data = fh.read(4 * dim * count)
        if len(data) != 4 * dim * count:
            raise RetrievalError(f"truncated vector file: {path}")
        vectors = np.frombuffer(data, dtype="<f4").reshape(count, dim)
    return EmbeddingMatrix(ids=ids, vectors=vectors.copy())


def embed_sequence(item_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Mean-pool item vectors into one sequence vector."""
    if len(item_vectors) == 0:
        raise RetrievalError("cannot pool an empty sequence")
    stacked = np.asarray(item_vectors, dtype=np.float32)
    if stacked.ndim != 2:
        raise RetrievalError("item vectors must share one dimensionality")
    return stacked.mean(axis=0)


def _check_query(matrix: EmbeddingMatrix, query: np.ndarray) -> np.ndarray:
    if matrix.count == 0:
        raise RetrievalError("index is empty")
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != matrix.dim:
        raise RetrievalError(
            f"query dim {query.shape[0]} does not match index dim {matrix.dim}")
    return query


class SequenceIndex:
    """One mean-pooled vector per user sequence; nearest by Euclidean distance."""

    def __init__(self, matrix: EmbeddingMatrix):
        self.matrix = matrix

    def retrieve_similar_sequences(self, query: np.ndarray, k: int,
                                   exclude_user: str | None = None) -> list[tuple[str, float]]:
        """Top-k (user id, distance) ascending by distance, ties by ascending id."""
        if k < 1:
            raise RetrievalError("k must be >= 1")
        query = _check_query(self.matrix, query)
        diffs = self.matrix.vectors - query
        dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs, dtype=np.float64))
        order = sorted(
            (i for i in range(self.matrix.count)
             if self.matrix.ids[i] != exclude_user),
            key=lambda i: (dists[i], self.matrix.ids[i]))
        return [(self.matrix.ids[i], float(dists[i])) for i in order[:k]]


class ItemIndex:
    """One vector per catalog item; most similar by inner product."""

    def __init__(self, matrix: EmbeddingMatrix):
        self.matrix = matrix

    def retrieve_items(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Top-k (item id, score) descending by inner product, ties by ascending id."""
        if k < 1:
            raise RetrievalError("k must be >= 1")
        query = _check_query(self.matrix, query)
        scores = self.matrix.vectors.astype(np.float64) @ query.astype(np.float64)
        order = sorted(range(self.matrix.count),
                       key=lambda i: (-scores[i], self.matrix.ids[i]))
        return [(self.matrix.ids[i], float(scores[i])) for i in order[:k]]


def ground_titles(index: ItemIndex, embed: Callable[[str], np.ndarray],
                  titles: Sequence[str], k: int = 10) -> list[str]:
    """Map generated titles to catalog item ids.

    Each title contributes its top-k catalog block; blocks are concatenated
    in title order and deduplicated keeping each item's earliest position.
    """
    ranked: list[str] = []
    seen: set[str] = set()
    for title in titles:
        for item_id, _ in index.retrieve_items(embed(title), k):
            if item_id not in seen:
                seen.add(item_id)
                ranked.append(item_id)
    return ranked
