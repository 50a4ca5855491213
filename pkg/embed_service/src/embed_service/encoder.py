"""Sentence encoders behind one small interface.

``SentenceEncoder`` wraps a pinned sentence-transformers model, loaded
lazily so the service can start (and report health) before the first
request pays the load cost. ``HashEncoder`` is a deterministic stand-in
with the same shape/norm contract for offline environments and tests.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Sequence

import numpy as np

DEFAULT_MODEL_ID = "sentence-transformers/all-mpnet-base-v2"
DEFAULT_DIM = 768
BATCH_SIZE = 32


class EncoderUnavailable(Exception):
    """The model could not be loaded; the service should answer 503."""


class HashEncoder:
    """Deterministic hash-to-unit-vector encoder with the service contract."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.model_id = f"hash-stub-{dim}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            digest = hashlib.sha256(text.strip().lower().encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim).astype(np.float32)
            rows.append(vec / np.linalg.norm(vec))
        return np.stack(rows) if rows else np.zeros((0, self.dim), dtype=np.float32)


class SentenceEncoder:
    """Lazy wrapper around a pinned sentence-transformers model.

    Encoding is serialized with a lock: the underlying model is not
    guaranteed thread-safe, and the service keeps no other mutable state.
    """

    def __init__(self, model_id: str = DEFAULT_MODEL_ID):
        self.model_id = model_id
        self.dim = DEFAULT_DIM
        self._model = None
        self._error: str | None = None
        self._lock = threading.Lock()

    @property
    def loaded(self) -> bool:
        return self._model is not None

    def _load(self):
        if self._model is None:
            if self._error is not None:
                raise EncoderUnavailable(self._error)
            try:
                from sentence_transformers import SentenceTransformer
                self._model = SentenceTransformer(self.model_id)
                self.dim = self._model.get_sentence_embedding_dimension()
            except Exception as exc:  # model download/load failure of any kind
                self._error = f"model {self.model_id} not loaded: {exc}"
                raise EncoderUnavailable(self._error) from exc
        return self._model

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        with self._lock:
            model = self._load()
            vectors = model.encode(list(texts), batch_size=BATCH_SIZE,
                                   normalize_embeddings=True,
                                   convert_to_numpy=True)
        return np.asarray(vectors, dtype=np.float32).reshape(len(texts), self.dim)
