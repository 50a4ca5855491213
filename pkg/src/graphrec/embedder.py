"""Embedding sources: deterministic stub, HTTP encoding service, vector files.

All sources expose the same callable surface: ``embed_one(text)`` /
``embed_many(texts)`` returning float32 vectors. The stub hashes normalized
text to a seeded random unit vector, giving the whole pipeline a cheap,
fully reproducible embedding space for tests and offline runs.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np
import requests

from .prompts import normalize_title


class EmbedderError(Exception):
    """Embedding source unreachable or returned an inconsistent shape."""


class StubEmbedder:
    """Hash-to-vector embedder: deterministic, unit-norm, any dimension."""

    def __init__(self, dim: int = 16):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed_one(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(normalize_title(text).lower().encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim).astype(np.float32)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in texts]) if texts else \
            np.zeros((0, self.dim), dtype=np.float32)


class ServiceEmbedder:
    """Client for the HTTP encoding service's POST /embed endpoint."""

    def __init__(self, base_url: str, batch_size: int = 64, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.timeout = timeout
        self._session = requests.Session()
        self.dim: int | None = None

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            try:
                resp = self._session.post(f"{self.base_url}/embed",
                                          json={"texts": batch}, timeout=self.timeout)
            except requests.RequestException as exc:
                raise EmbedderError(f"embed service unreachable: {exc}") from exc
            if resp.status_code != 200:
                raise EmbedderError(
                    f"embed service returned HTTP {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            if len(body["vectors"]) != len(batch):
                raise EmbedderError("embed service returned wrong row count")
            if self.dim is None:
                self.dim = int(body["dim"])
            elif self.dim != int(body["dim"]):
                raise EmbedderError("embed service changed dimensionality mid-run")
            rows.extend(body["vectors"])
        dim = self.dim or 0
        return np.asarray(rows, dtype=np.float32).reshape(len(rows), dim)

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]
