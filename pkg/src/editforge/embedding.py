"""Embedding providers: a deterministic hashed bag-of-words stub for
offline use and tests, and an HTTP client for a real embedding service.

All providers return unit-norm float64 row vectors of a fixed dimension.
"""

from __future__ import annotations

import hashlib
import time
from typing import Protocol, Sequence

import numpy as np

DEFAULT_DIM = 64


class EmbeddingError(Exception):
    pass


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dim) array of unit-norm vectors."""
        ...


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


class StubEmbedder:
    """Hashed bag-of-words embedding: each casefolded token is hashed into
    one of `dim` buckets, counts accumulated, then L2-normalized. Fully
    deterministic across runs and platforms."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.casefold().split()
            if not tokens:
                out[i, 0] = 1.0  # fixed unit vector for empty text
                continue
            for token in tokens:
                out[i, self._bucket(token)] += 1.0
        return _normalize_rows(out)


class HttpEmbedder:
    """Client for an embedding endpoint: POST {"texts": [...]} returning
    {"embeddings": [[...], ...]} with one fixed-dimension vector per text."""

    def __init__(
        self,
        endpoint: str,
        dim: int = DEFAULT_DIM,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ) -> None:
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import requests

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = requests.post(
                    self.endpoint, json={"texts": list(texts)}, timeout=self.timeout
                )
                response.raise_for_status()
                vectors = np.asarray(response.json()["embeddings"], dtype=np.float64)
                if vectors.shape != (len(texts), self.dim):
                    raise EmbeddingError(
                        f"embedding shape {vectors.shape} != ({len(texts)}, {self.dim})"
                    )
                return _normalize_rows(vectors)
            except EmbeddingError:
                raise
            except Exception as exc:  # transport errors: retry with backoff
                last_error = exc
                time.sleep(self.backoff * (2**attempt))
        raise EmbeddingError(f"embedding request failed after retries: {last_error}")
