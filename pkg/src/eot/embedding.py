"""Embedding providers used by the novelty metric and condensation step.

The default provider is fully offline and deterministic: L2-normalized
hashed character-trigram term frequencies. A remote provider mirrors the
production setup where a sentence-encoder service sits behind HTTP.
"""

from __future__ import annotations

import hashlib
import os
import time
from typing import Callable, Protocol, Sequence

import numpy as np

from .exceptions import EmbeddingError

EMBED_API_KEY_ENV = "EOT_API_KEY"


class EmbeddingProvider(Protocol):
    """Anything that can map answer text to fixed-dimension vectors."""

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HashedTrigramEmbedder:
    """Deterministic, dependency-free text embedder.

    Character trigrams are hashed into ``dim`` buckets with a seeded
    SHA-256 and term-frequency counted, then the vector is L2-normalized.
    Strings shorter than three characters hash as a single feature. The
    empty string maps to the reserved unit vector e1 so no caller ever
    sees a zero-norm embedding.
    """

    def __init__(self, dim: int = 512, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def _bucket(self, feature: str) -> int:
        digest = hashlib.sha256(f"{self.seed}|{feature}".encode()).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        if not text:
            vec[0] = 1.0
            return vec
        if len(text) < 3:
            grams: list[str] = [text]
        else:
            grams = [text[i : i + 3] for i in range(len(text) - 2)]
        for gram in grams:
            vec[self._bucket(gram)] += 1.0
        return vec / np.linalg.norm(vec)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


def _requests_post(url: str, payload: dict, headers: dict, timeout: float):
    import requests

    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    return resp.status_code, resp.json()


class RemoteEmbedder:
    """HTTP embedding provider.

    POSTs ``{"input": [texts]}`` and expects ``{"embeddings": [[floats]]}``
    back. The auth token comes from the constructor or the EOT_API_KEY
    environment variable. Transient failures are retried before giving up
    with an ``embedding unavailable`` error.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        transport: Callable | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(EMBED_API_KEY_ENV)
        self.timeout = timeout
        self.retries = retries
        self._transport = transport or _requests_post
        self._sleep = sleeper

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                status, data = self._transport(
                    self.endpoint, {"input": list(texts)}, headers, self.timeout
                )
                if status != 200:
                    raise EmbeddingError(f"embedding unavailable: HTTP {status}")
                return _validate_vectors(data["embeddings"], expected=len(texts))
            except EmbeddingError:
                raise
            except Exception as exc:  # transport or payload shape failure
                last = exc
                if attempt < self.retries:
                    self._sleep(0.5 * 2 ** (attempt - 1))
        raise EmbeddingError(f"embedding unavailable: {last}") from last


def _validate_vectors(raw: Sequence[Sequence[float]], expected: int) -> list[np.ndarray]:
    if len(raw) != expected:
        raise EmbeddingError(
            f"embedding unavailable: got {len(raw)} vectors for {expected} inputs"
        )
    vectors = [np.asarray(v, dtype=float) for v in raw]
    dims = {v.shape for v in vectors}
    if len(dims) > 1 or any(v.ndim != 1 or v.size == 0 for v in vectors):
        raise EmbeddingError("embedding unavailable: inconsistent vector shapes")
    if any(not np.all(np.isfinite(v)) for v in vectors):
        raise EmbeddingError("embedding unavailable: non-finite values")
    return vectors
