"""Embedding backends.

The model identifier selects the backend: identifiers of the form
``hash:dim=256,seed=42`` run a deterministic hashing embedder (feature
hashing into 2^15 buckets followed by a seeded Gaussian random
projection) that needs no model files; anything else is treated as a
sentence-transformers checkpoint name.
"""

from __future__ import annotations

import re
from typing import Protocol, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[a-z]+")
_N_BUCKETS = 1 << 15
_HASH_SPEC_RE = re.compile(r"^hash:dim=(\d+),seed=(\d+)$")


class EmbeddingBackend(Protocol):
    model_name: str
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingBackend:
    """Deterministic, dependency-free embedder.

    Offers the wire contract without downloading a checkpoint; texts with
    overlapping vocabulary land near each other, which is enough for
    protocol tests and offline deployments.
    """

    def __init__(self, dim: int = 256, seed: int = 42):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.model_name = f"hash:dim={dim},seed={seed}"
        self._rows: dict[int, np.ndarray] = {}

    @staticmethod
    def _bucket(token: str) -> int:
        h = 0x811C9DC5
        for byte in token.encode("utf-8"):
            h = ((h ^ byte) * 0x01000193) & 0xFFFFFFFF
        return h % _N_BUCKETS

    def _row(self, bucket: int) -> np.ndarray:
        row = self._rows.get(bucket)
        if row is None:
            row = np.random.default_rng((self.seed, bucket)).standard_normal(self.dim)
            self._rows[bucket] = row
        return row

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            counts: dict[int, int] = {}
            for token in _TOKEN_RE.findall(text.lower()):
                bucket = self._bucket(token)
                counts[bucket] = counts.get(bucket, 0) + 1
            if not counts:
                continue
            vec = np.zeros(self.dim, dtype=np.float64)
            for bucket in sorted(counts):
                vec += np.log1p(counts[bucket]) * self._row(bucket)
            norm = np.linalg.norm(vec)
            if norm > 0:
                out[i] = (vec / norm).astype(np.float32)
        return out


class SentenceTransformerBackend:
    """Pretrained sentence-embedding checkpoint via sentence-transformers."""

    def __init__(self, model_name: str):
        from sentence_transformers import SentenceTransformer

        self.model_name = model_name
        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        vectors = self._model.encode(
            list(texts), convert_to_numpy=True, normalize_embeddings=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float32)


def load_backend(model_name: str) -> EmbeddingBackend:
    match = _HASH_SPEC_RE.match(model_name)
    if match:
        return HashingBackend(dim=int(match.group(1)), seed=int(match.group(2)))
    return SentenceTransformerBackend(model_name)
