"""Dense vector embeddings behind a pluggable provider contract.

Two providers: a deterministic built-in hashing embedder (feature hashing
into 2^15 buckets followed by a seeded Gaussian random projection) and an
HTTP client for an external embedding service.  A persistent binary cache
makes repeated runs reproducible and cheap.

Vectors are numpy float32 rows; providers expose `name`, `dim` and
`embed_batch(texts) -> (len(texts), dim) array`.
"""

from __future__ import annotations

import hashlib
import os
import re
import struct
import threading
import time
from typing import Protocol, Sequence

import numpy as np
import requests

# lowercase alphabetic runs, single letters included (unlike the c-TF-IDF
# token stream, which drops them)
_TOKEN_RE = re.compile(r"[a-z]+")

_N_BUCKETS = 1 << 15
_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193
_U64_MASK = (1 << 64) - 1


class EmbedError(Exception):
    pass


class EmbedTransportError(EmbedError):
    pass


class EmbedStatusError(EmbedError):
    pass


class EmbedDimMismatchError(EmbedError):
    pass


class EmbedCountMismatchError(EmbedError):
    pass


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def fnv1a_bucket(token: str) -> int:
    """FNV-1a 32-bit hash of the UTF-8 token, folded into 2^15 buckets."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFF
    return h % _N_BUCKETS


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors; 0.0 if either is the zero vector."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class BuiltinEmbedder:
    """Deterministic hashing embedder.

    Token counts are hashed into 2^15 buckets, weighted by log(1+count),
    and projected to `dim` dimensions through a Gaussian matrix whose rows
    are generated on demand from (seed, bucket) so the full matrix is
    never materialized.  Output is L2-normalized float32; text with no
    tokens maps to the zero vector.
    """

    def __init__(self, dim: int = 256, seed: int = 42):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed & _U64_MASK
        self.name = f"builtin-d{dim}-s{self.seed}"
        self._rows: dict[int, np.ndarray] = {}

    def _row(self, bucket: int) -> np.ndarray:
        row = self._rows.get(bucket)
        if row is None:
            rng = np.random.default_rng((self.seed, bucket))
            row = rng.standard_normal(self.dim)
            self._rows[bucket] = row
        return row

    def embed_one(self, text: str) -> np.ndarray:
        counts: dict[int, int] = {}
        for token in _TOKEN_RE.findall(text.lower()):
            bucket = fnv1a_bucket(token)
            counts[bucket] = counts.get(bucket, 0) + 1
        if not counts:
            return np.zeros(self.dim, dtype=np.float32)
        vec = np.zeros(self.dim, dtype=np.float64)
        for bucket in sorted(counts):
            vec += np.log1p(counts[bucket]) * self._row(bucket)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float32)
        return (vec / norm).astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.embed_one(t) for t in texts])


class HttpEmbedder:
    """Client for the POST {endpoint}/v1/embed wire protocol."""

    def __init__(
        self,
        endpoint: str,
        name: str | None = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.name = name or f"http:{self.endpoint}"
        self.dim = 0  # advertised by the first response
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        url = f"{self.endpoint}/v1/embed"
        response = None
        last_exc: Exception | None = None
        delay = self.backoff
        for _ in range(self.retries):
            try:
                response = requests.post(url, json={"texts": list(texts)}, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                response = None
            else:
                if response.status_code < 500:
                    break
                last_exc = EmbedStatusError(
                    f"{self.endpoint}: server returned {response.status_code}"
                )
                response = None
            time.sleep(delay)
            delay *= 2
        if response is None:
            raise EmbedTransportError(
                f"{self.endpoint}: request failed after {self.retries} attempts: {last_exc}"
            ) from last_exc
        if response.status_code != 200:
            raise EmbedStatusError(
                f"{self.endpoint}: status {response.status_code}: {response.text[:200]}"
            )
        try:
            payload = response.json()
            dim = int(payload["dim"])
            vectors = payload["vectors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbedStatusError(f"{self.endpoint}: malformed response: {exc}") from None
        if len(vectors) != len(texts):
            raise EmbedCountMismatchError(
                f"{self.endpoint}: sent {len(texts)} texts, got {len(vectors)} vectors"
            )
        if any(len(v) != dim for v in vectors):
            raise EmbedDimMismatchError(
                f"{self.endpoint}: response vectors do not all have advertised dim {dim}"
            )
        if self.dim == 0:
            self.dim = dim
        elif dim != self.dim:
            raise EmbedDimMismatchError(
                f"{self.endpoint}: advertised dim changed from {self.dim} to {dim}"
            )
        out = np.asarray(vectors, dtype=np.float32).reshape(len(texts), dim)
        if not np.all(np.isfinite(out)):
            raise EmbedDimMismatchError(f"{self.endpoint}: response contains non-finite values")
        return out


class EmbeddingCache:
    """Append-only binary cache keyed by (provider name, sha256 of text).

    Record layout, little-endian: u32 name length, name UTF-8 bytes,
    32-byte content hash, u32 dim, dim float32 values.  Hits return the
    stored bytes unchanged; writes are serialized, reads are lock-free.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._entries: dict[tuple[str, bytes], np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if os.path.exists(self.path):
            self._load()
        self._file = open(self.path, "ab")

    def _load(self) -> None:
        with open(self.path, "rb") as f:
            data = f.read()
        pos = 0
        total = len(data)
        while pos < total:
            if pos + 4 > total:
                raise EmbedError(f"{self.path}: truncated cache record at byte {pos}")
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            end = pos + name_len + 32 + 4
            if end > total:
                raise EmbedError(f"{self.path}: truncated cache record at byte {pos}")
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            digest = data[pos : pos + 32]
            pos += 32
            (dim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            vec_end = pos + 4 * dim
            if vec_end > total:
                raise EmbedError(f"{self.path}: truncated cache record at byte {pos}")
            vec = np.frombuffer(data[pos:vec_end], dtype="<f4").copy()
            pos = vec_end
            self._entries[(name, digest)] = vec

    @staticmethod
    def _key(provider_name: str, text: str) -> tuple[str, bytes]:
        return provider_name, hashlib.sha256(text.encode("utf-8")).digest()

    def get(self, provider_name: str, text: str) -> np.ndarray | None:
        vec = self._entries.get(self._key(provider_name, text))
        if vec is None:
            self.misses += 1
            return None
        self.hits += 1
        return vec.copy()

    def put(self, provider_name: str, text: str, vector: np.ndarray) -> None:
        key = self._key(provider_name, text)
        vec = np.ascontiguousarray(vector, dtype="<f4")
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = vec.copy()
            name_bytes = provider_name.encode("utf-8")
            self._file.write(struct.pack("<I", len(name_bytes)))
            self._file.write(name_bytes)
            self._file.write(key[1])
            self._file.write(struct.pack("<I", vec.shape[0]))
            self._file.write(vec.tobytes())
            self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def embed_texts(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """Embed texts through the cache, batching provider calls.

    Results are identical with a cold or warm cache: providers emit
    float32 and the cache stores those bytes verbatim.
    """
    if not texts:
        return np.zeros((0, getattr(provider, "dim", 0) or 0), dtype=np.float32)
    results: list[np.ndarray | None] = [None] * len(texts)
    missing: list[int] = []
    if cache is not None:
        for i, text in enumerate(texts):
            hit = cache.get(provider.name, text)
            if hit is not None:
                results[i] = hit
            else:
                missing.append(i)
    else:
        missing = list(range(len(texts)))
    for start in range(0, len(missing), batch_size):
        batch_idx = missing[start : start + batch_size]
        batch = provider.embed_batch([texts[i] for i in batch_idx])
        for row, i in enumerate(batch_idx):
            vec = batch[row]
            results[i] = vec
            if cache is not None:
                cache.put(provider.name, texts[i], vec)
    return np.stack([r for r in results])  # type: ignore[arg-type]
