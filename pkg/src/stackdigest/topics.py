"""Topic discovery: dimensionality reduction, clustering, term weighting.

Documents are clustered in a PCA-reduced embedding space, then each
cluster's characteristic terms are ranked by class-based TF-IDF: the raw
term count within the cluster's concatenated token streams, weighted by
log(1 + A / f_t) where A is the average token count per cluster and f_t
the term's total count across clusters.
"""

from __future__ import annotations

import json
import os
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .embed import cosine_similarity

_U64_MASK = (1 << 64) - 1

KMEANS = "kmeans"
DBSCAN = "dbscan"
NOISE = -1


@dataclass
class ReductionModel:
    mean: np.ndarray        # (d,)
    components: np.ndarray  # (target_dim, d), orthonormal rows
    target_dim: int

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        x = np.asarray(vectors, dtype=np.float64)
        return (x - self.mean) @ self.components.T

    def inverse_transform(self, reduced: np.ndarray) -> np.ndarray:
        return np.asarray(reduced, dtype=np.float64) @ self.components + self.mean


@dataclass
class TopicAssignment:
    labels: list[int]       # topic ids 1..T, NOISE for outliers
    seed: int
    algorithm: str
    centroids: np.ndarray | None = None  # row i <-> topic id i+1, reduced space
    objective_history: list[float] = field(default_factory=list)

    @property
    def n_topics(self) -> int:
        return max((l for l in self.labels if l != NOISE), default=0)

    def members(self, topic_id: int) -> list[int]:
        return [i for i, l in enumerate(self.labels) if l == topic_id]


@dataclass
class CtfidfWeights:
    classes: list[int]
    term_counts: dict[int, Counter]      # tf_{t,c}: per class, term -> raw count
    total_counts: Counter                # f_t: term -> count across all classes
    avg_tokens_per_class: float          # A
    weights: dict[int, dict[str, float]]  # W_{t,c}


@dataclass
class Topic:
    id: int
    count: int
    top_terms: list[tuple[str, float]]
    name: str


def default_k(n_docs: int) -> int:
    return max(2, int(np.sqrt(n_docs / 2)))


def fit_reduction(vectors: np.ndarray, target_dim: int) -> ReductionModel:
    """Exact PCA via eigendecomposition of the covariance matrix.

    Deterministic: ascending eigenvalues from eigh are reversed, and each
    component is oriented so its largest-magnitude entry is positive.  A
    target beyond the data rank is clamped with a warning.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n, d = x.shape
    if target_dim < 2:
        raise ValueError(f"target_dim must be >= 2, got {target_dim}")
    if n < target_dim:
        raise ValueError(f"need at least target_dim={target_dim} vectors, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-10 + 1e-300
    rank = int(np.sum(eigvals > tol))
    if rank == 0:
        rank = 1
    if target_dim > rank:
        warnings.warn(
            f"target_dim {target_dim} exceeds data rank {rank}; reducing to {rank}",
            stacklevel=2,
        )
        target_dim = rank
    components = eigvecs[:, :target_dim].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return ReductionModel(mean=mean, components=components, target_dim=target_dim)


def _relabel_by_size(raw_labels: np.ndarray) -> tuple[np.ndarray, dict[int, int]]:
    """Map provisional cluster ids to 1..T by descending size (ties: id asc)."""
    sizes = Counter(int(l) for l in raw_labels if l != NOISE)
    ordered = sorted(sizes, key=lambda c: (-sizes[c], c))
    mapping = {old: new for new, old in enumerate(ordered, start=1)}
    out = np.array([mapping[int(l)] if l != NOISE else NOISE for l in raw_labels])
    return out, mapping


def kmeans(
    vectors: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    init_centers: np.ndarray | None = None,
) -> TopicAssignment:
    """Seeded k-means++ with Lloyd iterations.

    Empty clusters are re-seeded with the point farthest from its current
    centroid.  The within-cluster sum of squares is asserted non-increasing
    every iteration.  init_centers overrides the k-means++ initialization
    (used to study Lloyd behaviour in isolation).
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed & _U64_MASK)

    if init_centers is not None:
        centers = np.asarray(init_centers, dtype=np.float64).copy()
        if centers.shape != (k, x.shape[1]):
            raise ValueError(f"init_centers must have shape {(k, x.shape[1])}")
    else:
        centers = np.empty((k, x.shape[1]))
        centers[0] = x[rng.integers(n)]
        d2 = np.sum((x - centers[0]) ** 2, axis=1)
        for j in range(1, k):
            total = d2.sum()
            if total > 0:
                idx = rng.choice(n, p=d2 / total)
            else:
                idx = rng.integers(n)
            centers[j] = x[idx]
            d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))

    history: list[float] = []
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dist2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist2, axis=1)
        point_d2 = dist2[np.arange(n), labels]
        obj = float(point_d2.sum())
        assert not history or obj <= history[-1] + 1e-9 * max(1.0, history[-1]), (
            f"k-means objective increased: {history[-1]} -> {obj}"
        )
        history.append(obj)

        new_centers = centers.copy()
        empties = []
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = x[mask].mean(axis=0)
            else:
                empties.append(j)
        if empties:
            reseed_d2 = point_d2.copy()
            for j in empties:
                far = int(np.argmax(reseed_d2))
                new_centers[j] = x[far]
                reseed_d2[far] = -1.0
        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break

    dist2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(dist2, axis=1)
    obj = float(dist2[np.arange(n), labels].sum())
    assert not history or obj <= history[-1] + 1e-9 * max(1.0, history[-1])
    history.append(obj)

    relabeled, mapping = _relabel_by_size(labels)
    n_topics = len(mapping)
    centroids = np.empty((n_topics, x.shape[1]))
    for old, new in mapping.items():
        centroids[new - 1] = centers[old]
    return TopicAssignment(
        labels=[int(l) for l in relabeled],
        seed=seed,
        algorithm=KMEANS,
        centroids=centroids,
        objective_history=history,
    )


def dbscan(vectors: np.ndarray, eps: float, min_pts: int) -> TopicAssignment:
    """Density clustering with Euclidean distance and noise labels.

    Core points (>= min_pts neighbors within eps, self included) are
    grouped by connectivity, expanding in ascending index order; a border
    point joins the cluster of its lowest-index core neighbor; everything
    else is noise.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 2:
        raise ValueError(f"min_pts must be >= 2, got {min_pts}")
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return TopicAssignment(labels=[], seed=0, algorithm=DBSCAN)
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    within = dist <= eps
    core = within.sum(axis=1) >= min_pts

    raw = np.full(n, NOISE, dtype=int)
    cluster = 0
    for i in range(n):
        if not core[i] or raw[i] != NOISE:
            continue
        raw[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop(0)
            for nb in np.flatnonzero(within[j]):
                if core[nb] and raw[nb] == NOISE:
                    raw[nb] = cluster
                    frontier.append(int(nb))
        cluster += 1
    for i in range(n):
        if core[i] or not within[i].any():
            continue
        core_neighbors = np.flatnonzero(within[i] & core)
        if core_neighbors.size:
            raw[i] = raw[core_neighbors[0]]

    relabeled, _ = _relabel_by_size(raw)
    return TopicAssignment(
        labels=[int(l) for l in relabeled],
        seed=0,
        algorithm=DBSCAN,
    )


def compute_ctfidf(
    docs_tokens: list[list[str]],
    assignment: TopicAssignment,
    min_df: int = 2,
) -> CtfidfWeights:
    """Class-based TF-IDF over per-topic concatenated token streams.

    Noise documents are excluded.  Terms appearing in fewer than min_df
    documents get no weight entries; the corpus statistics A and f_t are
    computed from the full streams before that filter.
    """
    labels = assignment.labels
    if len(labels) != len(docs_tokens):
        raise ValueError("labels do not cover documents")
    term_counts: dict[int, Counter] = {}
    doc_freq: Counter = Counter()
    for tokens, label in zip(docs_tokens, labels):
        if label == NOISE:
            continue
        term_counts.setdefault(label, Counter()).update(tokens)
        doc_freq.update(set(tokens))
    if not term_counts:
        raise ValueError("all documents are noise; nothing to weight")
    classes = sorted(term_counts)
    total_counts: Counter = Counter()
    for counts in term_counts.values():
        total_counts.update(counts)
    total_tokens = sum(total_counts.values())
    avg_tokens = total_tokens / len(classes)
    kept_terms = {t for t, df in doc_freq.items() if df >= min_df}
    weights: dict[int, dict[str, float]] = {}
    for c in classes:
        weights[c] = {
            t: count * np.log(1.0 + avg_tokens / total_counts[t])
            for t, count in term_counts[c].items()
            if t in kept_terms
        }
    return CtfidfWeights(
        classes=classes,
        term_counts=term_counts,
        total_counts=total_counts,
        avg_tokens_per_class=avg_tokens,
        weights=weights,
    )


def build_topics(
    weights: CtfidfWeights,
    assignment: TopicAssignment,
    n_terms: int = 10,
    n_name_terms: int = 4,
) -> list[Topic]:
    """Rank topics by size and derive per-topic term lists and names."""
    if not weights.classes:
        raise ValueError("no weighted classes")
    label_counts = Counter(l for l in assignment.labels if l != NOISE)
    ordered = sorted(weights.classes, key=lambda c: (-label_counts[c], c))
    topics = []
    for topic_id, c in enumerate(ordered, start=1):
        ranked = sorted(weights.weights[c].items(), key=lambda kv: (-kv[1], kv[0]))
        top = [(t, float(w)) for t, w in ranked[:n_terms]]
        name = "_".join(t for t, _ in top[:n_name_terms])
        topics.append(Topic(id=topic_id, count=label_counts[c], top_terms=top, name=name))
    return topics


def topic_centroid(member_vectors: np.ndarray) -> np.ndarray:
    """Arithmetic mean of member vectors (original embedding space)."""
    x = np.asarray(member_vectors, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot take the centroid of an empty topic")
    return x.mean(axis=0)


def assign_nearest(vector: np.ndarray, centroids: np.ndarray) -> int:
    """Topic id (1-based) whose centroid has the highest cosine similarity.

    Ties resolve to the lower topic id; zero centroids are rejected.
    """
    cents = np.asarray(centroids, dtype=np.float64)
    if cents.ndim != 2 or cents.shape[0] == 0:
        raise ValueError("need at least one centroid")
    norms = np.linalg.norm(cents, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero centroid is degenerate; cannot assign by cosine")
    sims = [cosine_similarity(vector, c) for c in cents]
    return int(np.argmax(sims)) + 1


def save_topic_model(
    path: str | os.PathLike,
    assignment: TopicAssignment,
    topics: list[Topic],
    target_dim: int,
) -> None:
    payload = {
        "algorithm": assignment.algorithm,
        "seed": assignment.seed,
        "target_dim": target_dim,
        "labels": list(assignment.labels),
        "topics": [
            {
                "id": t.id,
                "count": t.count,
                "name": t.name,
                "top_terms": [[term, weight] for term, weight in t.top_terms],
            }
            for t in topics
        ],
    }
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
            f.write("\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_topic_model(path: str | os.PathLike) -> tuple[TopicAssignment, list[Topic], int]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    assignment = TopicAssignment(
        labels=[int(l) for l in payload["labels"]],
        seed=int(payload["seed"]),
        algorithm=payload["algorithm"],
    )
    topics = [
        Topic(
            id=int(t["id"]),
            count=int(t["count"]),
            top_terms=[(term, float(w)) for term, w in t["top_terms"]],
            name=t["name"],
        )
        for t in payload["topics"]
    ]
    return assignment, topics, int(payload["target_dim"])
