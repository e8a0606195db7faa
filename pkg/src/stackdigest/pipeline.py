"""Stage orchestration: configuration, artifacts, and the run manifest.

Stages are resumable: each one reads the previous stage's artifact,
validates it against the content hashes recorded in the run manifest, and
writes its own outputs atomically (temp file + rename).  One global seed
drives every stage through fixed XOR salts, so re-running a single stage
reproduces exactly what a full run would have produced.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, fields
from datetime import datetime

from .embed import (
    BuiltinEmbedder,
    EmbedError,
    EmbeddingCache,
    HttpEmbedder,
    embed_texts,
)
from .ingest import (
    IngestError,
    ParseStats,
    PostStore,
    filter_posts,
    format_timestamp,
    load_store,
    parse_dump,
    parse_timestamp,
    save_store,
)
from .preprocess import MIN_TOPIC_TOKENS, CleanDocument, preprocess_post
from .report import (
    emit_summary_table,
    emit_topics_table,
    render_summary_markdown,
    summary_records,
)
from .summarize import build_topic_report
from .topics import (
    DBSCAN,
    KMEANS,
    NOISE,
    default_k,
    build_topics,
    compute_ctfidf,
    dbscan,
    fit_reduction,
    kmeans,
    load_topic_model,
    save_topic_model,
)

log = logging.getLogger("stackdigest")

SEED_SALT_EMBED = 0x0
SEED_SALT_CLUSTER = 0xC715
SEED_SALT_SUMMARY = 0x5EED

FORMATS = ("md", "csv", "json")


class ConfigError(Exception):
    """Bad configuration value or flag; exit code 2."""


class InputError(Exception):
    """Missing or inconsistent input artifact; exit code 3."""


class PipelineError(Exception):
    """Stage failure on valid inputs; exit code 4."""


@dataclass
class PipelineConfig:
    dump: str | None = None
    store: str | None = None
    tag: str = "android"
    from_date: datetime = parse_timestamp("2009-01-01T00:00:00Z")
    to_date: datetime = parse_timestamp("2022-05-01T00:00:00Z")
    embedder: str = "builtin"
    endpoint: str | None = None
    dim: int = 256
    seed: int = 42
    reduce_dim: int = 5
    cluster: str = KMEANS
    k: int | None = None
    eps: float = 0.5
    min_pts: int = 5
    questions_per_topic: int = 3
    pool_size: int = 50
    sentences_question: int = 2
    sentences_answer: int = 2
    sentences_digest: int = 5
    score_min: int = 2
    out: str = "out"
    formats: tuple[str, ...] = FORMATS

    @property
    def store_path(self) -> str:
        return self.store or os.path.join(self.out, "store.ndjson")

    @property
    def topics_path(self) -> str:
        return os.path.join(self.out, "topics.json")

    @property
    def cache_path(self) -> str:
        return os.path.join(self.out, "embeddings.bin")

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.out, "manifest.json")

    def validate(self) -> None:
        if self.embedder not in ("builtin", "http"):
            raise ConfigError(f"embedder must be builtin or http, got {self.embedder!r}")
        if self.embedder == "http" and not self.endpoint:
            raise ConfigError("http embedder requires --endpoint")
        if self.cluster not in (KMEANS, DBSCAN):
            raise ConfigError(f"cluster must be kmeans or dbscan, got {self.cluster!r}")
        if self.dim < 8:
            raise ConfigError(f"dim must be >= 8, got {self.dim}")
        if self.reduce_dim < 2:
            raise ConfigError(f"reduce-dim must be >= 2, got {self.reduce_dim}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 2:
            raise ConfigError(f"min-pts must be >= 2, got {self.min_pts}")
        for name, value in (
            ("questions-per-topic", self.questions_per_topic),
            ("pool-size", self.pool_size),
            ("sentences-question", self.sentences_question),
            ("sentences-answer", self.sentences_answer),
            ("sentences-digest", self.sentences_digest),
        ):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not self.from_date < self.to_date:
            raise ConfigError("--from must precede --to")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown output formats {bad}; choose from {FORMATS}")

    def snapshot(self) -> dict:
        snap = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, datetime):
                value = format_timestamp(value)
            elif isinstance(value, tuple):
                value = list(value)
            snap[f.name] = value
        return snap


_INT_KEYS = {
    "dim", "seed", "reduce_dim", "k", "min_pts", "questions_per_topic",
    "pool_size", "sentences_question", "sentences_answer",
    "sentences_digest", "score_min",
}
_FLOAT_KEYS = {"eps"}
_DATE_KEYS = {"from_date", "to_date"}
_ALIASES = {"from": "from_date", "to": "to_date", "format": "formats"}


def config_from_mapping(mapping: dict[str, str]) -> PipelineConfig:
    """Build a config from string key/value pairs (file or flags).

    Keys use flag names; '-' and '_' are interchangeable.  Values are
    parsed and validated here so the config file and the command line
    share one code path.
    """
    cfg = PipelineConfig()
    known = {f.name for f in fields(cfg)}
    for raw_key, raw_value in mapping.items():
        key = raw_key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"unknown configuration key {raw_key!r}")
        if raw_value is None:
            continue
        try:
            if key in _INT_KEYS:
                value: object = int(raw_value)
            elif key in _FLOAT_KEYS:
                value = float(raw_value)
            elif key in _DATE_KEYS:
                value = parse_timestamp(raw_value)
            elif key == "formats":
                value = tuple(
                    part.strip() for part in str(raw_value).split(",") if part.strip()
                )
            else:
                value = raw_value
        except ValueError as exc:
            raise ConfigError(f"bad value for {raw_key}: {raw_value!r} ({exc})") from None
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def parse_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_manifest(path: str) -> dict:
    if not os.path.exists(path):
        return {"version": 1, "inputs": {}, "counts": {}, "timings_s": {}, "artifacts": {}}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _update_manifest(cfg: PipelineConfig, **sections) -> dict:
    manifest = _read_manifest(cfg.manifest_path)
    manifest["config"] = cfg.snapshot()
    for section, values in sections.items():
        manifest.setdefault(section, {}).update(values)
    atomic_write_text(cfg.manifest_path, json.dumps(manifest, ensure_ascii=False, indent=2) + "\n")
    return manifest


def make_provider(cfg: PipelineConfig):
    if cfg.embedder == "builtin":
        return BuiltinEmbedder(dim=cfg.dim, seed=cfg.seed ^ SEED_SALT_EMBED)
    return HttpEmbedder(cfg.endpoint)


def _prepare_question_docs(store: PostStore) -> tuple[dict[int, CleanDocument], list[int]]:
    docs = {qid: preprocess_post(store.questions[qid]) for qid in sorted(store.questions)}
    modeled = [qid for qid in sorted(docs) if len(docs[qid].tokens) >= MIN_TOPIC_TOKENS]
    return docs, modeled


def cmd_ingest(cfg: PipelineConfig) -> dict:
    """Parse the dump, filter by tag and window, persist the store."""
    if not cfg.dump:
        raise InputError("no dump path given (--dump)")
    if not os.path.exists(cfg.dump):
        raise InputError(f"dump file not found: {cfg.dump}")
    os.makedirs(cfg.out, exist_ok=True)
    started = time.monotonic()
    stats = ParseStats()
    try:
        store = filter_posts(
            parse_dump(cfg.dump, stats=stats), cfg.tag, cfg.from_date, cfg.to_date
        )
    except IngestError as exc:
        raise InputError(f"cannot parse dump: {exc}") from exc
    save_store(store, cfg.store_path)
    elapsed = time.monotonic() - started
    counts = {
        "rows_seen": stats.rows_seen,
        "skipped_other_type": stats.skipped_other_type,
        "skipped_malformed": stats.skipped_malformed,
        "question_rows": store.total_question_rows,
        "answer_rows": store.total_answer_rows,
        "kept_questions": store.kept_questions,
        "kept_answers": store.kept_answers,
        "orphan_answers": store.orphan_count,
    }
    _update_manifest(
        cfg,
        inputs={"dump": {"path": cfg.dump, "sha256": sha256_file(cfg.dump)}},
        counts=counts,
        timings_s={"ingest": round(elapsed, 3)},
        artifacts={"store": {"path": cfg.store_path, "sha256": sha256_file(cfg.store_path)}},
    )
    log.info(
        "ingest: kept %d questions / %d answers (%d orphans) in %.2fs",
        store.kept_questions, store.kept_answers, store.orphan_count, elapsed,
    )
    return {"store": store, "counts": counts}


def _load_store_checked(cfg: PipelineConfig) -> PostStore:
    if not os.path.exists(cfg.store_path):
        raise InputError(f"store not found: {cfg.store_path} (run the ingest stage first)")
    try:
        return load_store(cfg.store_path)
    except IngestError as exc:
        raise InputError(f"cannot read store: {exc}") from exc


def cmd_topics(cfg: PipelineConfig) -> dict:
    """Embed modeled questions, reduce, cluster, and weight topic terms."""
    store = _load_store_checked(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    started = time.monotonic()
    docs, modeled = _prepare_question_docs(store)
    if len(modeled) < 2:
        raise PipelineError(
            f"only {len(modeled)} questions have >= {MIN_TOPIC_TOKENS} tokens; need at least 2"
        )
    provider = make_provider(cfg)
    with EmbeddingCache(cfg.cache_path) as cache:
        try:
            matrix = embed_texts(provider, [docs[q].clean_text for q in modeled], cache)
        except EmbedError as exc:
            raise PipelineError(f"embedding failed: {exc}") from exc
        target_dim = min(cfg.reduce_dim, len(modeled))
        reduction = fit_reduction(matrix, target_dim)
        reduced = reduction.transform(matrix)
        cluster_seed = cfg.seed ^ SEED_SALT_CLUSTER
        try:
            if cfg.cluster == KMEANS:
                k = cfg.k if cfg.k is not None else default_k(len(modeled))
                assignment = kmeans(reduced, k, cluster_seed)
            else:
                assignment = dbscan(reduced, cfg.eps, cfg.min_pts)
                assignment.seed = cluster_seed
            weights = compute_ctfidf([docs[q].tokens for q in modeled], assignment)
        except ValueError as exc:
            raise PipelineError(str(exc)) from exc
        topic_list = build_topics(weights, assignment)
        save_topic_model(cfg.topics_path, assignment, topic_list, reduction.target_dim)
        cache_stats = {"hits": cache.hits, "misses": cache.misses}
    elapsed = time.monotonic() - started
    noise = sum(1 for l in assignment.labels if l == NOISE)
    _update_manifest(
        cfg,
        inputs={"store": {"path": cfg.store_path, "sha256": sha256_file(cfg.store_path)}},
        counts={"modeled_documents": len(modeled), "topics": len(topic_list), "noise_documents": noise},
        timings_s={"topics": round(elapsed, 3)},
        artifacts={"topics": {"path": cfg.topics_path, "sha256": sha256_file(cfg.topics_path)}},
    )
    log.info(
        "topics: %d documents -> %d topics (%d noise) in %.2fs",
        len(modeled), len(topic_list), noise, elapsed,
    )
    return {
        "topics": topic_list,
        "assignment": assignment,
        "modeled": modeled,
        "cache": cache_stats,
    }


def cmd_summarize(cfg: PipelineConfig) -> dict:
    """Produce the topic table and per-topic problem/solution reports."""
    store = _load_store_checked(cfg)
    if not os.path.exists(cfg.topics_path):
        raise InputError(f"topic model not found: {cfg.topics_path} (run the topics stage first)")
    manifest = _read_manifest(cfg.manifest_path)
    recorded = manifest.get("inputs", {}).get("store", {}).get("sha256")
    if recorded and recorded != sha256_file(cfg.store_path):
        raise InputError("store changed since the topic model was fitted; re-run the topics stage")
    try:
        assignment, topic_list, target_dim = load_topic_model(cfg.topics_path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read topic model: {exc}") from exc
    started = time.monotonic()
    docs, modeled = _prepare_question_docs(store)
    if len(assignment.labels) != len(modeled):
        raise InputError(
            f"topic model covers {len(assignment.labels)} documents but the store yields "
            f"{len(modeled)}; artifacts are out of sync"
        )
    for qid in store.questions:
        for answer in store.answers_for(qid):
            docs[answer.id] = preprocess_post(answer)

    provider = make_provider(cfg)
    digests = []
    pairs_by_topic: dict[int, list] = {}
    with EmbeddingCache(cfg.cache_path) as cache:
        try:
            matrix = embed_texts(provider, [docs[q].clean_text for q in modeled], cache)

            def embed_fn(texts):
                return embed_texts(provider, list(texts), cache)

            doc_vectors = {qid: matrix[i] for i, qid in enumerate(modeled)}
            summary_seed = cfg.seed ^ SEED_SALT_SUMMARY
            for topic in topic_list:
                member_qids = [
                    qid for qid, label in zip(modeled, assignment.labels) if label == topic.id
                ]
                if not member_qids:
                    continue
                digest, pairs = build_topic_report(
                    topic,
                    member_qids,
                    store,
                    docs,
                    doc_vectors,
                    embed_fn,
                    k_pairs=cfg.questions_per_topic,
                    pool_size=cfg.pool_size,
                    m_question=cfg.sentences_question,
                    m_answer=cfg.sentences_answer,
                    m_digest=cfg.sentences_digest,
                    score_min=cfg.score_min,
                    seed=summary_seed ^ topic.id,
                )
                digests.append(digest)
                pairs_by_topic[topic.id] = pairs
        except EmbedError as exc:
            raise PipelineError(f"embedding failed: {exc}") from exc
        cache_stats = {"hits": cache.hits, "misses": cache.misses}

    all_pairs = [p for t in topic_list for p in pairs_by_topic.get(t.id, [])]
    artifacts = {}
    if "md" in cfg.formats:
        path = os.path.join(cfg.out, "topics.md")
        atomic_write_text(path, emit_topics_table(topic_list, "md"))
        artifacts["topics_md"] = path
        path = os.path.join(cfg.out, "summaries.md")
        atomic_write_text(path, render_summary_markdown(topic_list, digests, pairs_by_topic))
        artifacts["summaries_md"] = path
    if "csv" in cfg.formats:
        path = os.path.join(cfg.out, "topics.csv")
        atomic_write_text(path, emit_topics_table(topic_list, "csv"))
        artifacts["topics_csv"] = path
        path = os.path.join(cfg.out, "summaries.csv")
        atomic_write_text(path, emit_summary_table(all_pairs, "csv"))
        artifacts["summaries_csv"] = path
    if "json" in cfg.formats:
        path = os.path.join(cfg.out, "summaries.json")
        records = summary_records(digests, pairs_by_topic)
        atomic_write_text(path, json.dumps(records, ensure_ascii=False, indent=2) + "\n")
        artifacts["summaries_json"] = path

    elapsed = time.monotonic() - started
    _update_manifest(
        cfg,
        timings_s={"summarize": round(elapsed, 3)},
        counts={"report_pairs": len(all_pairs)},
        artifacts={
            "reports": {
                name: {"path": p, "sha256": sha256_file(p)} for name, p in artifacts.items()
            }
        },
    )
    log.info(
        "summarize: %d topics, %d pairs, cache %d hits / %d misses in %.2fs",
        len(topic_list), len(all_pairs), cache_stats["hits"], cache_stats["misses"], elapsed,
    )
    return {
        "digests": digests,
        "pairs_by_topic": pairs_by_topic,
        "cache": cache_stats,
        "artifacts": artifacts,
    }


def cmd_run(cfg: PipelineConfig) -> dict:
    """Full pipeline: ingest, topics, summarize."""
    info = cmd_ingest(cfg)
    topics_info = cmd_topics(cfg)
    summary_info = cmd_summarize(cfg)
    return {
        "counts": info["counts"],
        "topics": topics_info["topics"],
        "digests": summary_info["digests"],
        "pairs_by_topic": summary_info["pairs_by_topic"],
        "cache": summary_info["cache"],
        "artifacts": summary_info["artifacts"],
    }
