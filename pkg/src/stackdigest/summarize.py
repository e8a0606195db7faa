"""Extractive problem/solution summaries for discovered topics.

Summaries are verbatim sentence subsets: sentences are embedded, grouped
with seeded k-means, and the sentence nearest each group centroid is kept,
emitted in original order.  Questions supply the problem side; answers
that are accepted or score at or above a threshold supply solutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .embed import cosine_similarity
from .ingest import QUESTION, PostStore, RawPost
from .preprocess import CleanDocument
from .topics import Topic, kmeans, topic_centroid

EmbedFn = Callable[[Sequence[str]], np.ndarray]


@dataclass
class ExtractiveSummary:
    sentences: list[str]
    source_post_ids: list[int]
    target_len: int


@dataclass
class QAPairSummary:
    topic_id: int
    question_id: int
    problem: ExtractiveSummary
    solution: ExtractiveSummary | None


@dataclass
class TopicDigest:
    topic_id: int
    summary: ExtractiveSummary


def _dedupe(sentences: Sequence[str]) -> list[int]:
    seen = set()
    kept = []
    for i, s in enumerate(sentences):
        if s not in seen:
            seen.add(s)
            kept.append(i)
    return kept


def extractive_summarize(
    sentences: Sequence[str],
    sentence_vectors: np.ndarray,
    m: int,
    seed: int,
    source_ids: Sequence[int] | None = None,
) -> ExtractiveSummary:
    """Select up to m sentences, verbatim and in original order.

    With more than m distinct sentences, seeded k-means with k=m groups
    the sentence vectors and the sentence closest to each group centroid
    (ties: lowest index) is selected.  Duplicate sentence texts are
    collapsed onto their first occurrence.
    """
    if m <= 0:
        raise ValueError(f"summary target must be positive, got {m}")
    if len(sentences) != len(sentence_vectors):
        raise ValueError("one vector per sentence required")
    if source_ids is None:
        source_ids = [0] * len(sentences)
    kept = _dedupe(sentences)
    if len(kept) <= m:
        selected = kept
    else:
        vectors = np.asarray(sentence_vectors, dtype=np.float64)[kept]
        assignment = kmeans(vectors, m, seed)
        labels = np.array(assignment.labels)
        selected = []
        for topic_id in range(1, assignment.n_topics + 1):
            members = np.flatnonzero(labels == topic_id)
            centroid = assignment.centroids[topic_id - 1]
            dists = np.linalg.norm(vectors[members] - centroid, axis=1)
            selected.append(kept[members[int(np.argmin(dists))]])
        selected.sort()
    out_sentences = [sentences[i] for i in selected]
    out_sources = []
    for i in selected:
        sid = source_ids[i]
        if sid and sid not in out_sources:
            out_sources.append(sid)
    return ExtractiveSummary(sentences=out_sentences, source_post_ids=out_sources, target_len=m)


def select_representative_questions(
    member_ids: Sequence[int],
    doc_vectors: dict[int, np.ndarray],
    centroid: np.ndarray,
    k: int,
) -> list[int]:
    """Member question ids ranked by cosine similarity to the topic centroid.

    Descending similarity, ties broken by ascending post id; returns the
    top k (fewer when the topic is smaller).
    """
    ranked = sorted(
        member_ids,
        key=lambda qid: (-cosine_similarity(doc_vectors[qid], centroid), qid),
    )
    return ranked[:k]


def filter_answers(question: RawPost, store: PostStore, score_min: int = 2) -> list[RawPost]:
    """Answers that are accepted or score at least score_min, in store order."""
    if question.post_type != QUESTION:
        raise ValueError(f"post {question.id} is not a question")
    return [
        a
        for a in store.answers_for(question.id)
        if a.id == question.accepted_answer_id or a.score >= score_min
    ]


def summarize_question(
    question_id: int,
    store: PostStore,
    docs_by_id: dict[int, CleanDocument],
    embed_fn: EmbedFn,
    m_question: int = 2,
    seed: int = 0,
) -> ExtractiveSummary:
    if question_id not in store.questions:
        raise KeyError(f"unknown question id {question_id}")
    doc = docs_by_id[question_id]
    vectors = embed_fn(doc.sentences)
    return extractive_summarize(
        doc.sentences, vectors, m_question, seed, source_ids=[question_id] * len(doc.sentences)
    )


def summarize_answers(
    question_id: int,
    store: PostStore,
    docs_by_id: dict[int, CleanDocument],
    embed_fn: EmbedFn,
    m_answer: int = 2,
    score_min: int = 2,
    seed: int = 0,
) -> ExtractiveSummary | None:
    """Pooled summary of the question's qualifying answers.

    None when no answer passes the filter or the survivors contain no
    prose sentences.
    """
    if question_id not in store.questions:
        raise KeyError(f"unknown question id {question_id}")
    question = store.questions[question_id]
    sentences: list[str] = []
    sources: list[int] = []
    for answer in filter_answers(question, store, score_min):
        doc = docs_by_id.get(answer.id)
        if doc is None:
            continue
        sentences.extend(doc.sentences)
        sources.extend([answer.id] * len(doc.sentences))
    if not sentences:
        return None
    vectors = embed_fn(sentences)
    return extractive_summarize(sentences, vectors, m_answer, seed, source_ids=sources)


def build_topic_report(
    topic: Topic,
    member_qids: Sequence[int],
    store: PostStore,
    docs_by_id: dict[int, CleanDocument],
    doc_vectors: dict[int, np.ndarray],
    embed_fn: EmbedFn,
    *,
    k_pairs: int = 3,
    pool_size: int = 50,
    m_question: int = 2,
    m_answer: int = 2,
    m_digest: int = 5,
    score_min: int = 2,
    seed: int = 0,
) -> tuple[TopicDigest, list[QAPairSummary]]:
    """Digest plus per-question problem/solution pairs for one topic.

    The digest pools sentences of the pool_size most representative
    questions; the k_pairs most representative get individual pairs.
    """
    if not member_qids:
        raise ValueError(f"topic {topic.id} has no member questions")
    centroid = topic_centroid(np.stack([doc_vectors[q] for q in member_qids]))
    ranked = select_representative_questions(
        member_qids, doc_vectors, centroid, max(pool_size, k_pairs)
    )
    pooled_sentences: list[str] = []
    pooled_sources: list[int] = []
    for qid in ranked[:pool_size]:
        doc = docs_by_id[qid]
        pooled_sentences.extend(doc.sentences)
        pooled_sources.extend([qid] * len(doc.sentences))
    digest_vectors = embed_fn(pooled_sentences)
    digest = TopicDigest(
        topic_id=topic.id,
        summary=extractive_summarize(
            pooled_sentences, digest_vectors, m_digest, seed, source_ids=pooled_sources
        ),
    )
    pairs = []
    for qid in ranked[:k_pairs]:
        problem = summarize_question(qid, store, docs_by_id, embed_fn, m_question, seed)
        solution = summarize_answers(
            qid, store, docs_by_id, embed_fn, m_answer, score_min, seed
        )
        pairs.append(
            QAPairSummary(topic_id=topic.id, question_id=qid, problem=problem, solution=solution)
        )
    return digest, pairs
