"""Render topic and summary reports as Markdown, CSV, and JSON."""

from __future__ import annotations

import csv
import io
import json

from .summarize import QAPairSummary, TopicDigest
from .topics import Topic, TopicAssignment

TOPIC_HEADERS = ("Topic", "Count", "Name", "Representation")
SUMMARY_HEADERS = ("Questions", "Answers")


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def _md_table(headers: tuple[str, ...], rows: list[tuple[str, ...]]) -> str:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(_md_cell(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def _csv_table(headers: tuple[str, ...], rows: list[tuple[str, ...]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def representation(topic: Topic) -> str:
    return ", ".join(term for term, _ in topic.top_terms)


def emit_topics_table(
    topics: list[Topic],
    fmt: str,
    assignment: TopicAssignment | None = None,
    target_dim: int | None = None,
) -> str:
    """Topic / Count / Name / Representation in the requested format.

    The JSON format is the topic model artifact schema, so it needs the
    assignment the topics came from.
    """
    if fmt == "json":
        if assignment is None or target_dim is None:
            raise ValueError("json topics output requires the assignment and target_dim")
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
        return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    rows = [(str(t.id), str(t.count), t.name, representation(t)) for t in topics]
    if fmt == "md":
        return _md_table(TOPIC_HEADERS, rows)
    if fmt == "csv":
        return _csv_table(TOPIC_HEADERS, rows)
    raise ValueError(f"unknown format {fmt!r}")


def _pair_cells(pair: QAPairSummary) -> tuple[str, str]:
    problem = " ".join(pair.problem.sentences)
    solution = " ".join(pair.solution.sentences) if pair.solution else ""
    return problem, solution


def emit_summary_table(pairs: list[QAPairSummary], fmt: str) -> str:
    """Question/answer summary pairs, one row per pair."""
    if fmt == "md":
        return _md_table(SUMMARY_HEADERS, [_pair_cells(p) for p in pairs])
    if fmt == "csv":
        rows = [
            (str(p.topic_id), str(p.question_id)) + _pair_cells(p)
            for p in pairs
        ]
        return _csv_table(("TopicId", "QuestionId") + SUMMARY_HEADERS, rows)
    if fmt == "json":
        return json.dumps(
            [_pair_record(p) for p in pairs], ensure_ascii=False, indent=2
        ) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def _pair_record(pair: QAPairSummary) -> dict:
    sources = list(pair.problem.source_post_ids)
    if pair.solution:
        sources += [s for s in pair.solution.source_post_ids if s not in sources]
    return {
        "question_id": pair.question_id,
        "problem": list(pair.problem.sentences),
        "solution": list(pair.solution.sentences) if pair.solution else None,
        "sources": sources,
    }


def summary_records(
    digests: list[TopicDigest], pairs_by_topic: dict[int, list[QAPairSummary]]
) -> list[dict]:
    """One JSON record per topic: digest sentences plus Q/A pair summaries."""
    records = []
    for digest in digests:
        records.append(
            {
                "topic_id": digest.topic_id,
                "digest": list(digest.summary.sentences),
                "pairs": [
                    _pair_record(p) for p in pairs_by_topic.get(digest.topic_id, [])
                ],
            }
        )
    return records


def render_summary_markdown(
    topics: list[Topic],
    digests: list[TopicDigest],
    pairs_by_topic: dict[int, list[QAPairSummary]],
) -> str:
    """Per-topic sections: heading, digest paragraph, Q/A pair table."""
    digest_by_topic = {d.topic_id: d for d in digests}
    sections = []
    for topic in topics:
        lines = [f"## Topic {topic.id}: {topic.name}", ""]
        digest = digest_by_topic.get(topic.id)
        if digest and digest.summary.sentences:
            lines.append(_md_cell(" ".join(digest.summary.sentences)))
            lines.append("")
        lines.append(emit_summary_table(pairs_by_topic.get(topic.id, []), "md"))
        sections.append("\n".join(lines))
    return "\n".join(sections)
