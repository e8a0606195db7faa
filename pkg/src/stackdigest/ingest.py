"""Stream a Stack Exchange Posts dump into a linked question/answer store.

The dump is a flat XML document of <row .../> elements.  Parsing is
incremental so memory stays constant regardless of file size; filtering
keeps questions matching a tag and date window plus every answer whose
question was kept.
"""

from __future__ import annotations

import io
import json
import os
import re
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator

QUESTION = "question"
ANSWER = "answer"

_TAG_GROUP_RE = re.compile(r"<([^<>]+)>")
_STORE_KEYS = (
    "id", "type", "parent_id", "accepted_answer_id", "score",
    "creation_date", "tags", "title", "body_html",
)
_CHUNK_SIZE = 64 * 1024


class IngestError(Exception):
    pass


class DumpParseError(IngestError):
    """Document-level XML failure, with position of the offending bytes."""

    def __init__(self, message: str, byte_offset: int | None, line: int, column: int):
        super().__init__(f"{message} (byte offset {byte_offset}, line {line}, column {column})")
        self.byte_offset = byte_offset
        self.line = line
        self.column = column


class RowFormatError(IngestError):
    pass


class TagFormatError(IngestError):
    pass


class StoreFormatError(IngestError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class ParseStats:
    rows_seen: int = 0
    posts_yielded: int = 0
    skipped_other_type: int = 0
    skipped_malformed: int = 0
    tag_warnings: int = 0


@dataclass
class RawPost:
    id: int
    post_type: str
    score: int
    creation_date: datetime
    body_html: str
    parent_id: int | None = None
    accepted_answer_id: int | None = None
    tags: list[str] = field(default_factory=list)
    title: str | None = None

    def __post_init__(self):
        if self.id <= 0:
            raise ValueError(f"post id must be positive, got {self.id}")
        if self.post_type == ANSWER:
            if self.parent_id is None:
                raise ValueError(f"answer {self.id} missing parent_id")
            if self.tags:
                raise ValueError(f"answer {self.id} must not carry tags")
        elif self.post_type == QUESTION:
            if self.parent_id is not None:
                raise ValueError(f"question {self.id} must not carry parent_id")
        else:
            raise ValueError(f"unknown post type {self.post_type!r}")


@dataclass
class PostStore:
    questions: dict[int, RawPost] = field(default_factory=dict)
    answers_by_parent: dict[int, list[RawPost]] = field(default_factory=dict)
    # parse-time statistics; not persisted, excluded from equality
    orphan_count: int = field(default=0, compare=False)
    total_question_rows: int = field(default=0, compare=False)
    total_answer_rows: int = field(default=0, compare=False)

    @property
    def kept_questions(self) -> int:
        return len(self.questions)

    @property
    def kept_answers(self) -> int:
        return sum(len(v) for v in self.answers_by_parent.values())

    @property
    def dropped_questions(self) -> int:
        return self.total_question_rows - self.kept_questions

    def answers_for(self, question_id: int) -> list[RawPost]:
        return self.answers_by_parent.get(question_id, [])


def parse_timestamp(raw: str) -> datetime:
    """Parse a dump or RFC 3339 timestamp to UTC, second precision."""
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_tags(raw: str, strict: bool = False) -> list[str]:
    """Split a decoded "<tag><tag>" concatenation into lowercase tags."""
    if not raw:
        return []
    tags = [m.group(1).lower() for m in _TAG_GROUP_RE.finditer(raw)]
    if not tags_well_formed(raw) and strict:
        raise TagFormatError(f"unbalanced tag string {raw!r}")
    return tags


def tags_well_formed(raw: str) -> bool:
    return _TAG_GROUP_RE.sub("", raw) == ""


class _OffsetTracker:
    """Maps (line, column) parser positions back to byte offsets.

    Keeps a sliding window of recent line-start offsets; errors reported
    outside the window fall back to the window's oldest entry.
    """

    def __init__(self, window: int = 8192):
        self.line_starts: deque[tuple[int, int]] = deque(maxlen=window)
        self.line_starts.append((1, 0))
        self._line = 1
        self._consumed = 0

    def feed(self, chunk: bytes) -> None:
        start = 0
        while True:
            nl = chunk.find(b"\n", start)
            if nl == -1:
                break
            self._line += 1
            self.line_starts.append((self._line, self._consumed + nl + 1))
            start = nl + 1
        self._consumed += len(chunk)

    def offset_of(self, line: int, column: int) -> int | None:
        for ln, off in reversed(self.line_starts):
            if ln == line:
                return off + column
            if ln < line:
                break
        return self.line_starts[0][1] if self.line_starts else None


def _row_to_post(attrs: dict[str, str], strict: bool = False) -> RawPost | None:
    """Build a RawPost from row attributes; None for non-post row types.

    Raises RowFormatError for rows that are structurally unusable.
    """
    post_type_id = attrs.get("PostTypeId")
    if post_type_id is None:
        raise RowFormatError("row missing PostTypeId")
    if post_type_id not in ("1", "2"):
        return None
    raw_id = attrs.get("Id")
    if raw_id is None:
        raise RowFormatError("row missing Id")
    try:
        post_id = int(raw_id)
        score = int(attrs.get("Score", "0"))
        creation = parse_timestamp(attrs["CreationDate"])
    except KeyError as exc:
        raise RowFormatError(f"row {raw_id}: missing {exc.args[0]}") from None
    except ValueError as exc:
        raise RowFormatError(f"row {raw_id}: {exc}") from None

    try:
        if post_type_id == "1":
            accepted = attrs.get("AcceptedAnswerId")
            return RawPost(
                id=post_id,
                post_type=QUESTION,
                score=score,
                creation_date=creation,
                body_html=attrs.get("Body", ""),
                accepted_answer_id=int(accepted) if accepted is not None else None,
                tags=parse_tags(attrs.get("Tags", ""), strict=strict),
                title=attrs.get("Title"),
            )
        parent = attrs.get("ParentId")
        if parent is None:
            raise RowFormatError(f"answer row {raw_id} missing ParentId")
        return RawPost(
            id=post_id,
            post_type=ANSWER,
            score=score,
            creation_date=creation,
            body_html=attrs.get("Body", ""),
            parent_id=int(parent),
        )
    except ValueError as exc:
        raise RowFormatError(f"row {raw_id}: {exc}") from None


def parse_dump(
    stream: IO[bytes] | str | os.PathLike,
    strict: bool = False,
    stats: ParseStats | None = None,
) -> Iterator[RawPost]:
    """Yield RawPost per question/answer row of a Posts dump.

    Lenient mode (default) counts and skips structurally broken rows;
    strict mode raises on them.  Memory use is constant in file size.
    """
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "rb") as f:
            yield from parse_dump(f, strict=strict, stats=stats)
        return
    if stats is None:
        stats = ParseStats()

    parser = ET.XMLPullParser(events=("start", "end"))
    tracker = _OffsetTracker()

    def fatal(exc: ET.ParseError):
        line, column = exc.position
        return DumpParseError(
            f"malformed dump XML: {exc}", tracker.offset_of(line, column), line, column
        )

    def pending_events():
        # XMLPullParser defers parse errors into the event queue
        events = parser.read_events()
        while True:
            try:
                yield next(events)
            except StopIteration:
                return
            except ET.ParseError as exc:
                raise fatal(exc) from None

    root = None
    at_eof = False
    while not at_eof:
        chunk = stream.read(_CHUNK_SIZE)
        if not chunk:
            at_eof = True
        else:
            tracker.feed(chunk)
        try:
            if chunk:
                parser.feed(chunk)
            else:
                parser.close()
        except ET.ParseError as exc:
            raise fatal(exc) from None
        for event, elem in pending_events():
            if event == "start":
                if root is None:
                    root = elem
                continue
            if elem.tag != "row":
                continue
            stats.rows_seen += 1
            try:
                post = _row_to_post(elem.attrib, strict=strict)
            except RowFormatError:
                if strict:
                    raise
                stats.skipped_malformed += 1
                if root is not None:
                    root.clear()
                continue
            if post is None:
                stats.skipped_other_type += 1
            else:
                if post.post_type == QUESTION and not tags_well_formed(
                    elem.attrib.get("Tags", "")
                ):
                    stats.tag_warnings += 1
                stats.posts_yielded += 1
            if root is not None:
                root.clear()
            if post is not None:
                yield post


def answer_sort_key(question: RawPost):
    accepted_id = question.accepted_answer_id

    def key(answer: RawPost):
        return (answer.id != accepted_id, -answer.score, answer.id)

    return key


def filter_posts(
    posts: Iterable[RawPost],
    tag: str,
    from_ts: datetime,
    to_ts: datetime,
) -> PostStore:
    """Keep questions carrying `tag` inside [from_ts, to_ts) and their answers.

    Answers inherit inclusion from their question regardless of their own
    date; answers whose question is absent are counted as orphans.
    """
    if not from_ts < to_ts:
        raise ValueError("date window must satisfy from < to")
    tag = tag.lower()
    store = PostStore()
    dropped: set[int] = set()
    pending: dict[int, list[RawPost]] = {}
    for post in posts:
        if post.post_type == QUESTION:
            store.total_question_rows += 1
            if tag in post.tags and from_ts <= post.creation_date < to_ts:
                store.questions[post.id] = post
                waiting = pending.pop(post.id, None)
                if waiting:
                    store.answers_by_parent.setdefault(post.id, []).extend(waiting)
            else:
                dropped.add(post.id)
                orphaned = pending.pop(post.id, None)
                if orphaned:
                    store.orphan_count += len(orphaned)
        else:
            store.total_answer_rows += 1
            parent = post.parent_id
            if parent in store.questions:
                store.answers_by_parent.setdefault(parent, []).append(post)
            elif parent in dropped:
                store.orphan_count += 1
            else:
                pending.setdefault(parent, []).append(post)
    for waiting in pending.values():
        store.orphan_count += len(waiting)
    for qid, answers in store.answers_by_parent.items():
        answers.sort(key=answer_sort_key(store.questions[qid]))
    return store


def _post_to_record(post: RawPost) -> dict:
    return {
        "id": post.id,
        "type": post.post_type,
        "parent_id": post.parent_id,
        "accepted_answer_id": post.accepted_answer_id,
        "score": post.score,
        "creation_date": format_timestamp(post.creation_date),
        "tags": post.tags,
        "title": post.title,
        "body_html": post.body_html,
    }


def _record_to_post(record: dict, line_no: int) -> RawPost:
    missing = [k for k in _STORE_KEYS if k not in record]
    if missing:
        raise StoreFormatError(f"record missing keys {missing}", line_no)
    extra = [k for k in record if k not in _STORE_KEYS]
    if extra:
        raise StoreFormatError(f"record has unknown keys {extra}", line_no)
    try:
        return RawPost(
            id=record["id"],
            post_type=record["type"],
            score=record["score"],
            creation_date=parse_timestamp(record["creation_date"]),
            body_html=record["body_html"],
            parent_id=record["parent_id"],
            accepted_answer_id=record["accepted_answer_id"],
            tags=list(record["tags"] or []),
            title=record["title"],
        )
    except (TypeError, ValueError) as exc:
        raise StoreFormatError(str(exc), line_no) from None


def save_store(store: PostStore, path: str | os.PathLike) -> None:
    """Write the store as newline-delimited JSON, atomically."""
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            for qid in sorted(store.questions):
                f.write(json.dumps(_post_to_record(store.questions[qid]), ensure_ascii=False))
                f.write("\n")
                for answer in store.answers_for(qid):
                    f.write(json.dumps(_post_to_record(answer), ensure_ascii=False))
                    f.write("\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_store(path: str | os.PathLike | IO[str]) -> PostStore:
    """Rebuild a PostStore from its NDJSON form.

    Record problems are reported with their 1-based line number.
    """
    if not isinstance(path, io.IOBase) and not hasattr(path, "read"):
        with open(path, encoding="utf-8") as f:
            return load_store(f)
    store = PostStore()
    pending: dict[int, list[RawPost]] = {}
    for line_no, line in enumerate(path, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(record, dict):
            raise StoreFormatError("record is not a JSON object", line_no)
        post = _record_to_post(record, line_no)
        if post.post_type == QUESTION:
            if post.id in store.questions:
                raise StoreFormatError(f"duplicate question id {post.id}", line_no)
            store.total_question_rows += 1
            store.questions[post.id] = post
            waiting = pending.pop(post.id, None)
            if waiting:
                store.answers_by_parent.setdefault(post.id, []).extend(waiting)
        else:
            store.total_answer_rows += 1
            if post.parent_id in store.questions:
                store.answers_by_parent.setdefault(post.parent_id, []).append(post)
            else:
                pending.setdefault(post.parent_id, []).append(post)
    for waiting in pending.values():
        store.orphan_count += len(waiting)
    for qid, answers in store.answers_by_parent.items():
        answers.sort(key=answer_sort_key(store.questions[qid]))
    return store
