"""Turn post HTML into clean sentences and a normalized token stream.

Two views of every post are produced: natural-language sentences (for
embedding and extractive summarization) and a stemmed, stop-word-free
token stream (for class-based TF-IDF).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .ingest import RawPost
from .stemmer import stem

_CODE_OPEN_RE = re.compile(r"<(code|pre)(?=[\s>/])", re.IGNORECASE)
_TAG_RE = re.compile(r"<[^>]*>")
_BLOCK_TAG_RE = re.compile(
    r"</?(?:p|br|li|div|h[1-6]|blockquote|ul|ol|tr|table)\b[^>]*>", re.IGNORECASE
)
_ENTITY_RE = re.compile(r"&(amp|lt|gt|quot|apos|#\d+|#x[0-9a-fA-F]+);")
_XML_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}
_NON_ALPHA_RE = re.compile(r"[^a-z]+")
_SENTENCE_BREAK_RE = re.compile(r"([.!?])(\s+)")
_ABBREVIATIONS = ("e.g.", "i.e.", "vs.")

_MIN_SENTENCE_TOKENS = 3
_PIECE_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
MIN_TOPIC_TOKENS = 5  # documents below this are too degenerate to cluster


@dataclass
class CleanDocument:
    post_id: int
    role: str  # "question" or "answer"
    clean_text: str
    sentences: list[str]
    tokens: list[str]


def load_stopwords(path=None) -> frozenset[str]:
    """Load the stop-word list (bundled file by default).

    Format: one lowercase word per line, UTF-8, '#' starts a comment line.
    """
    if path is None:
        text = resources.files("stackdigest").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


_STOPWORDS = load_stopwords()


def strip_code_blocks(html: str) -> str:
    """Remove <code>...</code> and <pre>...</pre> elements including content.

    An unclosed opener removes through end of input.  Idempotent on any
    input, including malformed tag soup.
    """
    out = []
    pos = 0
    while True:
        m = _CODE_OPEN_RE.search(html, pos)
        if m is None:
            out.append(html[pos:])
            break
        out.append(html[pos : m.start()])
        close = re.compile(rf"</{m.group(1)}\s*>", re.IGNORECASE).search(html, m.end())
        if close is None:
            break
        pos = close.end()
    return "".join(out)


def _decode_entities(text: str) -> str:
    def repl(m: re.Match) -> str:
        ref = m.group(1)
        if ref in _XML_ENTITIES:
            return _XML_ENTITIES[ref]
        try:
            code = int(ref[2:], 16) if ref[1] in "xX" else int(ref[1:])
            return chr(code)
        except (ValueError, OverflowError):
            return m.group(0)

    return _ENTITY_RE.sub(repl, text)


def html_to_text(html: str) -> str:
    """Strip remaining markup to plain text.

    Block-level tags become newline separators so sentence segmentation
    never joins across paragraphs; entities are decoded exactly once,
    after tag removal.
    """
    text = _BLOCK_TAG_RE.sub("\n", html)
    text = _TAG_RE.sub("", text)
    text = _decode_entities(text)
    lines = []
    for line in text.split("\n"):
        line = re.sub(r"\s+", " ", line).strip()
        if line:
            lines.append(line)
    return "\n".join(lines)


def _is_abbreviation(text: str, punct_index: int) -> bool:
    prefix = text[: punct_index + 1].lower()
    return any(prefix.endswith(abbr) for abbr in _ABBREVIATIONS)


def _split_pieces(text: str) -> list[str]:
    pieces = []
    for line in text.split("\n"):
        start = 0
        for m in _SENTENCE_BREAK_RE.finditer(line):
            if m.group(1) == ".":
                if _is_abbreviation(line, m.start(1)):
                    continue
                before = line[m.start(1) - 1] if m.start(1) > 0 else ""
                after = line[m.end(2)] if m.end(2) < len(line) else ""
                if before.isdigit() and after.isdigit():
                    continue
            piece = line[start : m.end(1)].strip()
            if piece:
                pieces.append(piece)
            start = m.end(2)
        tail = line[start:].strip()
        if tail:
            pieces.append(tail)
    return pieces


def _piece_tokens(piece: str) -> int:
    # punctuation marks count as their own tokens, so "No." is 2 and
    # "It fails." is 3
    return len(_PIECE_TOKEN_RE.findall(piece))


def segment_sentences(text: str) -> list[str]:
    """Split plain text into sentences.

    Boundaries are newlines and '.', '!', '?' followed by whitespace, with
    exceptions for e.g./i.e./vs. and periods between digits.  Pieces
    shorter than 3 tokens merge into the following piece (the preceding
    one if last).
    """
    pieces = _split_pieces(text)
    merged: list[str] = []
    i = 0
    while i < len(pieces):
        piece = pieces[i]
        while _piece_tokens(piece) < _MIN_SENTENCE_TOKENS and i + 1 < len(pieces):
            i += 1
            piece = piece + " " + pieces[i]
        if _piece_tokens(piece) < _MIN_SENTENCE_TOKENS and merged:
            merged[-1] = merged[-1] + " " + piece
        else:
            merged.append(piece)
        i += 1
    return merged


def basic_tokens(text: str) -> list[str]:
    """Lowercase alphabetic tokens of length >= 2, in order."""
    return [t for t in _NON_ALPHA_RE.split(text.lower()) if len(t) >= 2]


def normalize_tokens(text: str, stopwords: frozenset[str] = _STOPWORDS) -> list[str]:
    """Lowercase, strip non-alphabetic characters, drop stop words, stem.

    Output tokens always match [a-z]{2,} and never contain a stop word;
    the stop-word filter reapplies after stemming because stemming can
    collapse a content word onto a stop word ("owning" -> "own").
    """
    tokens = []
    for raw in basic_tokens(text):
        if raw in stopwords:
            continue
        stemmed = stem(raw)
        if len(stemmed) < 2 or stemmed in stopwords:
            continue
        tokens.append(stemmed)
    return tokens


def preprocess_post(post: RawPost) -> CleanDocument:
    """Compose the cleaning pipeline for one post.

    A question title is prepended as its own sentence, never merged into
    the body's first sentence.
    """
    body_text = html_to_text(strip_code_blocks(post.body_html))
    sentences = segment_sentences(body_text)
    parts = []
    if post.title:
        title_text = html_to_text(strip_code_blocks(post.title)).replace("\n", " ").strip()
        if title_text:
            parts.append(title_text)
            sentences = [title_text] + sentences
    if body_text:
        parts.append(body_text)
    clean_text = "\n".join(parts)
    return CleanDocument(
        post_id=post.id,
        role=post.post_type,
        clean_text=clean_text,
        sentences=sentences,
        tokens=normalize_tokens(clean_text),
    )
