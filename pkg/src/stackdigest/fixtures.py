"""Synthetic demo dump with planted topic structure.

Generates a Posts XML file of questions drawn from three disjoint
vocabularies (build tooling, list/layout widgets, notifications and
background services) plus shared filler words, with answers attached.
Question ids are assigned in blocks of n_questions/3, so the planted
topic of question id q is (q - 1) // (n_questions // 3).  Deterministic
for a given seed.
"""

from __future__ import annotations

import random
from xml.sax.saxutils import quoteattr

TOPIC_VOCABULARIES = [
    ["project", "proguard", "studio", "error", "build",
     "library", "file", "gradle", "android", "eclipse"],
    ["fragment", "recyclerview", "item", "view", "listview",
     "scroll", "adapter", "list", "layout", "row"],
    ["notification", "activity", "service", "gcm", "app",
     "analytics", "push", "back", "intent", "broadcast"],
]

FILLER_WORDS = [
    "code", "problem", "tried", "help", "using", "version", "run",
    "device", "test", "update", "issue", "need", "crash", "install",
    "debug",
]

_CODE_SNIPPETS = [
    "dependencies { implementation 'x:y:1.0' }",
    "public void onCreate(Bundle state) { }",
    "adb logcat | grep error",
]

_ANSWER_OPENERS = [
    "You should try the following approach.",
    "This happened to me as well.",
    "The fix is straightforward once you see it.",
]


def _sentence(rng: random.Random, vocab: list[str], n_topic: int, n_filler: int) -> str:
    words = rng.sample(vocab, n_topic) + rng.sample(FILLER_WORDS, n_filler)
    rng.shuffle(words)
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _question_body(rng: random.Random, vocab: list[str]) -> str:
    parts = []
    for _ in range(rng.randint(3, 5)):
        parts.append(f"<p>{_sentence(rng, vocab, rng.randint(2, 3), rng.randint(1, 2))}</p>")
    if rng.random() < 0.3:
        snippet = rng.choice(_CODE_SNIPPETS).replace("<", "&lt;").replace(">", "&gt;")
        parts.insert(rng.randint(1, len(parts)), f"<pre><code>{snippet}</code></pre>")
    return "".join(parts)


def _answer_body(rng: random.Random, vocab: list[str]) -> str:
    parts = [f"<p>{rng.choice(_ANSWER_OPENERS)}</p>"]
    for _ in range(rng.randint(1, 2)):
        parts.append(f"<p>{_sentence(rng, vocab, rng.randint(1, 3), rng.randint(1, 2))}</p>")
    return "".join(parts)


def _date_for(index: int) -> str:
    year = 2010 + (index * 7) % 11
    month = 1 + (index * 5) % 12
    day = 1 + (index * 3) % 28
    return f"{year:04d}-{month:02d}-{day:02d}T{(index * 11) % 24:02d}:00:00.000"


def planted_topic(question_id: int, n_questions: int = 300) -> int:
    """0-based planted vocabulary index for a generated question id."""
    return (question_id - 1) // (n_questions // len(TOPIC_VOCABULARIES))


def generate_fixture(path: str | None = None, seed: int = 42, n_questions: int = 300) -> str:
    """Build the demo dump XML; write it to `path` when given."""
    if n_questions % len(TOPIC_VOCABULARIES) != 0:
        raise ValueError("n_questions must be divisible by the number of vocabularies")
    rng = random.Random(seed)
    per_topic = n_questions // len(TOPIC_VOCABULARIES)
    question_rows = []
    answer_rows = []
    answer_id = n_questions + 1000
    for qid in range(1, n_questions + 1):
        vocab = TOPIC_VOCABULARIES[(qid - 1) // per_topic]
        title = _sentence(rng, vocab, 2, 1)[:-1]
        body = _question_body(rng, vocab)
        n_answers = rng.choice([0, 1, 1, 2])
        accepted_id = None
        answers = []
        for i in range(n_answers):
            answer_id += 1
            score = rng.choice([-1, 0, 0, 1, 2, 3, 5])
            if i == 0 and rng.random() < 0.5:
                accepted_id = answer_id
            answers.append((answer_id, score))
        attrs = {
            "Id": str(qid),
            "PostTypeId": "1",
            "CreationDate": _date_for(qid),
            "Score": str(rng.randint(0, 40)),
            "Title": title,
            "Body": body,
            "Tags": f"<android><{rng.choice(vocab)}>",
        }
        if accepted_id is not None:
            attrs["AcceptedAnswerId"] = str(accepted_id)
        question_rows.append(attrs)
        for aid, score in answers:
            answer_rows.append(
                {
                    "Id": str(aid),
                    "PostTypeId": "2",
                    "ParentId": str(qid),
                    "CreationDate": _date_for(aid),
                    "Score": str(score),
                    "Body": _answer_body(rng, vocab),
                }
            )
    lines = ['<?xml version="1.0" encoding="utf-8"?>', "<posts>"]
    for attrs in question_rows + answer_rows:
        rendered = " ".join(f"{k}={quoteattr(v)}" for k, v in attrs.items())
        lines.append(f"  <row {rendered} />")
    lines.append("</posts>")
    xml = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(xml)
    return xml
