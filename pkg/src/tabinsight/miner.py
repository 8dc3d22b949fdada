"""Coarse-to-fine knowledge mining with a teacher model.

Two sequential teacher calls per record: the first proposes aspects and
questions for each, the second answers every question with cited cell
evidence and an insight.  Replies are free text; the parsers below anchor on
the block markers the prompts ask for and ignore anything else.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from typing import Sequence

from .errors import AQParseError, EmptyAspectsError, EvidenceParseError, QuestionCountMismatch
from .gateway import Gateway
from .knowledge import (
    AugmentedRecord,
    Aspect,
    Insight,
    KnowledgeSet,
    KnowledgeTriple,
    Question,
    parse_evidence,
)
from .knowledge import _PREFIX_RE, _COL_KW, _scan_evidence  # shared scanner
from .prompts import load_template
from .table import DEFAULT_MAX_TOKENS, Table, serialize_table

logger = logging.getLogger(__name__)

Q_INIT = 5

AspectQuestions = list[tuple[Aspect, list[Question]]]

# -- aspect / question blocks --------------------------------------------------

_ASPECT_MARK = re.compile(r"\(\s*coarse[- ]level\s+aspects?\s*\)\s*:?", re.IGNORECASE)
_QUESTIONS_MARK = re.compile(r"\(\s*fine[- ]level\s+questions?[^)\n]*\)\s*:?", re.IGNORECASE)
_ENUM = re.compile(r"^\s*(?:[-*•]+|\(?\d+[.)]|q\d+(?:\s*-\s*\d+)?\s*[:.)]|question\s*\d+\s*[:.)])\s*", re.IGNORECASE)
_LABEL_ONLY = re.compile(r"^\s*[A-Za-z][\w ()-]*:\s*$")


def _clean_item(text: str) -> str:
    text = _ENUM.sub("", text, count=1).strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text.rstrip(",").strip()


def _question_items(body: str) -> list[str]:
    stripped = body.strip()
    if stripped.startswith("["):
        end = stripped.find("]")
        literal = stripped[: end + 1] if end >= 0 else stripped
        for loader in (json.loads, ast.literal_eval):
            try:
                value = loader(literal)
            except (ValueError, SyntaxError):
                continue
            if isinstance(value, list) and all(isinstance(v, str) for v in value):
                return [v.strip() for v in value if v.strip()]
    items = []
    for line in stripped.splitlines():
        if not line.strip() or _LABEL_ONLY.match(line):
            continue
        # several questions run together on one line
        parts = re.findall(r"[^?]+\?|[^?]+$", line) if line.count("?") > 1 else [line]
        for part in parts:
            item = _clean_item(part)
            if item:
                items.append(item)
    return items


def parse_aq_reply(text: str, q_init: int | None = Q_INIT) -> AspectQuestions:
    """Parse ``(Coarse-level Aspect): ... (Fine-level Questions): ...`` blocks.

    Aspects without questions are dropped with a warning; each aspect keeps
    at most ``q_init`` questions.  Surviving aspects are numbered 1..N.
    """
    if not text or not text.strip():
        raise AQParseError("empty reply", text)
    marks = list(_ASPECT_MARK.finditer(text))
    if not marks:
        raise AQParseError("no (Coarse-level Aspect) block found", text)
    out: AspectQuestions = []
    for n, m in enumerate(marks):
        end = marks[n + 1].start() if n + 1 < len(marks) else len(text)
        block = text[m.end():end]
        qm = _QUESTIONS_MARK.search(block)
        if qm:
            head, body = block[: qm.start()], block[qm.end():]
        else:
            head, _, body = block.strip().partition("\n")
        label = _clean_item(head.strip().splitlines()[0] if head.strip() else "")
        label = label.strip("*").strip()
        if not label:
            logger.warning("aspect block %d has no label; dropped", n + 1)
            continue
        questions = _question_items(body)
        if not questions:
            logger.warning("aspect %r has no questions; dropped", label)
            continue
        if q_init is not None and len(questions) > q_init:
            logger.warning("aspect %r has %d questions; keeping first %d", label, len(questions), q_init)
            questions = questions[:q_init]
        index = len(out) + 1
        out.append(
            (
                Aspect(label, index),
                [Question(q, index, j) for j, q in enumerate(questions, start=1)],
            )
        )
    if not out:
        raise EmptyAspectsError("no aspect with questions could be parsed", text)
    return out


def render_aq_block(aq: AspectQuestions) -> str:
    """Canonical text for an aspect/question listing; parses back losslessly."""
    lines = []
    for aspect, questions in aq:
        lines.append(f"(Coarse-level Aspect): {aspect.label}")
        lines.append("(Fine-level Questions):")
        lines.extend(f"- {q.text}" for q in questions)
    return "\n".join(lines)


def aq_from_knowledge(ks: KnowledgeSet) -> AspectQuestions:
    return [(a, [t.question for t in ks.triples_for(a.index)]) for a in ks.aspects]


# -- evidence / insight triples ------------------------------------------------

_EI_MARK = re.compile(
    r"(?:(?<=^)|(?<=[\s(,;\[]))(Question|Evidence|Insight|Answer|Q|E|I)\s*-?\s*(\d+)\s*:",
    re.IGNORECASE | re.MULTILINE,
)
_KIND = {"q": "Q", "question": "Q", "e": "E", "evidence": "E", "i": "I", "insight": "I", "answer": "I"}


def _tidy(segment: str) -> str:
    s = segment.strip().rstrip(",;").strip()
    while s.endswith(")") and s.count(")") > s.count("("):
        s = s[:-1].rstrip().rstrip(",;").strip()
    while s.startswith("(") and s.count("(") > s.count(")"):
        s = s[1:].lstrip()
    return s


def _parse_tuples(text: str) -> dict[int, dict[str, str]]:
    """Fallback for unlabelled ``(question, evidence, insight)`` tuples."""
    out = {}
    chunks = [c for c in re.split(r"\n\s*(?=\()|^\s*(?=\()", text, flags=re.MULTILINE) if c.strip()]
    n = 0
    for chunk in chunks:
        m = _PREFIX_RE.search(chunk) or _COL_KW.search(chunk)
        if not m:
            continue
        start = m.start()
        try:
            _, end = _scan_evidence(chunk[start:])
        except EvidenceParseError:
            continue
        n += 1
        out[n] = {
            "Q": _tidy(chunk[:start].lstrip().lstrip("(")),
            "E": chunk[start:start + end].strip(),
            "I": _tidy(chunk[start + end:].lstrip(" ,.")),
        }
    return out


def parse_ei_reply(text: str) -> dict[int, dict[str, str]]:
    """Map question number -> ``{"Q", "E", "I"}`` segments found in ``text``."""
    marks = list(_EI_MARK.finditer(text or ""))
    if not marks:
        return _parse_tuples(text or "")
    out: dict[int, dict[str, str]] = {}
    for n, m in enumerate(marks):
        end = marks[n + 1].start() if n + 1 < len(marks) else len(text)
        kind = _KIND[m.group(1).lower()]
        idx = int(m.group(2))
        value = _tidy(text[m.end():end])
        if value:
            out.setdefault(idx, {})[kind] = value
        else:
            out.setdefault(idx, {})
    return out


def render_questions(questions: Sequence[Question]) -> str:
    return "\n".join(f"Q-{n}: {q.text}" for n, q in enumerate(questions, start=1))


# -- stages ----------------------------------------------------------------------


def mine_aspects_questions(
    gateway: Gateway,
    t: Table,
    s: str,
    q_init: int | None = Q_INIT,
    prompt_dir=None,
    max_tokens: int | None = DEFAULT_MAX_TOKENS,
) -> AspectQuestions:
    if not s or not s.strip():
        raise ValueError("mining is summary-conditioned; reference summary is empty")
    template = load_template("mine_aq", prompt_dir).require("table", "summary")
    prompt = template.render(table=serialize_table(t, max_tokens).text, summary=s)
    reply = gateway.complete("teacher", prompt).completion
    return parse_aq_reply(reply, q_init)


def mine_evidence_insights(
    gateway: Gateway,
    t: Table,
    s: str,
    questions: Sequence[Question],
    prompt_dir=None,
    max_tokens: int | None = DEFAULT_MAX_TOKENS,
) -> list[KnowledgeTriple]:
    """Answer ``questions`` with evidence + insight, one triple per question.

    A reply answering a different number of questions is retried once with
    an explicit count reminder before :class:`QuestionCountMismatch` is
    raised.  Answers missing evidence or insight are dropped and logged;
    evidence that does not parse is kept raw-only.
    """
    questions = list(questions)
    if not questions:
        raise ValueError("no questions to answer")
    template = load_template("mine_ei", prompt_dir).require("table", "summary", "questions")
    prompt = template.render(
        table=serialize_table(t, max_tokens).text, summary=s, questions=render_questions(questions)
    )
    expected = len(questions)
    answers = parse_ei_reply(gateway.complete("teacher", prompt).completion)
    if sorted(answers) != list(range(1, expected + 1)):
        logger.warning("teacher answered %d of %d questions; retrying", len(answers), expected)
        reminder = (
            f"\n\nThere are exactly {expected} questions. Answer every one of them: "
            f"give exactly {expected} triples, Q-1 through Q-{expected}, each with E-n and I-n."
        )
        reply = gateway.complete("teacher", prompt + reminder).completion
        answers = parse_ei_reply(reply)
        if sorted(answers) != list(range(1, expected + 1)):
            raise QuestionCountMismatch(expected, len(answers), reply)

    triples = []
    for n, q in enumerate(questions, start=1):
        parts = answers[n]
        ev_text, insight = parts.get("E", ""), parts.get("I", "")
        if not ev_text or not insight:
            logger.warning(
                "answer to question %s lacks %s; dropped", q.text[:60], "evidence" if not ev_text else "insight"
            )
            continue
        try:
            evidence = parse_evidence(ev_text)
        except EvidenceParseError as exc:
            logger.warning("unparseable evidence %r (%s); kept raw-only", ev_text[:60], exc)
            evidence = None
        triples.append(KnowledgeTriple(q, evidence, Insight(insight), ev_text))
    return triples


def mine_record(
    gateway: Gateway,
    table_id: str,
    t: Table,
    s: str,
    q_init: int | None = Q_INIT,
    prompt_dir=None,
    max_tokens: int | None = DEFAULT_MAX_TOKENS,
) -> AugmentedRecord:
    aq = mine_aspects_questions(gateway, t, s, q_init, prompt_dir, max_tokens)
    questions = [q for _, qs in aq for q in qs]
    triples = mine_evidence_insights(gateway, t, s, questions, prompt_dir, max_tokens)
    ks = KnowledgeSet(tuple(a for a, _ in aq), tuple(triples))
    return AugmentedRecord(table_id, t, s, ks, ("mined",))
