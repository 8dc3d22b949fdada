"""Aspects, questions, cell evidence and insights mined from a table.

Evidence uses a small reference language::

    [The relevant columns and rows for the Question is ]col(<names>)[, row(<ints>)][.]

where either list may be ``all``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import EvidenceParseError, KnowledgeError, StageOrderError
from .table import Table

logger = logging.getLogger(__name__)

__all__ = [
    "ALL",
    "EVIDENCE_PREFIX",
    "STAGES",
    "Aspect",
    "Question",
    "CellEvidence",
    "Insight",
    "KnowledgeTriple",
    "KnowledgeSet",
    "AugmentedRecord",
    "ValidationReport",
    "parse_evidence",
    "split_evidence",
    "render_evidence",
    "validate_evidence",
    "normalize_header",
]

EVIDENCE_PREFIX = "The relevant columns and rows for the Question is "

STAGES = ("mined", "verified", "scored", "pruned")

FACTUALITY = ("unverified", "entailed", "refuted")


class _AllSentinel:
    """Marker for ``col(all)`` / ``row(all)``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ALL"

    def __reduce__(self):
        return (_AllSentinel, ())


ALL = _AllSentinel()


@dataclass(frozen=True)
class Aspect:
    label: str
    index: int

    def __post_init__(self):
        if not self.label.strip():
            raise KnowledgeError("aspect label is empty")
        if self.index < 1:
            raise KnowledgeError("aspect index is 1-based")


@dataclass(frozen=True)
class Question:
    text: str
    aspect_index: int
    question_index: int

    def __post_init__(self):
        if not self.text.strip():
            raise KnowledgeError("question text is empty")


@dataclass(frozen=True)
class CellEvidence:
    """Cited cells: header names and 1-based row indices (or ALL).

    ``raw`` is the text the evidence was parsed from and does not take part
    in equality.
    """

    columns: tuple[str, ...] | _AllSentinel
    rows: tuple[int, ...] | _AllSentinel = ()
    raw: str = field(default="", compare=False)

    def __post_init__(self):
        if self.columns is not ALL:
            object.__setattr__(self, "columns", tuple(self.columns))
        if self.rows is not ALL:
            rows = tuple(self.rows)
            if any(not isinstance(r, int) or r < 1 for r in rows):
                raise KnowledgeError(f"row indices must be positive integers: {rows}")
            if len(set(rows)) != len(rows):
                raise KnowledgeError(f"duplicate row indices: {rows}")
            object.__setattr__(self, "rows", rows)
        if self.columns is not ALL and self.rows is not ALL and not self.columns and not self.rows:
            raise KnowledgeError("evidence references no cells")

    def to_json(self) -> dict:
        return {
            "cols": "all" if self.columns is ALL else list(self.columns),
            "rows": "all" if self.rows is ALL else list(self.rows),
        }

    @classmethod
    def from_json(cls, obj: dict, raw: str = "") -> "CellEvidence":
        cols = obj["cols"]
        rows = obj["rows"]
        return cls(
            ALL if cols == "all" else tuple(cols),
            ALL if rows == "all" else tuple(int(r) for r in rows),
            raw,
        )


@dataclass(frozen=True)
class Insight:
    text: str
    factuality: str = "unverified"
    importance_score: float | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise KnowledgeError("insight text is empty")
        if self.factuality not in FACTUALITY:
            raise KnowledgeError(f"unknown factuality label {self.factuality!r}")


@dataclass(frozen=True)
class KnowledgeTriple:
    """One (question, evidence, insight) answer.

    ``evidence`` is None for raw-only triples whose evidence text did not
    parse; ``evidence_raw`` always holds the model's text.
    """

    question: Question
    evidence: CellEvidence | None
    insight: Insight
    evidence_raw: str = ""

    @property
    def key(self) -> tuple[int, int]:
        return (self.question.aspect_index, self.question.question_index)

    @property
    def raw_only(self) -> bool:
        return self.evidence is None


@dataclass(frozen=True)
class KnowledgeSet:
    aspects: tuple[Aspect, ...] = ()
    triples: tuple[KnowledgeTriple, ...] = ()

    def __post_init__(self):
        aspects = tuple(self.aspects)
        triples = tuple(self.triples)
        known = {a.index for a in aspects}
        if len(known) != len(aspects):
            raise KnowledgeError("duplicate aspect index")
        seen = set()
        for t in triples:
            if t.question.aspect_index not in known:
                raise KnowledgeError(
                    f"triple refers to unknown aspect {t.question.aspect_index}"
                )
            if t.key in seen:
                raise KnowledgeError(f"duplicate question index {t.key}")
            seen.add(t.key)
        # keep triples grouped by aspect, in aspect order
        order = {a.index: n for n, a in enumerate(aspects)}
        triples = tuple(sorted(triples, key=lambda t: order[t.question.aspect_index]))
        object.__setattr__(self, "aspects", aspects)
        object.__setattr__(self, "triples", triples)

    def __len__(self):
        return len(self.triples)

    def triples_for(self, aspect_index: int) -> list[KnowledgeTriple]:
        return [t for t in self.triples if t.question.aspect_index == aspect_index]

    def without(self, key: tuple[int, int]) -> "KnowledgeSet":
        """Copy with the triple ``key`` removed; aspects are kept."""
        return KnowledgeSet(self.aspects, tuple(t for t in self.triples if t.key != key))

    def with_triples(self, triples: Iterable[KnowledgeTriple], drop_empty_aspects=True) -> "KnowledgeSet":
        triples = tuple(triples)
        aspects = self.aspects
        if drop_empty_aspects:
            used = {t.question.aspect_index for t in triples}
            aspects = tuple(a for a in aspects if a.index in used)
        return KnowledgeSet(aspects, triples)

    def to_json(self) -> dict:
        return {
            "aspects": [{"index": a.index, "label": a.label} for a in self.aspects],
            "triples": [
                {
                    "aspect": t.question.aspect_index,
                    "qidx": t.question.question_index,
                    "question": t.question.text,
                    "evidence_raw": t.evidence_raw,
                    "evidence": None if t.evidence is None else t.evidence.to_json(),
                    "insight": t.insight.text,
                    "factuality": t.insight.factuality,
                    "score": t.insight.importance_score,
                }
                for t in self.triples
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KnowledgeSet":
        aspects = tuple(Aspect(a["label"], int(a["index"])) for a in obj.get("aspects", []))
        triples = []
        for t in obj.get("triples", []):
            raw = t.get("evidence_raw", "")
            ev = t.get("evidence")
            triples.append(
                KnowledgeTriple(
                    Question(t["question"], int(t["aspect"]), int(t["qidx"])),
                    None if ev is None else CellEvidence.from_json(ev, raw),
                    Insight(t["insight"], t.get("factuality", "unverified"), t.get("score")),
                    raw,
                )
            )
        return cls(aspects, tuple(triples))


@dataclass(frozen=True)
class AugmentedRecord:
    """A table, its reference summary and the knowledge mined for it."""

    table_id: str
    table: Table
    reference_summary: str
    knowledge: KnowledgeSet = field(default_factory=KnowledgeSet)
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        prov = tuple(self.provenance)
        positions = []
        for tag in prov:
            if tag not in STAGES:
                raise StageOrderError(f"unknown provenance tag {tag!r}")
            positions.append(STAGES.index(tag))
        if positions != sorted(set(positions)):
            raise StageOrderError(f"provenance out of pipeline order: {prov}")
        object.__setattr__(self, "provenance", prov)

    @property
    def stage(self) -> str | None:
        return self.provenance[-1] if self.provenance else None

    def advance(self, tag: str, knowledge: KnowledgeSet | None = None) -> "AugmentedRecord":
        prov = self.provenance if self.stage == tag else self.provenance + (tag,)
        return replace(self, knowledge=self.knowledge if knowledge is None else knowledge, provenance=prov)

    def to_json(self) -> dict:
        return {
            "table_id": self.table_id,
            "table": self.table.to_grid(),
            "summary": self.reference_summary,
            "knowledge": self.knowledge.to_json(),
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AugmentedRecord":
        table_id = str(obj["table_id"])
        return cls(
            table_id,
            Table.from_grid(obj["table"], source_id=table_id),
            obj.get("summary", "") or "",
            KnowledgeSet.from_json(obj.get("knowledge") or {}),
            tuple(obj.get("provenance", ())),
        )


# -- evidence language ---------------------------------------------------------

_PREFIX_RE = re.compile(
    r"\s*the\s+relevant\s+columns?\s+(?:and|&)\s+rows?\s+for\s+the\s+questions?\s+(?:is|are)\s*:?\s*",
    re.IGNORECASE,
)
_COL_KW = re.compile(r"\s*(?:columns?|cols?)\s*\(", re.IGNORECASE)
_ROW_KW = re.compile(r"\s*,?\s*(?:and\s+)?rows?\s*\(", re.IGNORECASE)


def _scan_group(text: str, start: int) -> tuple[str, int]:
    """Return the content of a parenthesised group opened just before ``start``."""
    depth = 1
    i = start
    while i < len(text):
        ch = text[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return text[start:i], i + 1
        i += 1
    raise EvidenceParseError(start, "unclosed parenthesis")


def _split_top_level(body: str) -> list[str]:
    parts, depth, buf = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return [p.strip() for p in parts]


def _scan_evidence(text: str) -> tuple[CellEvidence, int]:
    pos = 0
    m = _PREFIX_RE.match(text)
    if m:
        pos = m.end()
    m = _COL_KW.match(text, pos)
    if not m:
        raise EvidenceParseError(pos, "expected 'col('")
    body, pos_after = _scan_group(text, m.end())
    items = _split_top_level(body)
    if len(items) == 1 and items[0].lower() == "all":
        columns = ALL
    elif not any(items):
        raise EvidenceParseError(m.end(), "empty column list")
    elif any(not it for it in items):
        raise EvidenceParseError(m.end(), "empty column name")
    elif any(it.lower() == "all" for it in items):
        columns = ALL
    else:
        columns = tuple(items)
    pos = pos_after

    rows = ()
    m = _ROW_KW.match(text, pos)
    if m:
        body, pos_after = _scan_group(text, m.end())
        items = _split_top_level(body)
        if any(it.lower() == "all" for it in items):
            rows = ALL
        else:
            if not any(items):
                raise EvidenceParseError(m.end(), "empty row list")
            values = []
            for it in items:
                if not re.fullmatch(r"\d+", it):
                    raise EvidenceParseError(m.end(), f"row index {it!r} is not a positive integer")
                n = int(it)
                if n < 1:
                    raise EvidenceParseError(m.end(), "row indices are 1-based")
                if n in values:
                    logger.warning("duplicate row index %d in evidence %r dropped", n, text)
                    continue
                values.append(n)
            rows = tuple(values)
        pos = pos_after
    return CellEvidence(columns, rows, text[:pos].strip()), pos


def parse_evidence(text: str) -> CellEvidence:
    """Parse a complete evidence string.  A trailing period is tolerated."""
    evidence, pos = _scan_evidence(text)
    rest = text[pos:].strip()
    if rest not in ("", "."):
        raise EvidenceParseError(pos, f"unexpected trailing text {rest[:20]!r}")
    return replace(evidence, raw=text)


_INSIGHT_LABEL = re.compile(r"^\s*(?:insight|answer)\s*(?:-\s*\w+)?\s*:\s*", re.IGNORECASE)


def split_evidence(text: str) -> tuple[CellEvidence, str]:
    """Split ``<evidence>. <insight>`` into its parts."""
    evidence, pos = _scan_evidence(text)
    rest = text[pos:].lstrip()
    if rest.startswith("."):
        rest = rest[1:]
    rest = _INSIGHT_LABEL.sub("", rest.strip(), count=1)
    return evidence, rest.strip()


def render_evidence(e: CellEvidence) -> str:
    cols = "all" if e.columns is ALL else ", ".join(e.columns)
    out = f"{EVIDENCE_PREFIX}col({cols})"
    if e.rows is ALL:
        out += ", row(all)"
    elif e.rows:
        out += ", row(" + ", ".join(str(r) for r in e.rows) + ")"
    return out + "."


# -- validation ------------------------------------------------------------------


def normalize_header(name: str) -> str:
    return " ".join(name.lower().split())


@dataclass(frozen=True)
class ValidationReport:
    """Per-reference outcome; a None header / False flag marks a failure."""

    columns: tuple[tuple[str, str | None], ...]
    rows: tuple[tuple[int, bool], ...]

    @property
    def unmatched(self) -> list[str]:
        return [name for name, hit in self.columns if hit is None]

    @property
    def out_of_range(self) -> list[int]:
        return [r for r, ok in self.rows if not ok]

    @property
    def valid(self) -> bool:
        return not self.unmatched and not self.out_of_range


def validate_evidence(e: CellEvidence, t: Table) -> ValidationReport:
    """Check that every referenced header and row exists in ``t``.

    Headers match on equality after lower-casing and collapsing whitespace;
    there is deliberately no substring or fuzzy matching.
    """
    lookup = {}
    for h in t.column_headers:
        lookup.setdefault(normalize_header(h), h)
    cols = () if e.columns is ALL else tuple(
        (name, lookup.get(normalize_header(name))) for name in e.columns
    )
    rows = () if e.rows is ALL else tuple((r, 1 <= r <= t.n_rows) for r in e.rows)
    return ValidationReport(cols, rows)
