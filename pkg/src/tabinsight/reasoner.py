"""Inference: the reasoner asks itself questions, answers each with cited cells,
then a summarizer writes from the collected insights.  The reasoner is any endpoint speaking the trained format."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import EIParseError, EvidenceParseError
from .knowledge import Insight, KnowledgeSet, KnowledgeTriple, Question, split_evidence, validate_evidence
from .prompts import load_template
from .table import DEFAULT_MAX_TOKENS, Table, serialize_table

logger = logging.getLogger(__name__)


def assemble_knowledge_block(ks: KnowledgeSet) -> str:
    """Insights grouped under their aspects, one ``- `` bullet per insight.

    An empty set gives an empty block.
    """
    sections = []
    for aspect in ks.aspects:
        bullets = ["- " + " ".join(t.insight.text.split()) for t in ks.triples_for(aspect.index)]
        if bullets:
            sections.append("\n".join([f"Aspect: {aspect.label}", *bullets]))
    return "\n\n".join(sections)


@dataclass
class ReasonerSettings:
    gate_evidence: bool = False
    max_questions: int | None = None  # per aspect; None = unlimited
    prompt_dir: str | None = None
    max_tokens: int | None = DEFAULT_MAX_TOKENS
    max_workers: int = 8
    reasoner: str = "reasoner"
    summarizer: str = "summarizer"


@dataclass
class InferenceResult:
    summary: str
    knowledge: KnowledgeSet
    trace: list[str] = field(default_factory=list)
    dropped: int = 0

    def to_json(self, table_id: str) -> dict:
        return {
            "table_id": table_id,
            "knowledge": self.knowledge.to_json(),
            "summary": self.summary,
            "trace": list(self.trace),
            "dropped": self.dropped,
        }


def _flat(t: Table, settings: ReasonerSettings) -> str:
    return serialize_table(t, settings.max_tokens).text


def generate_questions(gateway, t: Table, settings: ReasonerSettings | None = None, trace=None):
    """Ask the reasoner for aspects and questions (table only, no summary)."""
    from .miner import parse_aq_reply

    settings = settings or ReasonerSettings()
    prompt = load_template("reasoner_qg", settings.prompt_dir).require("table").render(table=_flat(t, settings))
    ex = gateway.complete(settings.reasoner, prompt)
    if trace is not None:
        trace.append(ex.fingerprint)
    return parse_aq_reply(ex.completion, q_init=settings.max_questions)


def generate_insight(gateway, t: Table, q: Question, settings: ReasonerSettings | None = None, trace=None):
    """Answer ``q``; returns a triple, or None when the evidence gate drops it."""
    settings = settings or ReasonerSettings()
    template = load_template("reasoner_ig", settings.prompt_dir).require("table", "question")
    ex = gateway.complete(settings.reasoner, template.render(table=_flat(t, settings), question=q.text))
    if trace is not None:
        trace.append(ex.fingerprint)
    reply = ex.completion.strip()
    try:
        evidence, insight = split_evidence(reply)
    except EvidenceParseError as exc:
        raise EIParseError(f"reply to {q.text!r} has no parseable evidence: {exc}", reply) from exc
    if not insight:
        raise EIParseError(f"reply to {q.text!r} has no insight after the evidence", reply)
    if settings.gate_evidence and not validate_evidence(evidence, t).valid:
        logger.info("evidence %r fails validation; triple dropped", evidence.raw[:60])
        return None
    return KnowledgeTriple(q, evidence, Insight(insight), evidence.raw)


def summarize(gateway, t: Table, knowledge_block: str, settings: ReasonerSettings | None = None, trace=None) -> str:
    settings = settings or ReasonerSettings()
    template = load_template("summarize", settings.prompt_dir).require("table", "knowledge")
    ex = gateway.complete(settings.summarizer, template.render(table=_flat(t, settings), knowledge=knowledge_block))
    if trace is not None:
        trace.append(ex.fingerprint)
    return ex.completion.strip()


def run_inference(gateway, t: Table, settings: ReasonerSettings | None = None) -> InferenceResult:
    """questions -> per-question insights -> knowledge block -> summary.

    The trace lists every exchange fingerprint in call order: one question
    generation, one call per question, one summarization.
    """
    settings = settings or ReasonerSettings()
    gateway.require(settings.reasoner, settings.summarizer)
    trace: list[str] = []
    aq = generate_questions(gateway, t, settings, trace)
    questions = [q for _, qs in aq for q in qs]

    slots: list[list[str]] = [[] for _ in questions]

    def answer(i):
        return generate_insight(gateway, t, questions[i], settings, slots[i])

    if len(questions) > 1 and settings.max_workers > 1:
        with ThreadPoolExecutor(max_workers=min(settings.max_workers, len(questions))) as pool:
            triples = list(pool.map(answer, range(len(questions))))
    else:
        triples = [answer(i) for i in range(len(questions))]
    for s in slots:
        trace.extend(s)

    kept = [tr for tr in triples if tr is not None]
    ks = KnowledgeSet(tuple(a for a, _ in aq), tuple(kept))
    summary = summarize(gateway, t, assemble_knowledge_block(ks), settings, trace)
    return InferenceResult(summary, ks, trace, dropped=len(triples) - len(kept))
