"""Knowledge quality enhancement: critic filtering, leave-one-out importance
scoring and per-aspect top-k pruning."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .errors import StageOrderError, UnscoredTripleError
from .gateway import Gateway, Similarity
from .knowledge import AugmentedRecord, KnowledgeSet, KnowledgeTriple
from .prompts import load_template
from .reasoner import assemble_knowledge_block
from .table import DEFAULT_MAX_TOKENS, serialize_table

logger = logging.getLogger(__name__)

ScoreTable = dict  # (aspect_index, question_index) -> float


@dataclass(frozen=True)
class QualityConfig:
    k: int = 3
    scoring_summarizer: str = "summarizer"
    sim_backend: str = "embedding-cosine"
    ablation_prompt: str = "summarize"
    embedder: str = "embedder"
    critic: str = "critic"
    prompt_dir: str | None = None
    max_tokens: int | None = DEFAULT_MAX_TOKENS
    max_workers: int = 8

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k!r}")


@dataclass
class FilterReport:
    """Critic outcomes; ``per_aspect`` maps aspect label -> [checked, refuted]."""

    checked: int = 0
    refuted: int = 0
    per_aspect: dict = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.refuted / self.checked if self.checked else 0.0

    @property
    def percent(self) -> float:
        return 100.0 * self.rate

    def merge(self, other: "FilterReport") -> "FilterReport":
        self.checked += other.checked
        self.refuted += other.refuted
        for label, (c, r) in other.per_aspect.items():
            tot = self.per_aspect.setdefault(label, [0, 0])
            tot[0] += c
            tot[1] += r
        return self

    def to_json(self) -> dict:
        return {
            "checked": self.checked,
            "refuted": self.refuted,
            "filter_rate": self.rate,
            "filter_percent": round(self.percent, 6),
            "per_aspect": {k: {"checked": c, "refuted": r} for k, (c, r) in self.per_aspect.items()},
        }


def _require_stage(record: AugmentedRecord, *allowed: str) -> None:
    if record.stage not in allowed:
        raise StageOrderError(
            f"record {record.table_id} is at stage {record.stage!r}; expected {' or '.join(allowed)}"
        )


def _pmap(fn, items, max_workers):
    items = list(items)
    if len(items) <= 1 or max_workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
        return list(pool.map(fn, items))


def verify_factuality(
    gateway: Gateway, record: AugmentedRecord, cfg: QualityConfig = QualityConfig()
) -> tuple[AugmentedRecord, FilterReport]:
    """Drop insights the critic refutes; survivors are marked entailed.

    Insight text is never modified.  Aspects left empty are removed.
    """
    _require_stage(record, "mined")
    flat = serialize_table(record.table, cfg.max_tokens).text
    ks = record.knowledge
    verdicts = _pmap(
        lambda t: gateway.classify_factuality(cfg.critic, flat, t.insight.text, cfg.prompt_dir).label,
        ks.triples,
        cfg.max_workers,
    )
    report = FilterReport()
    labels = {a.index: a.label for a in ks.aspects}
    kept = []
    for triple, label in zip(ks.triples, verdicts):
        counts = report.per_aspect.setdefault(labels[triple.question.aspect_index], [0, 0])
        counts[0] += 1
        report.checked += 1
        if label == "refuted":
            counts[1] += 1
            report.refuted += 1
            continue
        kept.append(replace(triple, insight=replace(triple.insight, factuality="entailed")))
    return record.advance("verified", ks.with_triples(kept)), report


def ablation_summary(gateway, record, knowledge: KnowledgeSet, cfg: QualityConfig) -> str:
    template = load_template(cfg.ablation_prompt, cfg.prompt_dir).require("table", "knowledge")
    prompt = template.render(
        table=serialize_table(record.table, cfg.max_tokens).text,
        knowledge=assemble_knowledge_block(knowledge),
    )
    return gateway.complete(cfg.scoring_summarizer, prompt).completion.strip()


def importance_scores(
    gateway: Gateway,
    record: AugmentedRecord,
    cfg: QualityConfig = QualityConfig(),
    sim: Callable[[str, str], float] | None = None,
) -> ScoreTable:
    """Leave-one-out importance over the record's full insight list.

    For each insight the summarizer writes a summary from all *other*
    insights; the score is the negative similarity of that summary to the
    reference.  One summarizer call per insight.
    """
    _require_stage(record, "verified", "scored")
    ks = record.knowledge
    if not ks.triples:
        raise ValueError(f"record {record.table_id} has no insights to score")
    if sim is None:
        sim = Similarity(cfg.sim_backend, gateway, cfg.embedder)
    reference = record.reference_summary

    def score(triple: KnowledgeTriple) -> float:
        s_hat = ablation_summary(gateway, record, ks.without(triple.key), cfg)
        return -sim(s_hat, reference)

    values = _pmap(score, ks.triples, cfg.max_workers)
    return {t.key: v for t, v in zip(ks.triples, values)}


def apply_scores(record: AugmentedRecord, scores: Mapping) -> AugmentedRecord:
    triples = []
    for t in record.knowledge.triples:
        if t.key not in scores:
            raise UnscoredTripleError(f"record {record.table_id}: triple {t.key} has no score")
        triples.append(replace(t, insight=replace(t.insight, importance_score=float(scores[t.key]))))
    return record.advance("scored", KnowledgeSet(record.knowledge.aspects, tuple(triples)))


def select_top_k(triples, scores: Mapping, k: int) -> list:
    """Highest scores first; ties keep (aspect, question) order."""
    ranked = sorted(triples, key=lambda t: (-scores[t.key], t.key))
    return ranked[:k]


def prune_top_k(record: AugmentedRecord, scores: Mapping | None, cfg: QualityConfig = QualityConfig()) -> AugmentedRecord:
    """Keep the ``k`` most important insights of every aspect.

    A larger score means removing the insight moved the ablation summary
    further from the reference, so it is kept first.  ``scores=None`` reads
    the scores stored on the record.
    """
    _require_stage(record, "verified", "scored")
    ks = record.knowledge
    if scores is None:
        scores = {t.key: t.insight.importance_score for t in ks.triples}
    missing = [t.key for t in ks.triples if scores.get(t.key) is None]
    if missing:
        raise UnscoredTripleError(f"record {record.table_id}: unscored triples {missing}")
    scored = apply_scores(record, scores) if record.stage != "scored" else record
    kept = []
    for aspect in scored.knowledge.aspects:
        kept.extend(select_top_k(scored.knowledge.triples_for(aspect.index), scores, cfg.k))
    return scored.advance("pruned", scored.knowledge.with_triples(kept))


def enhance(
    gateway: Gateway,
    record: AugmentedRecord,
    cfg: QualityConfig = QualityConfig(),
    sim=None,
) -> tuple[AugmentedRecord | None, FilterReport]:
    """verify -> score -> prune.  Returns ``(None, report)`` when nothing
    survives verification; an already-pruned record is returned unchanged."""
    if record.stage == "pruned":
        return record, FilterReport()
    verified, report = verify_factuality(gateway, record, cfg)
    if not verified.knowledge.triples:
        logger.info("record %s has no insights after verification; dropped", record.table_id)
        return None, report
    scores = importance_scores(gateway, verified, cfg, sim)
    return prune_top_k(verified, scores, cfg), report
