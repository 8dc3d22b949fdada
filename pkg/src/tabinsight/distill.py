"""Training data for the reasoner and aggregation of query-focused summaries.

Two instruction-tuning tasks are emitted as JSONL records
``{task, instruction, input, output, meta}``:

* ``QG`` -- table in, aspect/question block out (one record per table);
* ``IG`` -- table plus one question in, evidence followed by insight out
  (one record per surviving triple).
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import MissingEvidenceError, StageOrderError
from .knowledge import AugmentedRecord, KnowledgeTriple, render_evidence
from .miner import aq_from_knowledge, render_aq_block
from .prompts import load_template
from .table import DEFAULT_MAX_TOKENS, Table, serialize_table

logger = logging.getLogger(__name__)

TASKS = ("QG", "IG")


@dataclass(frozen=True)
class TrainRecord:
    task: str
    instruction: str
    input: str
    output: str
    table_id: str
    aspect_index: int | None = None
    question_index: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        has_idx = self.aspect_index is not None and self.question_index is not None
        if self.task == "QG" and (self.aspect_index is not None or self.question_index is not None):
            raise ValueError("QG records carry no aspect/question index")
        if self.task == "IG" and not has_idx:
            raise ValueError("IG records need aspect and question indices")

    def to_json(self) -> dict:
        meta = {"table_id": self.table_id}
        if self.task == "IG":
            meta["aspect_index"] = self.aspect_index
            meta["question_index"] = self.question_index
        return {
            "task": self.task,
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "meta": meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainRecord":
        meta = obj.get("meta", {})
        return cls(
            obj["task"],
            obj["instruction"],
            obj["input"],
            obj["output"],
            meta.get("table_id", ""),
            meta.get("aspect_index"),
            meta.get("question_index"),
        )


def _instruction(name: str, prompt_dir) -> str:
    tmpl = load_template(name, prompt_dir)
    if tmpl.instruction is None:
        raise ValueError(f"template {name!r} has no instruction file")
    return tmpl.instruction


def _check_pruned(records: Sequence[AugmentedRecord]) -> None:
    for r in records:
        if r.stage != "pruned":
            raise StageOrderError(f"record {r.table_id} is at stage {r.stage!r}; expected pruned")


def emit_qg_records(dprime: Sequence[AugmentedRecord], prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS) -> list[TrainRecord]:
    _check_pruned(dprime)
    instruction = _instruction("reasoner_qg", prompt_dir)
    return [
        TrainRecord(
            "QG",
            instruction,
            serialize_table(r.table, max_tokens).text,
            render_aq_block(aq_from_knowledge(r.knowledge)),
            r.table_id,
        )
        for r in dprime
    ]


def ig_input(flat_table: str, question: str) -> str:
    return f"{flat_table}\n\nQuestions: {question}"


def ig_output(triple: KnowledgeTriple) -> str:
    if triple.evidence is None:
        raise MissingEvidenceError(f"triple {triple.key} has no parsed evidence")
    return f"{render_evidence(triple.evidence)} {triple.insight.text}"


@dataclass
class IGEmission:
    records: list = field(default_factory=list)
    skipped_raw_only: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def emit_ig_records(dprime: Sequence[AugmentedRecord], prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS) -> IGEmission:
    """One record per triple; raw-only triples are skipped and counted."""
    _check_pruned(dprime)
    instruction = _instruction("reasoner_ig", prompt_dir)
    out = IGEmission()
    for r in dprime:
        flat = serialize_table(r.table, max_tokens).text
        for t in r.knowledge.triples:
            try:
                output = ig_output(t)
            except MissingEvidenceError:
                out.skipped_raw_only += 1
                continue
            out.records.append(
                TrainRecord(
                    "IG",
                    instruction,
                    ig_input(flat, t.question.text),
                    output,
                    r.table_id,
                    t.question.aspect_index,
                    t.question.question_index,
                )
            )
    if out.skipped_raw_only:
        logger.info("skipped %d raw-only triples", out.skipped_raw_only)
    return out


def shuffle_interleave(qg: Iterable[TrainRecord], ig: Iterable[TrainRecord], seed: int) -> list[TrainRecord]:
    mixed = list(qg) + list(ig)
    random.Random(seed).shuffle(mixed)
    return mixed


def aggregate_reference_summaries(
    gateway,
    table: Table,
    query_summaries: Sequence[str],
    skip_single: bool = False,
    prompt_dir=None,
    max_tokens=DEFAULT_MAX_TOKENS,
    role: str = "judge",
) -> str:
    """Merge several query-focused summaries into one paragraph."""
    summaries = [s.strip() for s in query_summaries if s and s.strip()]
    if not summaries:
        raise ValueError("at least one query summary is required")
    if skip_single and len(summaries) == 1:
        return summaries[0]
    template = load_template("aggregate", prompt_dir).require("table", "query_summaries")
    listing = "\n".join(f"{n}. {s}" for n, s in enumerate(summaries, start=1))
    prompt = template.render(table=serialize_table(table, max_tokens).text, query_summaries=listing)
    return " ".join(gateway.complete(role, prompt).completion.split())
