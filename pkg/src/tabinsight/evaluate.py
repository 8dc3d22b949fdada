from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyTextError, JoinError, MetricParseError
from .io import read_jsonl
from .metrics import (
    BLEU_SMOOTHING,
    METEOR_NAME,
    PAIRWISE_CRITERIA,
    SURFACE_METRICS,
    PairwiseTally,
    geval_insightfulness,
    pairwise_compare,
    sentence_faithfulness,
)
from .table import Table
from .text import TOKENIZER_VERSION

logger = logging.getLogger(__name__)

JUDGE_METRICS = ("geval", "gpt4_acc")


@dataclass
class EvalConfig:
    surface: tuple = ("rouge_l", "bleu", METEOR_NAME)
    judge: tuple = ()
    pairwise: tuple = ()
    prompt_dir: str | None = None

    def __post_init__(self):
        self.surface = tuple(self.surface)
        self.judge = tuple(self.judge)
        self.pairwise = tuple(self.pairwise)
        for m in self.surface:
            if m not in SURFACE_METRICS:
                raise ValueError(f"unknown surface metric {m!r}")
        for m in self.judge:
            if m not in JUDGE_METRICS:
                raise ValueError(f"unknown judge metric {m!r}")
        for c in self.pairwise:
            if c not in PAIRWISE_CRITERIA:
                raise ValueError(f"unknown pairwise criterion {c!r}")

    @property
    def needs_judge(self) -> bool:
        return bool(self.judge or self.pairwise)

    def to_json(self) -> dict:
        return {
            "surface": list(self.surface),
            "judge": list(self.judge),
            "pairwise": list(self.pairwise),
            "tokenizer": TOKENIZER_VERSION,
            "bleu_smoothing": BLEU_SMOOTHING,
            "gpt4_acc_aggregation": "mean of per-summary verified-sentence fractions",
        }


@dataclass
class MetricReport:
    config: dict
    per_example: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    pairwise: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict:
        columns: dict[str, list[float]] = {}
        for values in self.per_example.values():
            for metric, v in values.items():
                columns.setdefault(metric, []).append(v)
        return {m: statistics.fmean(vs) for m, vs in columns.items()}

    def fail(self, metric: str, example_id: str) -> None:
        self.failures.setdefault(metric, []).append(example_id)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "per_example": self.per_example,
            "aggregate": self.aggregate,
            "failures": {m: {"count": len(ids), "ids": ids} for m, ids in self.failures.items()},
            "pairwise": self.pairwise,
        }

    def to_text(self) -> str:
        agg = self.aggregate
        rows = [("metric", "mean", "n", "failed")]
        for metric in agg:
            n = sum(1 for v in self.per_example.values() if metric in v)
            rows.append((metric, f"{agg[metric]:.4f}", str(n), str(len(self.failures.get(metric, [])))))
        for crit, tally in self.pairwise.items():
            rows.append(
                (f"pairwise:{crit}", f"{tally['win_rate_a']:.2f}%", str(tally["wins_a"] + tally["wins_b"] + tally["ties"]), str(tally["failures"]))
            )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _index(records, what):
    out = {}
    for rec in records:
        out[str(rec["table_id"])] = rec
    return out


def evaluate_run(inference, gold, config: EvalConfig | None = None, gateway=None, baseline=None) -> MetricReport:
    """Score inference summaries against gold summaries joined on ``table_id``.

    ``inference``/``gold``/``baseline`` are JSONL paths or lists of dicts.
    Gold records need ``summary`` and, for judge metrics, ``table``.
    ``baseline`` (another inference file) enables pairwise comparison with
    the inference run as summary A.
    """
    config = config or EvalConfig()
    if config.needs_judge and gateway is None:
        raise ValueError("judge metrics need a gateway")
    load = lambda src: read_jsonl(src) if isinstance(src, (str, Path)) else list(src)
    preds = load(inference)
    gold_idx = _index(load(gold), "gold")
    missing = [str(p["table_id"]) for p in preds if str(p["table_id"]) not in gold_idx]
    if missing:
        raise JoinError(missing)
    base_idx = _index(load(baseline), "baseline") if baseline is not None else {}
    if config.pairwise:
        absent = [str(p["table_id"]) for p in preds if str(p["table_id"]) not in base_idx]
        if absent:
            raise JoinError(absent)

    report = MetricReport(config.to_json())
    tallies = {c: PairwiseTally() for c in config.pairwise}
    for pred in preds:
        tid = str(pred["table_id"])
        ref = gold_idx[tid]
        cand = pred.get("summary", "") or ""
        values = report.per_example.setdefault(tid, {})
        for name in config.surface:
            try:
                values[name] = SURFACE_METRICS[name](cand, ref["summary"])
            except EmptyTextError:
                report.fail(name, tid)
        if not config.needs_judge:
            continue
        table = Table.from_grid(ref["table"], source_id=tid)
        if "geval" in config.judge:
            score = geval_insightfulness(gateway, table, cand, prompt_dir=config.prompt_dir)
            if score is None:
                report.fail("geval", tid)
            else:
                values["geval"] = score
        if "gpt4_acc" in config.judge:
            try:
                values["gpt4_acc"] = sentence_faithfulness(gateway, table, cand, prompt_dir=config.prompt_dir)
            except (MetricParseError, EmptyTextError) as exc:
                logger.warning("gpt4_acc failed for %s: %s", tid, exc)
                report.fail("gpt4_acc", tid)
        for crit in config.pairwise:
            try:
                tallies[crit].add(pairwise_compare(gateway, table, cand, base_idx[tid].get("summary", ""), crit, prompt_dir=config.prompt_dir))
            except MetricParseError:
                tallies[crit].failures += 1
    report.pairwise = {c: t.to_json() for c, t in tallies.items()}
    return report
