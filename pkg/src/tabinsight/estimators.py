"""scikit-learn style wrappers around the pipeline stages.

Every stage is stateless: ``fit`` only validates its input and records how
many items it saw, and ``transform`` maps records to records.  The wrappers
compose with :class:`sklearn.pipeline.Pipeline`::

    Pipeline([
        ("mine", KnowledgeMiner(gw)),
        ("verify", FactualityFilter(gw)),
        ("score", ImportanceScorer(gw)),
        ("prune", TopKPruner(k=3)),
    ]).fit_transform(corpus)
"""

from __future__ import annotations

from typing import Iterable, Mapping

from sklearn.base import BaseEstimator, TransformerMixin

from .distill import emit_ig_records, emit_qg_records, shuffle_interleave
from .errors import StageOrderError
from .knowledge import AugmentedRecord
from .miner import Q_INIT, mine_record
from .quality import (
    FilterReport,
    QualityConfig,
    apply_scores,
    importance_scores,
    prune_top_k,
    verify_factuality,
)
from .reasoner import ReasonerSettings, run_inference
from .table import DEFAULT_MAX_TOKENS, Table, parse_flat_table


# -- input validation ----------------------------------------------------------


def check_table(t, table_id: str = "") -> Table:
    if isinstance(t, Table):
        return t
    if isinstance(t, str):
        return parse_flat_table(t, table_id)
    if isinstance(t, Mapping):
        return Table.from_grid(t, source_id=table_id)
    raise TypeError(f"cannot interpret {type(t).__name__} as a table")


def check_tables(X) -> list[Table]:
    """Tables, grid dicts, flat strings or corpus records ``{table_id, table}``."""
    out = []
    for i, item in enumerate(_as_list(X)):
        if isinstance(item, Mapping) and "table" in item:
            out.append(check_table(item["table"], str(item.get("table_id", i))))
        elif isinstance(item, AugmentedRecord):
            out.append(item.table)
        else:
            out.append(check_table(item, str(i)))
    return out


def check_corpus(X) -> list[tuple[str, Table, str]]:
    """Corpus records as ``(table_id, table, reference summary)`` triples."""
    out = []
    for i, item in enumerate(_as_list(X)):
        if isinstance(item, AugmentedRecord):
            out.append((item.table_id, item.table, item.reference_summary))
        elif isinstance(item, Mapping):
            tid = str(item.get("table_id", i))
            out.append((tid, check_table(item["table"], tid), item.get("summary") or ""))
        elif isinstance(item, tuple) and len(item) == 3:
            tid, t, s = item
            out.append((str(tid), check_table(t, str(tid)), s))
        else:
            raise TypeError(f"item {i}: expected a corpus record, got {type(item).__name__}")
    return out


def check_records(X, *stages: str) -> list[AugmentedRecord]:
    """Augmented records (objects or JSON dicts), optionally at given stages."""
    out = []
    for item in _as_list(X):
        rec = item if isinstance(item, AugmentedRecord) else AugmentedRecord.from_json(item)
        if stages and rec.stage not in stages:
            raise StageOrderError(f"record {rec.table_id} is at stage {rec.stage!r}; expected one of {stages}")
        out.append(rec)
    return out


def _as_list(X) -> list:
    if isinstance(X, (str, bytes, Mapping)):
        raise TypeError("expected a sequence of items, not a single item")
    return list(X)


# -- stages --------------------------------------------------------------------


class _Stage(BaseEstimator, TransformerMixin):
    _check = staticmethod(check_records)
    _stages: tuple = ()

    def _validate(self, X):
        return self._check(X, *self._stages) if self._check is check_records else self._check(X)

    def fit(self, X, y=None):
        self.n_records_in_ = len(self._validate(X))
        return self


class KnowledgeMiner(_Stage):
    """Corpus records -> mined :class:`AugmentedRecord` objects."""

    _check = staticmethod(check_corpus)

    def __init__(self, gateway=None, q_init=Q_INIT, prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS):
        self.gateway = gateway
        self.q_init = q_init
        self.prompt_dir = prompt_dir
        self.max_tokens = max_tokens

    def transform(self, X):
        return [
            mine_record(self.gateway, tid, t, s, self.q_init, self.prompt_dir, self.max_tokens)
            for tid, t, s in check_corpus(X)
        ]


class _QualityStage(_Stage):
    def __init__(
        self,
        gateway=None,
        k=3,
        sim_backend="embedding-cosine",
        prompt_dir=None,
        max_tokens=DEFAULT_MAX_TOKENS,
        max_workers=8,
    ):
        self.gateway = gateway
        self.k = k
        self.sim_backend = sim_backend
        self.prompt_dir = prompt_dir
        self.max_tokens = max_tokens
        self.max_workers = max_workers

    def _config(self) -> QualityConfig:
        return QualityConfig(
            k=self.k,
            sim_backend=self.sim_backend,
            prompt_dir=self.prompt_dir,
            max_tokens=self.max_tokens,
            max_workers=self.max_workers,
        )

    def fit(self, X, y=None):
        self._config()
        return super().fit(X, y)


class FactualityFilter(_QualityStage):
    """Drops refuted insights; records left empty are dropped too.

    ``filter_report_`` holds the critic counts of the last ``transform``.
    """

    _stages = ("mined",)

    def transform(self, X):
        cfg = self._config()
        report = FilterReport()
        out = []
        for rec in check_records(X, *self._stages):
            verified, r = verify_factuality(self.gateway, rec, cfg)
            report.merge(r)
            if verified.knowledge.triples:
                out.append(verified)
        self.filter_report_ = report
        return out


class ImportanceScorer(_QualityStage):
    """Attaches leave-one-out importance scores to every insight."""

    _stages = ("verified",)

    def transform(self, X):
        cfg = self._config()
        return [apply_scores(r, importance_scores(self.gateway, r, cfg)) for r in check_records(X, *self._stages)]


class TopKPruner(_QualityStage):
    """Keeps the ``k`` highest-scored insights of each aspect."""

    _stages = ("scored",)

    def __init__(self, k=3):
        self.k = k

    def _config(self) -> QualityConfig:
        return QualityConfig(k=self.k)

    def transform(self, X):
        cfg = self._config()
        return [prune_top_k(r, None, cfg) for r in check_records(X, *self._stages)]


class TrainingDataEmitter(_Stage):
    """Pruned records -> shuffled QG + IG training records.

    ``n_qg_``, ``n_ig_`` and ``skipped_raw_only_`` are set by ``transform``.
    """

    _stages = ("pruned",)

    def __init__(self, seed=0, prompt_dir=None, max_tokens=DEFAULT_MAX_TOKENS):
        self.seed = seed
        self.prompt_dir = prompt_dir
        self.max_tokens = max_tokens

    def transform(self, X):
        recs = check_records(X, *self._stages)
        qg = emit_qg_records(recs, self.prompt_dir, self.max_tokens)
        ig = emit_ig_records(recs, self.prompt_dir, self.max_tokens)
        self.n_qg_, self.n_ig_, self.skipped_raw_only_ = len(qg), len(ig), ig.skipped_raw_only
        return shuffle_interleave(qg, ig.records, self.seed)


class KnowledgeAugmentedSummarizer(BaseEstimator):
    """Question-then-answer summarization with a tuned reasoner.

    ``predict`` returns summaries; ``infer`` returns the full results with
    the generated knowledge and call trace.
    """

    def __init__(self, gateway=None, gate_evidence=False, max_questions=None, prompt_dir=None,
                 max_tokens=DEFAULT_MAX_TOKENS, max_workers=8):
        self.gateway = gateway
        self.gate_evidence = gate_evidence
        self.max_questions = max_questions
        self.prompt_dir = prompt_dir
        self.max_tokens = max_tokens
        self.max_workers = max_workers

    def fit(self, X=None, y=None):
        if X is not None:
            self.n_records_in_ = len(check_tables(X))
        return self

    def _settings(self) -> ReasonerSettings:
        return ReasonerSettings(
            gate_evidence=self.gate_evidence,
            max_questions=self.max_questions,
            prompt_dir=self.prompt_dir,
            max_tokens=self.max_tokens,
            max_workers=self.max_workers,
        )

    def infer(self, X: Iterable) -> list:
        settings = self._settings()
        return [run_inference(self.gateway, t, settings) for t in check_tables(X)]

    def predict(self, X: Iterable) -> list[str]:
        return [r.summary for r in self.infer(X)]


__all__ = [
    "FactualityFilter",
    "ImportanceScorer",
    "KnowledgeAugmentedSummarizer",
    "KnowledgeMiner",
    "TopKPruner",
    "TrainingDataEmitter",
    "check_corpus",
    "check_records",
    "check_table",
    "check_tables",
]
