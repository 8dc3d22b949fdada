"""Table summarization through mined aspect/question/evidence/insight knowledge."""

from .config import Config, load_config
from .distill import (
    TrainRecord,
    aggregate_reference_summaries,
    emit_ig_records,
    emit_qg_records,
    shuffle_interleave,
)
from .estimators import (
    FactualityFilter,
    ImportanceScorer,
    KnowledgeAugmentedSummarizer,
    KnowledgeMiner,
    TopKPruner,
    TrainingDataEmitter,
)
from .evaluate import EvalConfig, MetricReport, evaluate_run
from .gateway import BackendProfile, Gateway, ScriptedBackend, Similarity, cosine_similarity
from .knowledge import (
    ALL,
    Aspect,
    AugmentedRecord,
    CellEvidence,
    Insight,
    KnowledgeSet,
    KnowledgeTriple,
    Question,
    parse_evidence,
    render_evidence,
    validate_evidence,
)
from .metrics import bleu, meteor_basic, rouge_l_f1
from .miner import mine_record, parse_aq_reply, parse_ei_reply
from .quality import FilterReport, QualityConfig, enhance, importance_scores, prune_top_k, verify_factuality
from .reasoner import ReasonerSettings, run_inference
from .table import FlatTable, Table, ingest_table, parse_flat_table, serialize_table

__version__ = "0.1.0"

__all__ = [
    "ALL",
    "Aspect",
    "AugmentedRecord",
    "BackendProfile",
    "CellEvidence",
    "Config",
    "EvalConfig",
    "FactualityFilter",
    "FilterReport",
    "FlatTable",
    "Gateway",
    "ImportanceScorer",
    "Insight",
    "KnowledgeAugmentedSummarizer",
    "KnowledgeMiner",
    "KnowledgeSet",
    "KnowledgeTriple",
    "MetricReport",
    "QualityConfig",
    "Question",
    "ReasonerSettings",
    "ScriptedBackend",
    "Similarity",
    "Table",
    "TopKPruner",
    "TrainRecord",
    "TrainingDataEmitter",
    "aggregate_reference_summaries",
    "bleu",
    "cosine_similarity",
    "emit_ig_records",
    "emit_qg_records",
    "enhance",
    "evaluate_run",
    "importance_scores",
    "load_config",
    "ingest_table",
    "meteor_basic",
    "mine_record",
    "parse_aq_reply",
    "parse_ei_reply",
    "parse_evidence",
    "parse_flat_table",
    "prune_top_k",
    "render_evidence",
    "rouge_l_f1",
    "run_inference",
    "serialize_table",
    "shuffle_interleave",
    "validate_evidence",
    "verify_factuality",
]
