from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabinsight.errors import StageOrderError, UnscoredTripleError
from tabinsight.gateway.backends import concat_knowledge_responder, section
from tabinsight.quality import (
    FilterReport,
    QualityConfig,
    enhance,
    importance_scores,
    prune_top_k,
    select_top_k,
    verify_factuality,
)

from conftest import make_gateway, scripted
from scripted_corpus import SEASON_KNOWLEDGE, SEASON_SUMMARY, build_record, critic_rules

F1 = QualityConfig(sim_backend="token-f1", max_workers=1)


def quality_gateway(refuted=(), summarizer="concat-knowledge", embedder="hash-embed"):
    return make_gateway(
        {
            "critic": scripted(critic_rules(list(refuted)), responder="entail-all"),
            "summarizer": scripted(responder=summarizer),
            "embedder": scripted(embedder=embedder),
        }
    )


def naive_f1(a: str, b: str) -> float:
    import re

    ta = re.findall(r"[a-z0-9]+", a.lower())
    tb = re.findall(r"[a-z0-9]+", b.lower())
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    pool = list(tb)
    overlap = 0
    for tok in ta:
        if tok in pool:
            pool.remove(tok)
            overlap += 1
    if not overlap:
        return 0.0
    p, r = overlap / len(ta), overlap / len(tb)
    return 2 * p * r / (p + r)


# -- factuality filter ---------------------------------------------------------


def test_refuting_one_of_ten_keeps_nine():
    rec = build_record(SEASON_KNOWLEDGE)
    second = SEASON_KNOWLEDGE["Match Results"][1][2]
    verified, report = verify_factuality(quality_gateway([second]), rec, F1)
    assert len(verified.knowledge.triples) == 9
    assert second not in [t.insight.text for t in verified.knowledge.triples]
    assert (report.checked, report.refuted) == (10, 1)
    assert report.per_aspect == {"Match Results": [5, 1], "Attendance": [5, 0]}
    assert report.percent == pytest.approx(10.0)
    assert verified.provenance == ("mined", "verified")


def test_survivors_are_entailed_and_unchanged():
    rec = build_record(SEASON_KNOWLEDGE)
    verified, _ = verify_factuality(quality_gateway(), rec, F1)
    before = [t.insight.text for t in rec.knowledge.triples]
    assert [t.insight.text for t in verified.knowledge.triples] == before
    assert {t.insight.factuality for t in verified.knowledge.triples} == {"entailed"}


def test_fully_refuted_aspect_removed():
    refute = [ins for _, _, ins in SEASON_KNOWLEDGE["Attendance"]]
    verified, _ = verify_factuality(quality_gateway(refute), build_record(SEASON_KNOWLEDGE), F1)
    assert [a.label for a in verified.knowledge.aspects] == ["Match Results"]


def test_filter_report_merge():
    a = FilterReport(10, 1, {"x": [10, 1]})
    a.merge(FilterReport(90, 8, {"x": [40, 3], "y": [50, 5]}))
    assert (a.checked, a.refuted, a.rate) == (100, 9, 0.09)
    assert a.to_json()["per_aspect"]["x"] == {"checked": 50, "refuted": 4}


def test_verify_requires_mined_stage():
    with pytest.raises(StageOrderError):
        verify_factuality(quality_gateway(), build_record(SEASON_KNOWLEDGE, "verified"), F1)


# -- leave-one-out importance ----------------------------------------------------


def test_scores_match_brute_force_oracle():
    rec = build_record(SEASON_KNOWLEDGE, "verified")
    gw = quality_gateway()
    scores = importance_scores(gw, rec, F1)
    insights = {(a, j): ins for a, items in enumerate(SEASON_KNOWLEDGE.values(), 1) for j, (_, _, ins) in enumerate(items, 1)}
    for key in insights:
        others = " ".join(" ".join(v.split()) for k, v in insights.items() if k != key)
        assert scores[key] == pytest.approx(-naive_f1(others, SEASON_SUMMARY), abs=1e-12)
    assert gw.log.count(role="summarizer") == 10


def recording_summarizer(prompts):
    def respond(messages):
        prompts.append(messages[-1]["content"])
        return concat_knowledge_responder(messages)

    return respond


def test_ablation_prompt_omits_exactly_one_insight():
    rec = build_record(SEASON_KNOWLEDGE, "verified")
    prompts = []
    importance_scores(quality_gateway(summarizer=recording_summarizer(prompts)), rec, F1)
    all_insights = [t.insight.text for t in rec.knowledge.triples]
    assert len(prompts) == 10
    for prompt in prompts:
        block = section(prompt, "Knowledge:", ("Summary:",))
        missing = [ins for ins in all_insights if ins not in block]
        assert len(missing) == 1


def test_echo_reference_summarizer_gives_minus_one():
    rec = build_record(SEASON_KNOWLEDGE, "verified")
    gw = quality_gateway(summarizer=lambda m: SEASON_SUMMARY)
    scores = importance_scores(gw, rec, QualityConfig(sim_backend="embedding-cosine"))
    assert set(scores.values()) == {-1.0}
    assert len(scores) == 10


def test_single_insight_scored_from_empty_block():
    rec = build_record({"A": [SEASON_KNOWLEDGE["Attendance"][0]]}, "verified")
    prompts = []
    scores = importance_scores(quality_gateway(summarizer=recording_summarizer(prompts)), rec, F1)
    assert scores == {(1, 1): -0.0}
    (prompt,) = prompts
    assert section(prompt, "Knowledge:", ("Summary:",)) == ""


def test_scoring_does_not_see_other_records():
    a = build_record(SEASON_KNOWLEDGE, "verified")
    b = build_record({"Only": [SEASON_KNOWLEDGE["Attendance"][1]]}, "verified", table_id="other")
    gw = quality_gateway()
    alone = importance_scores(gw, a, F1)
    importance_scores(gw, b, F1)
    assert importance_scores(quality_gateway(), a, F1) == alone


def test_empty_record_cannot_be_scored():
    rec = build_record({}, "verified")
    with pytest.raises(ValueError):
        importance_scores(quality_gateway(), rec, F1)


# -- top-k ---------------------------------------------------------------------

EXAMPLE = {(1, 1): -0.2, (1, 2): -0.9, (1, 3): -0.5, (1, 4): -0.5, (1, 5): -0.95}


def test_worked_example_keeps_q1_q3_q4():
    rec = build_record({"Match Results": SEASON_KNOWLEDGE["Match Results"]}, "verified")
    pruned = prune_top_k(rec, EXAMPLE, QualityConfig(k=3))
    assert [t.key for t in pruned.knowledge.triples] == [(1, 1), (1, 3), (1, 4)]
    assert pruned.provenance[-2:] == ("scored", "pruned")
    assert pruned.knowledge.triples[0].insight.importance_score == -0.2


def test_ties_break_by_question_index():
    rec = build_record({"Match Results": SEASON_KNOWLEDGE["Match Results"]}, "verified")
    scores = {k: 0.0 for k in EXAMPLE}
    pruned = prune_top_k(rec, scores, QualityConfig(k=2))
    assert [t.key for t in pruned.knowledge.triples] == [(1, 1), (1, 2)]


def test_small_aspects_kept_whole():
    rec = build_record({"A": SEASON_KNOWLEDGE["Attendance"][:2], "B": SEASON_KNOWLEDGE["Match Results"]}, "verified")
    scores = {t.key: -0.1 * t.key[1] for t in rec.knowledge.triples}
    pruned = prune_top_k(rec, scores, QualityConfig(k=3))
    assert Counter(t.key[0] for t in pruned.knowledge.triples) == {1: 2, 2: 3}


def test_missing_score_raises():
    rec = build_record({"Match Results": SEASON_KNOWLEDGE["Match Results"]}, "verified")
    partial = dict(EXAMPLE)
    del partial[(1, 2)]
    with pytest.raises(UnscoredTripleError):
        prune_top_k(rec, partial, QualityConfig(k=3))
    with pytest.raises(UnscoredTripleError):
        prune_top_k(rec, None, QualityConfig(k=3))


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        QualityConfig(k=0)


def test_prune_reads_stored_scores():
    rec = build_record({"Match Results": SEASON_KNOWLEDGE["Match Results"]}, "scored", scores=EXAMPLE)
    assert [t.key for t in prune_top_k(rec, None, QualityConfig(k=3)).knowledge.triples] == [(1, 1), (1, 3), (1, 4)]


scores_st = st.lists(
    st.floats(min_value=-1, max_value=1, allow_nan=False),
    min_size=1,
    max_size=8,
)


def _triples(values):
    rec = build_record({"A": [(f"q{i}?", "col(Date)", f"insight {i}") for i in range(len(values))]}, "verified")
    scores = {(1, i + 1): v for i, v in enumerate(values)}
    return rec, scores


@settings(max_examples=200, deadline=None)
@given(scores_st, st.integers(1, 6))
def test_top_k_properties(values, k):
    rec, scores = _triples(values)
    kept = select_top_k(rec.knowledge.triples, scores, k)
    assert len(kept) == min(k, len(values))
    dropped = [t for t in rec.knowledge.triples if t not in kept]
    if kept and dropped:
        assert min(scores[t.key] for t in kept) >= max(scores[t.key] for t in dropped)


@settings(max_examples=200, deadline=None)
@given(scores_st, st.integers(1, 6), st.floats(min_value=1e-3, max_value=1e3))
def test_positive_scaling_preserves_selection(values, k, c):
    rec, scores = _triples(values)
    base = [t.key for t in select_top_k(rec.knowledge.triples, scores, k)]
    scaled = {key: v * c for key, v in scores.items()}
    assert [t.key for t in select_top_k(rec.knowledge.triples, scaled, k)] == base


@settings(max_examples=200, deadline=None)
@given(scores_st, st.integers(1, 6), st.data())
def test_raising_a_kept_score_keeps_it(values, k, data):
    rec, scores = _triples(values)
    kept = select_top_k(rec.knowledge.triples, scores, k)
    target = data.draw(st.sampled_from(kept)).key
    bumped = dict(scores)
    bumped[target] += data.draw(st.floats(min_value=0, max_value=5))
    assert target in [t.key for t in select_top_k(rec.knowledge.triples, bumped, k)]


# -- enhance -------------------------------------------------------------------


def test_enhance_end_to_end():
    rec = build_record(SEASON_KNOWLEDGE)
    refuted = SEASON_KNOWLEDGE["Match Results"][3][2]
    pruned, report = enhance(quality_gateway([refuted]), rec, F1)
    assert report.refuted == 1
    assert pruned.provenance == ("mined", "verified", "scored", "pruned")
    assert Counter(t.key[0] for t in pruned.knowledge.triples) == {1: 3, 2: 3}
    assert all(t.insight.importance_score is not None for t in pruned.knowledge.triples)


def test_enhance_drops_fully_refuted_record():
    rec = build_record({"A": [SEASON_KNOWLEDGE["Attendance"][0]]})
    out, report = enhance(quality_gateway([SEASON_KNOWLEDGE["Attendance"][0][2]]), rec, F1)
    assert out is None and report.refuted == 1


def test_enhance_is_idempotent():
    once, _ = enhance(quality_gateway(), build_record(SEASON_KNOWLEDGE), F1)
    gw = quality_gateway()
    twice, report = enhance(gw, once, F1)
    assert twice == once and report.checked == 0 and len(gw.log.entries) == 0
