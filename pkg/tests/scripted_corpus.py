"""Builders for scripted-backend fixture corpora used across the tests."""

from __future__ import annotations

import json
from pathlib import Path

import yaml

from tabinsight.knowledge import AugmentedRecord, Aspect, Insight, KnowledgeSet, KnowledgeTriple, Question, parse_evidence
from tabinsight.table import Table

SEASON_TITLE = "1990 - 91 Manchester United F.C. Season"
SEASON_HEADERS = ("Date", "Opponents", "H / A", "Result F - A", "Attendance")
SEASON_ROWS = (
    ("1 August 1990", "Bury", "A", "0 - 0", "7162"),
    ("3 August 1990", "Cork City", "A", "0 - 0", "8000"),
    ("5 August 1990", "Waterford United", "A", "4 - 0", "4750"),
    ("8 August 1990", "Derry City", "A", "1 - 1", "9710"),
    ("11 August 1990", "Irish League", "N", "3 - 0", "10037"),
    ("13 August 1990", "Bohemians", "A", "3 - 0", "13878"),
    ("15 August 1990", "Rangers", "A", "1 - 0", "31818"),
    ("20 November 1990", "Celtic", "H", "1 - 3", "41658"),
)
SEASON_SUMMARY = (
    "United played eight friendlies, seven of them away in August 1990. They were unbeaten "
    "through August, scoring twelve goals and conceding one. The only defeat came at home to "
    "Celtic in November, yet that match drew the biggest crowd of 41658."
)
CELTIC_INSIGHT = (
    "Manchester United faced defeat against Celtic but still managed to secure a high attendance "
    "of 41,658, indicating strong fan support regardless of match outcomes."
)

EV = "The relevant columns and rows for the Question is "


def season_table() -> Table:
    return Table(SEASON_TITLE, SEASON_HEADERS, SEASON_ROWS, "season")


# Two aspects, five questions each: (question, evidence body, insight)
SEASON_KNOWLEDGE = {
    "Match Results": [
        ("How many friendlies did United lose?", "col(Opponents, Result F - A), row(8)", "United lost only one friendly, 1 - 3 to Celtic."),
        ("What was the biggest win?", "col(Opponents, Result F - A), row(3)", "The biggest win was 4 - 0 at Waterford United."),
        ("How many goals were scored in August?", "col(Date, Result F - A), row(1, 2, 3, 4, 5, 6, 7)", "United scored twelve goals across the August games."),
        ("How many games ended level?", "col(Result F - A), row(1, 2, 4)", "Three games ended level."),
        ("Where were most games played?", "col(H / A), row(all)", "Six of the eight games were played away."),
    ],
    "Attendance": [
        ("Which game drew the biggest crowd?", "col(Opponents, Attendance), row(8)", CELTIC_INSIGHT),
        ("Which game drew the smallest crowd?", "col(Opponents, Attendance), row(3)", "The smallest crowd was 4750 at Waterford United."),
        ("How did crowds change through August?", "col(Date, Attendance), row(1, 2, 3, 4, 5, 6, 7)", "Crowds grew through August, peaking at 31818 against Rangers."),
        ("How large was the Rangers crowd?", "col(Opponents, Attendance), row(7)", "Rangers drew 31818 spectators."),
        ("Did the home game draw more than the away games?", "col(H / A, Attendance), row(all)", "The single home game drew more than any away game."),
    ],
}


def build_record(knowledge: dict, stage="mined", scores=None, table=None, summary=SEASON_SUMMARY, table_id="season"):
    """An AugmentedRecord from a {label: [(q, evidence body, insight)]} map.

    ``scores`` maps (aspect, question) keys to importance scores.
    """
    from tabinsight.knowledge import STAGES

    aspects, triples = [], []
    for a, (label, items) in enumerate(knowledge.items(), start=1):
        aspects.append(Aspect(label, a))
        for j, (q, ev, ins) in enumerate(items, start=1):
            score = None if scores is None else scores.get((a, j))
            fact = "unverified" if stage == "mined" else "entailed"
            evidence = parse_evidence(ev) if ev else None
            triples.append(KnowledgeTriple(Question(q, a, j), evidence, Insight(ins, fact, score), ev))
    prov = STAGES[: STAGES.index(stage) + 1]
    return AugmentedRecord(table_id, table or season_table(), summary, KnowledgeSet(tuple(aspects), tuple(triples)), prov)


def aq_reply(knowledge: dict) -> str:
    lines = []
    for label, items in knowledge.items():
        lines.append(f"(Coarse-level Aspect): {label}")
        lines.append("(Fine-level Questions):")
        lines.extend(f"- {q}" for q, _, _ in items)
    return "\n".join(lines)


def ei_reply(knowledge: dict) -> str:
    lines = []
    n = 0
    for items in knowledge.values():
        for q, ev, ins in items:
            n += 1
            lines += [f"Q-{n}: {q}", f"E-{n}: {EV}{ev}.", f"I-{n}: {ins}"]
    return "\n".join(lines)


def teacher_rules(marker: str, knowledge: dict) -> list[dict]:
    """EI rule before AQ rule: both prompts contain the table."""
    return [
        {"contains": [marker, "Answer triples:"], "completion": ei_reply(knowledge)},
        {"contains": [marker, "Knowledge:"], "completion": aq_reply(knowledge)},
    ]


def reasoner_rules(marker: str, knowledge: dict) -> list[dict]:
    rules = []
    for items in knowledge.values():
        for q, ev, ins in items:
            rules.append({"contains": [marker, f"Questions: {q}"], "completion": f"{EV}{ev}. {ins}"})
    rules.append({"contains": [marker, "Response:"], "completion": aq_reply(knowledge)})
    return rules


def critic_rules(refuted: list[str]) -> list[dict]:
    return [{"contains": [f"Statement: {claim}"], "completion": "refuted"} for claim in refuted]


def write_rules(path: Path, rules: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rules), encoding="utf-8")
    return path


def scripted_config(
    directory: Path,
    teacher: list[dict],
    reasoner: list[dict] | None = None,
    critic: list[dict] | None = None,
    judge: list[dict] | None = None,
    **overrides,
) -> Path:
    """Write fixture files and a config with every role scripted."""
    directory.mkdir(parents=True, exist_ok=True)
    write_rules(directory / "teacher.jsonl", teacher)
    write_rules(directory / "reasoner.jsonl", reasoner or [])
    write_rules(directory / "critic.jsonl", critic or [])
    write_rules(directory / "judge.jsonl", judge or [])
    profiles = {
        "teacher": {"backend": "scripted", "fixtures": "teacher.jsonl"},
        "critic": {"backend": "scripted", "fixtures": "critic.jsonl", "responder": "entail-all"},
        "summarizer": {"backend": "scripted", "responder": "concat-knowledge"},
        "embedder": {"backend": "scripted", "embedder": "hash-embed"},
        "reasoner": {"backend": "scripted", "fixtures": "reasoner.jsonl"},
        "judge": {"backend": "scripted", "fixtures": "judge.jsonl"},
    }
    cfg = {"run_id": "test", "seed": 7, "k": 3, "sim_backend": "token-f1", "profiles": profiles}
    cfg.update(overrides)
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


def write_csv(path: Path, headers, rows) -> Path:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        w.writerows(rows)
    return path


def season_setup(directory: Path, **overrides) -> tuple[Path, Path]:
    """Config plus a corpus JSONL for the season table; returns (config, corpus)."""
    cfg = scripted_config(
        directory,
        teacher_rules(SEASON_TITLE, SEASON_KNOWLEDGE),
        reasoner_rules(SEASON_TITLE, SEASON_KNOWLEDGE),
        critic_rules(["Three games ended level."]),
        **overrides,
    )
    corpus = directory / "season.jsonl"
    rec = {"table_id": "season", "table": season_table().to_grid(), "summary": SEASON_SUMMARY}
    corpus.write_text(json.dumps(rec) + "\n", encoding="utf-8")
    return cfg, corpus
