"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 2 validation error, 3 upstream stage file missing,
4 model gateway failure after retries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .config import Config, load_config
from .distill import aggregate_reference_summaries, emit_ig_records, emit_qg_records, shuffle_interleave
from .errors import ConfigurationError, GatewayError, TabInsightError, UpstreamMissingError
from .evaluate import EvalConfig, evaluate_run
from .io import read_jsonl, write_json, write_jsonl
from .knowledge import AugmentedRecord
from .miner import mine_record
from .quality import FilterReport, QualityConfig, apply_scores, importance_scores, prune_top_k, verify_factuality
from .reasoner import ReasonerSettings, run_inference
from .runs import STAGE_FILES, RunDirectory, RunManifest, StageEntry
from .table import FORMATS, Table, ingest_table, parse_flat_table, serialize_table

logger = logging.getLogger("tabinsight")

EXIT_OK, EXIT_VALIDATION, EXIT_UPSTREAM, EXIT_GATEWAY = 0, 2, 3, 4


@dataclass
class Context:
    cfg: Config
    run: RunDirectory
    manifest: RunManifest
    gateway_failures: int = 0

    def gateway(self, *roles):
        return self.cfg.build_gateway(roles, self.run.path)

    def quality(self) -> QualityConfig:
        return QualityConfig(
            k=self.cfg.k,
            sim_backend=self.cfg.sim_backend,
            prompt_dir=self.cfg.prompt_dir,
            max_tokens=self.cfg.max_table_tokens,
            max_workers=self.cfg.max_workers,
        )

    def stage(self, stage, src, dst, fn, resume=False, extra=None) -> StageEntry:
        """Map ``fn`` over the records of ``src`` and write ``dst``.

        ``fn`` returns the output record or None to drop it.  Record-level
        failures are quarantined; gateway failures also set exit code 4.
        """
        start = time.perf_counter()
        records = self.run.read_stage(src)
        dst_path = self.run.file(dst)
        done = {}
        if resume and dst_path.exists():
            done = {str(r["table_id"]): r for r in read_jsonl(dst_path)}
        out, drops, quarantined = [], 0, 0
        for rec in records:
            tid = str(rec.get("table_id", ""))
            if tid in done:
                out.append(done[tid])
                continue
            try:
                result = fn(rec)
            except ConfigurationError:
                raise
            except (TabInsightError, ValueError, KeyError, TypeError) as exc:
                logger.warning("%s: quarantined %s (%s: %s)", stage, tid, type(exc).__name__, exc)
                self.run.quarantine(stage, tid, exc)
                quarantined += 1
                if isinstance(exc, GatewayError):
                    self.gateway_failures += 1
                continue
            if result is None:
                drops += 1
            else:
                out.append(result)
        write_jsonl(dst_path, out)
        entry = StageEntry(
            stage,
            self.run.file(src).name,
            dst_path.name,
            len(records),
            len(out),
            drops,
            quarantined,
            round(time.perf_counter() - start, 3),
            extra if extra is not None else {},
        )
        self.save(entry)
        return entry

    def save(self, entry: StageEntry) -> None:
        self.manifest.record(entry)
        self.run.save_manifest(self.manifest)


# -- commands ------------------------------------------------------------------


def _detect_format(path: Path, flag: str) -> str:
    if flag != "auto":
        return flag
    suffix = path.suffix.lower()
    return {".csv": "csv", ".tsv": "tsv", ".json": "json-grid", ".jsonl": "jsonl"}.get(suffix, "csv")


def _table_from_obj(obj, table_id: str) -> Table:
    if isinstance(obj, str):
        return parse_flat_table(obj, table_id)
    return Table.from_grid(obj, source_id=table_id)


def _corpus_record(table_id, t: Table, summary=None, queries=None) -> dict:
    rec = {"table_id": table_id, "table": t.to_grid()}
    if summary:
        rec["summary"] = summary
    if queries:
        rec["queries"] = queries
    return rec


def _ingest_jsonl(path: Path, cfg: Config, errors: list) -> list[dict]:
    out = []
    for n, obj in enumerate(read_jsonl(path), start=1):
        tid = str(obj.get("table_id") or obj.get("id") or f"{path.stem}-{n}")
        try:
            t = _table_from_obj(obj["table"], tid)
            serialize_table(t, cfg.max_table_tokens)
            queries = [
                {"query": q.get("query", ""), "summary": q["summary"]}
                for q in obj.get("queries") or []
                if q.get("summary")
            ]
            out.append(_corpus_record(tid, t, obj.get("summary"), queries))
        except (TabInsightError, KeyError, TypeError, ValueError) as exc:
            errors.append(f"{path}: record {n}: {type(exc).__name__}: {exc}")
    return out


def cmd_ingest(ctx: Context, args) -> int:
    start = time.perf_counter()
    summaries = {}
    if args.summaries:
        summaries = json.loads(Path(args.summaries).read_text(encoding="utf-8"))
    records, errors = [], []
    for raw in args.paths:
        path = Path(raw)
        fmt = _detect_format(path, args.format)
        try:
            if fmt == "jsonl":
                records.extend(_ingest_jsonl(path, ctx.cfg, errors))
                continue
            t = ingest_table(path.read_bytes(), fmt, title=args.title or "", source_id=path.stem)
            serialize_table(t, ctx.cfg.max_table_tokens)
            records.append(_corpus_record(path.stem, t, summaries.get(path.stem)))
        except (TabInsightError, OSError, ValueError) as exc:
            errors.append(f"{path}: {type(exc).__name__}: {exc}")
    seen = set()
    unique = []
    for rec in records:
        if rec["table_id"] in seen:
            errors.append(f"duplicate table_id {rec['table_id']!r}; later copy rejected")
            continue
        seen.add(rec["table_id"])
        unique.append(rec)
    write_jsonl(ctx.run.file("corpus"), unique)
    ctx.save(
        StageEntry(
            "ingest",
            ",".join(args.paths),
            STAGE_FILES["corpus"],
            len(unique) + len(errors),
            len(unique),
            0,
            len(errors),
            round(time.perf_counter() - start, 3),
        )
    )
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"ingested {len(unique)} tables, rejected {len(errors)}")
    return EXIT_VALIDATION if errors else EXIT_OK


def cmd_aggregate(ctx: Context, args) -> int:
    records = ctx.run.read_stage("corpus")
    needs = [r for r in records if not r.get("summary") and r.get("queries")]
    if args.skip_single:
        needs = [r for r in needs if len(r["queries"]) > 1]
    gw = ctx.gateway("judge") if needs else None

    def fn(rec):
        if rec.get("summary") or not rec.get("queries"):
            return rec
        t = Table.from_grid(rec["table"], source_id=str(rec["table_id"]))
        summary = aggregate_reference_summaries(
            gw,
            t,
            [q["summary"] for q in rec["queries"]],
            skip_single=args.skip_single,
            prompt_dir=ctx.cfg.prompt_dir,
            max_tokens=ctx.cfg.max_table_tokens,
        )
        return {**rec, "summary": summary}

    ctx.stage("aggregate", "corpus", "corpus", fn)
    return EXIT_OK


def cmd_mine(ctx: Context, args) -> int:
    gw = ctx.gateway("teacher")

    def fn(rec):
        tid = str(rec["table_id"])
        summary = rec.get("summary")
        if not summary:
            logger.warning("mine: %s has no reference summary; dropped", tid)
            return None
        t = Table.from_grid(rec["table"], source_id=tid)
        return mine_record(gw, tid, t, summary, ctx.cfg.q_init, ctx.cfg.prompt_dir, ctx.cfg.max_table_tokens).to_json()

    ctx.stage("mine", "corpus", "mined", fn, resume=args.resume)
    return EXIT_OK


def cmd_verify(ctx: Context, args) -> int:
    gw = ctx.gateway("critic")
    qcfg = ctx.quality()
    total = FilterReport()

    def fn(rec):
        out, report = verify_factuality(gw, AugmentedRecord.from_json(rec), qcfg)
        total.merge(report)
        if not out.knowledge.triples:
            logger.info("verify: %s has no insights left; dropped", out.table_id)
            return None
        return out.to_json()

    extra = {}
    ctx.stage("verify", "mined", "verified", fn, resume=args.resume, extra=extra)
    extra["filter"] = total.to_json()
    ctx.run.save_manifest(ctx.manifest)
    print(f"critic refuted {total.refuted} of {total.checked} insights ({total.percent:.2f}%)")
    return EXIT_OK


def cmd_score(ctx: Context, args) -> int:
    qcfg = ctx.quality()
    roles = ["summarizer"] + (["embedder"] if qcfg.sim_backend == "embedding-cosine" else [])
    gw = ctx.gateway(*roles)

    def fn(rec):
        record = AugmentedRecord.from_json(rec)
        return apply_scores(record, importance_scores(gw, record, qcfg)).to_json()

    ctx.stage("score", "verified", "scored", fn, resume=args.resume)
    return EXIT_OK


def cmd_prune(ctx: Context, args) -> int:
    qcfg = ctx.quality()
    ctx.stage(
        "prune",
        "scored",
        "pruned",
        lambda rec: prune_top_k(AugmentedRecord.from_json(rec), None, qcfg).to_json(),
        resume=args.resume,
    )
    return EXIT_OK


def cmd_emit_train(ctx: Context, args) -> int:
    start = time.perf_counter()
    dprime = [AugmentedRecord.from_json(r) for r in ctx.run.read_stage("pruned")]
    qg = emit_qg_records(dprime, ctx.cfg.prompt_dir, ctx.cfg.max_table_tokens)
    ig = emit_ig_records(dprime, ctx.cfg.prompt_dir, ctx.cfg.max_table_tokens)
    mixed = shuffle_interleave(qg, ig.records, ctx.cfg.seed)
    write_jsonl(ctx.run.file("train_qg"), (r.to_json() for r in qg))
    write_jsonl(ctx.run.file("train_ig"), (r.to_json() for r in ig.records))
    write_jsonl(ctx.run.file("train_mixed"), (r.to_json() for r in mixed))
    ctx.save(
        StageEntry(
            "emit-train",
            STAGE_FILES["pruned"],
            STAGE_FILES["train_mixed"],
            len(dprime),
            len(dprime),
            wall_time_s=round(time.perf_counter() - start, 3),
            extra={"qg": len(qg), "ig": len(ig), "mixed": len(mixed), "skipped_raw_only": ig.skipped_raw_only},
        )
    )
    print(f"QG {len(qg)}  IG {len(ig)}  mixed {len(mixed)}  raw-only skipped {ig.skipped_raw_only}")
    return EXIT_OK


def cmd_infer(ctx: Context, args) -> int:
    settings = ReasonerSettings(
        gate_evidence=args.gate_evidence or ctx.cfg.gate_evidence,
        max_questions=ctx.cfg.max_questions,
        prompt_dir=ctx.cfg.prompt_dir,
        max_tokens=ctx.cfg.max_table_tokens,
        max_workers=ctx.cfg.max_workers,
    )
    gw = ctx.gateway(settings.reasoner, settings.summarizer)

    def fn(rec):
        tid = str(rec["table_id"])
        return run_inference(gw, Table.from_grid(rec["table"], source_id=tid), settings).to_json(tid)

    ctx.stage("infer", args.input or "corpus", "inference", fn, resume=args.resume)
    return EXIT_OK


def cmd_eval(ctx: Context, args) -> int:
    start = time.perf_counter()
    econf = EvalConfig(ctx.cfg.eval.surface, ctx.cfg.eval.judge, ctx.cfg.eval.pairwise, ctx.cfg.prompt_dir)
    if args.surface_only:
        econf = replace(econf, judge=(), pairwise=())
    pred_path = Path(args.input) if args.input else ctx.run.file("inference")
    gold_path = Path(args.gold) if args.gold else ctx.run.file("corpus")
    for p in (pred_path, gold_path, Path(args.baseline) if args.baseline else None):
        if p is not None and not p.exists():
            raise UpstreamMissingError(str(p))
    gw = ctx.gateway("judge") if econf.needs_judge else None
    report = evaluate_run(pred_path, gold_path, econf, gw, args.baseline)
    write_json(ctx.run.file("report"), report.to_json())
    text = report.to_text()
    (ctx.run.path / "report.txt").write_text(text + "\n", encoding="utf-8")
    n = len(report.per_example)
    ctx.save(
        StageEntry(
            "eval",
            str(pred_path.name),
            STAGE_FILES["report"],
            n,
            n,
            wall_time_s=round(time.perf_counter() - start, 3),
            extra={"failures": {m: len(ids) for m, ids in report.failures.items()}},
        )
    )
    print(text)
    return EXIT_OK


def dprime_statistics(records) -> dict:
    tables = len(records)
    aspects = sum(len((r.get("knowledge") or {}).get("aspects", [])) for r in records)
    triples = sum(len((r.get("knowledge") or {}).get("triples", [])) for r in records)
    return {
        "tables": tables,
        "aspects": aspects,
        "triples": triples,
        "aspects_per_table": aspects / tables if tables else 0.0,
        "triples_per_table": triples / tables if tables else 0.0,
    }


def format_statistics(s: dict) -> str:
    rows = [
        ("#Table", str(s["tables"]), ""),
        ("#Aspect", str(s["aspects"]), f"{s['aspects_per_table']:.2f}"),
        ("#Question, #Evidence, #Insight", str(s["triples"]), f"{s['triples_per_table']:.2f}"),
    ]
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows + [("", "total", "")])
    lines = [f"{'':<{w0}}  {'total':>{w1}}  per table"]
    lines += [f"{a:<{w0}}  {b:>{w1}}  {c}".rstrip() for a, b, c in rows]
    return "\n".join(lines)


def cmd_stats(ctx: Context, args) -> int:
    records = ctx.run.read_stage(args.input or "pruned")
    stats = dprime_statistics(records)
    print(json.dumps(stats) if args.json else format_statistics(stats))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "aggregate": cmd_aggregate,
    "mine": cmd_mine,
    "verify": cmd_verify,
    "score": cmd_score,
    "prune": cmd_prune,
    "emit-train": cmd_emit_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "stats": cmd_stats,
}
READ_ONLY = {"stats"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file")
    common.add_argument("--run-dir", help="run directory (default: <run_root>/<run_id>)")
    common.add_argument("--run-id", help="override the config's run_id")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tabinsight", description="Table summarization with mined knowledge.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="tables -> corpus.jsonl")
    p.add_argument("paths", nargs="+")
    p.add_argument("--format", choices=("auto",) + FORMATS + ("jsonl",), default="auto")
    p.add_argument("--title", help="title for delimited tables")
    p.add_argument("--summaries", help="JSON object mapping table_id to reference summary")

    p = sub.add_parser("aggregate", parents=[common], help="merge query summaries into reference summaries")
    p.add_argument("--skip-single", action="store_true", help="keep a lone query summary verbatim")

    for name, text in (
        ("mine", "corpus -> mined"),
        ("verify", "mined -> verified"),
        ("score", "verified -> scored"),
        ("prune", "scored -> pruned"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--resume", action="store_true", help="keep records already in the output file")

    sub.add_parser("emit-train", parents=[common], help="pruned -> train_{qg,ig,mixed}")

    p = sub.add_parser("infer", parents=[common], help="tables -> inference.jsonl")
    p.add_argument("--input", help="table records (default: corpus.jsonl in the run)")
    p.add_argument("--gate-evidence", action="store_true")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="inference vs gold -> report.json")
    p.add_argument("--input", help="inference file (default: run's inference.jsonl)")
    p.add_argument("--gold", help="gold records (default: run's corpus.jsonl)")
    p.add_argument("--baseline", help="second inference file for pairwise comparison")
    p.add_argument("--surface-only", action="store_true", help="skip judge metrics; no model calls")

    p = sub.add_parser("stats", parents=[common], help="statistics of the pruned corpus")
    p.add_argument("--input", help="pruned file (default: run's pruned.jsonl)")
    p.add_argument("--json", action="store_true")
    return parser


def _context(args) -> Context:
    cfg = load_config(args.config) if args.config else Config()
    run_id = args.run_id or cfg.run_id
    path = Path(args.run_dir) if args.run_dir else Path(cfg.run_root) / run_id
    run = RunDirectory(path, run_id)
    manifest = run.load_manifest()
    manifest.config_hash = cfg.config_hash
    manifest.seed = cfg.seed
    return Context(cfg, run, manifest)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        ctx = _context(args)
        if args.command in READ_ONLY:
            return COMMANDS[args.command](ctx, args)
        with ctx.run:
            code = COMMANDS[args.command](ctx, args)
        if ctx.gateway_failures:
            print(f"error: {ctx.gateway_failures} record(s) failed in the model gateway", file=sys.stderr)
            return EXIT_GATEWAY
        return code
    except UpstreamMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM
    except GatewayError as exc:
        print(f"error: gateway: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except (TabInsightError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
