"""Command-line orchestration: every pipeline stage as a subcommand plus
a `pipeline` command chaining them for one snapshot pair.

Stages communicate only through files under --out-dir, so a chained
pipeline run is byte-identical to running the subcommands one by one
with the same config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

from editforge.artifacts import (
    changed_from_json,
    changed_to_json,
    mhop_from_json,
    mhop_to_json,
    probe_from_json,
    probe_to_json,
    read_jsonl,
    triplet_from_json,
    triplet_to_json,
    write_json,
    write_jsonl,
    write_snapshot,
)
from editforge.config import Config, ConfigError, apply_overrides, load_config
from editforge.diff import diff_snapshots
from editforge.embedding import HttpEmbedder, StubEmbedder
from editforge.evaluate import (
    bin_records,
    evaluate_batch,
    hop_retrieval_analysis,
    load_annotations,
)
from editforge.filtering import FilterConfig, FilterReport, apply_filters, drop_ambiguous
from editforge.ingest import IngestConfig, load_snapshot, resolve_labels
from editforge.models import QaPair
from editforge.probes import build_locality_probes, build_mhop_tuples
from editforge.providers import (
    ConstantModel,
    ContextCopyModel,
    HttpGenerationProvider,
    HttpModelProvider,
    ReplayProvider,
    SubprocessModelProvider,
    SynthProvider,
    TableModel,
)
from editforge.qagen import ForgeParams, forge_timestep, validate_qa
from editforge.rag import RagAnswerer, RagMemory, add_entries, load_memory, save_memory
from editforge.store import (
    KIND_ORDER,
    BenchmarkManifest,
    UpdateBatch,
    emit_timestep,
    load_timestep,
)

logger = logging.getLogger(__name__)


class StageError(Exception):
    pass


# -- config -> component wiring ------------------------------------------


def build_embedder(cfg: Config):
    rag = cfg["rag"]
    if rag["embedder"] == "stub":
        return StubEmbedder(dim=rag["embed_dim"])
    if rag["embedder"] == "http":
        if not rag["embed_endpoint"]:
            raise ConfigError("rag.embed_endpoint", "required for the http embedder")
        return HttpEmbedder(rag["embed_endpoint"], dim=rag["embed_dim"])
    raise ConfigError("rag.embedder", f"unknown embedder {rag['embedder']!r}")


def build_generation_provider(
    cfg: Config,
    replay_dir: Optional[str] = None,
    endpoint: Optional[str] = None,
):
    qa = cfg["qa"]
    kind = qa["provider"]
    if replay_dir:
        kind = "replay"
    if kind == "synth":
        return SynthProvider()
    if kind == "replay":
        directory = replay_dir or qa["replay_dir"]
        if not directory:
            raise ConfigError("qa.replay_dir", "required for the replay provider")
        recorder = None
        if qa["record"]:
            target = endpoint or qa["endpoint"]
            recorder = HttpGenerationProvider(target) if target else SynthProvider()
        return ReplayProvider(directory, record_with=recorder)
    if kind == "http":
        target = endpoint or qa["endpoint"]
        if not target:
            raise ConfigError("qa.endpoint", "required for the http provider")
        return HttpGenerationProvider(
            target, timeout=qa["timeout_s"], max_retries=qa["max_retries"]
        )
    raise ConfigError("qa.provider", f"unknown provider {kind!r}")


def build_model(spec: str):
    if spec.startswith(("http://", "https://")):
        return HttpModelProvider(spec)
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return ConstantModel(rest or "unknown")
    if kind == "table":
        return TableModel(json.loads(Path(rest).read_text(encoding="utf-8")))
    if kind == "context-copy":
        return ContextCopyModel()
    if kind == "subprocess":
        return SubprocessModelProvider(shlex.split(rest))
    raise ConfigError("eval.model", f"unknown model spec {spec!r}")


def forge_params_from(cfg: Config) -> ForgeParams:
    qa = cfg["qa"]
    return ForgeParams(
        temperature=qa["temperature"],
        max_tokens=qa["max_tokens"],
        max_inflight=qa["max_inflight"],
        seed=cfg.seed,
        model_by_kind={
            kind: qa[f"model_{kind}"]
            for kind in ("update", "locality", "rephrase", "persona", "mhop")
        },
        template_dir=qa["template_dir"] or None,
    )


def print_table(headers: Sequence[str], rows: Sequence[Sequence]) -> None:
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("  ".join("-" * w for w in widths))
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


# -- pipeline stages ------------------------------------------------------


def stage_ingest(cfg: Config, out_dir: Path, which: str, input_path: Optional[str] = None) -> dict:
    section = cfg["ingest"]
    source = input_path or section[which]
    if not source:
        raise ConfigError(f"ingest.{which}", "no snapshot input configured")
    ingest_cfg = IngestConfig(
        label_lang=section["label_lang"],
        format=section["format"],
        spool_threshold=section["spool_threshold"] or None,
    )
    store = resolve_labels(load_snapshot(source, ingest_cfg))
    store.meta.snapshot_date = section[f"snapshot_date_{which}"]
    target = out_dir / "snapshots" / which
    write_snapshot(store, target)
    report = {
        "which": which,
        "entity_count": store.meta.entity_count,
        "triplet_count": store.meta.triplet_count,
        "skipped_records": store.skipped_records,
        "skipped_claims": store.skipped_claims,
        "unresolved": store.unresolved_count,
    }
    store.cleanup()
    logger.info(
        "ingest %s: %d triplets, %d skipped records",
        which,
        report["triplet_count"],
        report["skipped_records"],
    )
    return report


def _load_canonical(out_dir: Path, which: str, cfg: Config):
    section = cfg["ingest"]
    snap_dir = out_dir / "snapshots" / which
    if not (snap_dir / "triplets.tsv").exists():
        raise StageError(f"no ingested snapshot at {snap_dir}; run ingest first")
    ingest_cfg = IngestConfig(
        label_lang=section["label_lang"],
        format="tsv",
        spool_threshold=section["spool_threshold"] or None,
    )
    store = resolve_labels(load_snapshot(snap_dir, ingest_cfg))
    meta = json.loads((snap_dir / "meta.json").read_text(encoding="utf-8"))
    store.meta.snapshot_date = meta.get("snapshot_date", "")
    return store


def stage_diff(cfg: Config, out_dir: Path) -> dict:
    old = _load_canonical(out_dir, "old", cfg)
    new = _load_canonical(out_dir, "new", cfg)
    result = diff_snapshots(
        old,
        new,
        in_memory_threshold=cfg["diff"]["in_memory_threshold"],
        chunk_size=cfg["diff"]["chunk_size"],
    )
    target = out_dir / "diff"
    write_jsonl(target / "changed.jsonl", (changed_to_json(c) for c in result.changed_set))
    write_jsonl(target / "static.jsonl", (triplet_to_json(t) for t in result.static_set))
    write_jsonl(
        target / "ambiguous.jsonl", (triplet_to_json(t) for t in result.ambiguous_set)
    )
    report = {
        "changed": len(result.changed_set),
        "static": len(result.static_set),
        "ambiguous": len(result.ambiguous_set),
    }
    write_json(target / "diff_report.json", report)
    old.cleanup()
    new.cleanup()
    logger.info("diff: %(changed)d changed, %(static)d static, %(ambiguous)d ambiguous", report)
    return report


def stage_filter(cfg: Config, out_dir: Path) -> dict:
    diff_dir = out_dir / "diff"
    if not (diff_dir / "changed.jsonl").exists():
        raise StageError(f"no diff artifacts at {diff_dir}; run diff first")
    changed = [changed_from_json(r) for r in read_jsonl(diff_dir / "changed.jsonl")]
    static = [triplet_from_json(r) for r in read_jsonl(diff_dir / "static.jsonl")]
    ambiguous = [triplet_from_json(r) for r in read_jsonl(diff_dir / "ambiguous.jsonl")]
    rules = FilterConfig(
        max_phrase_words=cfg["filters"]["max_phrase_words"],
        allow_scripts=tuple(cfg["filters"]["allow_scripts"]),
        enabled=tuple(cfg["filters"]["enabled"]),
    )
    kept_changed, changed_report = apply_filters(changed, rules)
    # ambiguous-key pass-through from the diff dies here, as nondeterministic
    changed_report.input_count += len(ambiguous)
    if ambiguous:
        changed_report.removed_by_rule["ambiguous_key"] = (
            changed_report.removed_by_rule.get("ambiguous_key", 0) + len(ambiguous)
        )
    static_quality, static_report_a = apply_filters(static, rules)
    kept_static, static_report_b = drop_ambiguous(static_quality)
    static_report = FilterReport(
        input_count=static_report_a.input_count,
        kept_count=static_report_b.kept_count,
        removed_by_rule={
            **static_report_a.removed_by_rule,
            **static_report_b.removed_by_rule,
        },
    )
    target = out_dir / "filtered"
    write_jsonl(target / "changed.jsonl", (changed_to_json(c) for c in kept_changed))
    write_jsonl(target / "static.jsonl", (triplet_to_json(t) for t in kept_static))
    report = {
        "changed": changed_report.to_dict(),
        "static": static_report.to_dict(),
    }
    write_jsonl(
        target / "filter_report.jsonl",
        ({"set": name, **summary} for name, summary in report.items()),
    )
    logger.info(
        "filter: kept %d/%d changed, %d/%d static",
        changed_report.kept_count,
        changed_report.input_count,
        static_report.kept_count,
        static_report.input_count,
    )
    return report


def stage_probes(cfg: Config, out_dir: Path) -> dict:
    filtered_dir = out_dir / "filtered"
    if not (filtered_dir / "changed.jsonl").exists():
        raise StageError(f"no filtered artifacts at {filtered_dir}; run filter first")
    changed = [changed_from_json(r) for r in read_jsonl(filtered_dir / "changed.jsonl")]
    static = [triplet_from_json(r) for r in read_jsonl(filtered_dir / "static.jsonl")]
    embedder = build_embedder(cfg)
    probes = build_locality_probes(
        changed,
        static,
        embedder,
        batch_size=cfg["locality"]["batch_size"],
        use_ann=cfg["locality"]["use_ann"],
    )
    mhops = build_mhop_tuples(changed)
    target = out_dir / "probes"
    write_jsonl(target / "locality.jsonl", (probe_to_json(p) for p in probes))
    write_jsonl(target / "mhop.jsonl", (mhop_to_json(q) for q in mhops))
    report = {
        "locality_probes": len(probes),
        "no_probe": len(changed) - len(probes),
        "mhop_tuples": len(mhops),
    }
    write_json(target / "probes_report.json", report)
    logger.info(
        "probes: %(locality_probes)d locality (%(no_probe)d without candidate), "
        "%(mhop_tuples)d mhop",
        report,
    )
    return report


def stage_qagen(
    cfg: Config,
    out_dir: Path,
    replay_dir: Optional[str] = None,
    endpoint: Optional[str] = None,
) -> dict:
    filtered_dir = out_dir / "filtered"
    probes_dir = out_dir / "probes"
    if not (probes_dir / "locality.jsonl").exists():
        raise StageError(f"no probe artifacts at {probes_dir}; run probes first")
    changed = [changed_from_json(r) for r in read_jsonl(filtered_dir / "changed.jsonl")]
    probes = [probe_from_json(r) for r in read_jsonl(probes_dir / "locality.jsonl")]
    mhops = [mhop_from_json(r) for r in read_jsonl(probes_dir / "mhop.jsonl")]
    provider = build_generation_provider(cfg, replay_dir=replay_dir, endpoint=endpoint)
    params = forge_params_from(cfg)
    timestep_id = cfg["pipeline"]["timestep_id"]
    sets, report = forge_timestep(
        changed, probes, mhops, provider, params, timestep_id=timestep_id
    )
    target = out_dir / "qa"
    for kind in KIND_ORDER:
        write_jsonl(target / f"{kind}.jsonl", (p.record() for p in sets[kind]))
    write_json(target / "qa_report.json", report.to_dict())
    logger.info(
        "qagen: %s",
        ", ".join(f"{kind}={len(sets[kind])}" for kind in KIND_ORDER),
    )
    return report.to_dict()


def stage_validate(cfg: Config, out_dir: Path) -> dict:
    qa_dir = out_dir / "qa"
    filtered_dir = out_dir / "filtered"
    probes_dir = out_dir / "probes"
    if not (qa_dir / "update.jsonl").exists():
        raise StageError(f"no qa artifacts at {qa_dir}; run qagen first")
    changed = [changed_from_json(r) for r in read_jsonl(filtered_dir / "changed.jsonl")]
    probes = [probe_from_json(r) for r in read_jsonl(probes_dir / "locality.jsonl")]
    mhops = [mhop_from_json(r) for r in read_jsonl(probes_dir / "mhop.jsonl")]
    triplet_by_uid = {c.uid: c.triplet for c in changed}
    probe_by_uid = {p.probe.uid: p.probe for p in probes}
    mhop_by_ids = {(q.first_id, q.second_id): q for q in mhops}
    counts: dict[str, dict[str, int]] = {}
    failures: list[dict] = []
    for kind in KIND_ORDER:
        passed = failed = missing = 0
        for record in read_jsonl(qa_dir / f"{kind}.jsonl"):
            pair = QaPair.from_record(record)
            if kind == "mhop":
                source = mhop_by_ids.get(tuple(pair.provenance))  # type: ignore[arg-type]
            elif kind == "locality":
                source = probe_by_uid.get(pair.provenance[0]) if pair.provenance else None
            else:
                source = triplet_by_uid.get(pair.provenance[0]) if pair.provenance else None
            if source is None:
                missing += 1
                failures.append({"id": pair.id, "reasons": ["missing-source"]})
                continue
            verdict = validate_qa(pair, source)
            if verdict.passed:
                passed += 1
            else:
                failed += 1
                failures.append({"id": pair.id, "reasons": list(verdict.reasons)})
        counts[kind] = {"passed": passed, "failed": failed, "missing_source": missing}
    report = {"counts": counts, "failures": failures}
    write_json(qa_dir / "validation_report.json", report)
    total_failed = sum(c["failed"] + c["missing_source"] for c in counts.values())
    logger.info("validate: %d failures across all kinds", total_failed)
    return report


def stage_emit(cfg: Config, out_dir: Path) -> dict:
    qa_dir = out_dir / "qa"
    if not (qa_dir / "update.jsonl").exists():
        raise StageError(f"no qa artifacts at {qa_dir}; run qagen first")
    pipeline = cfg["pipeline"]
    date_start, date_end = pipeline["date_start"], pipeline["date_end"]
    if not date_start or not date_end:
        metas = []
        for which in ("old", "new"):
            meta_path = out_dir / "snapshots" / which / "meta.json"
            if meta_path.exists():
                metas.append(
                    json.loads(meta_path.read_text(encoding="utf-8")).get("snapshot_date", "")
                )
            else:
                metas.append("")
        date_start = date_start or metas[0]
        date_end = date_end or metas[1]
    sets = {
        kind: [QaPair.from_record(r) for r in read_jsonl(qa_dir / f"{kind}.jsonl")]
        for kind in KIND_ORDER
    }
    batch = UpdateBatch(
        timestep_id=pipeline["timestep_id"],
        date_range=(date_start, date_end),
        sets=sets,
    )
    dataset_dir = out_dir / "dataset"
    entry = emit_timestep(batch, dataset_dir)
    manifest_path = dataset_dir / "manifest.json"
    manifest = BenchmarkManifest.load(manifest_path)
    manifest.append(entry)
    manifest.save(manifest_path)
    logger.info("emit: timestep %s with %s", entry["timestep_id"], entry["counts"])
    return entry


def _error_fractions(stage_reports: dict) -> dict[str, float]:
    fractions: dict[str, float] = {}
    for which in ("old", "new"):
        rep = stage_reports.get(f"ingest_{which}")
        if rep:
            seen = rep["triplet_count"] + rep["skipped_records"]
            fractions[f"ingest_{which}"] = rep["skipped_records"] / seen if seen else 0.0
    qa = stage_reports.get("qagen")
    if qa:
        requested = sum(c["requested"] for c in qa["counts"].values())
        dropped = sum(qa["drops"].values())
        fractions["qagen"] = dropped / requested if requested else 0.0
    validation = stage_reports.get("validate")
    if validation:
        total = sum(sum(c.values()) for c in validation["counts"].values())
        bad = sum(
            c["failed"] + c["missing_source"] for c in validation["counts"].values()
        )
        fractions["validate"] = bad / total if total else 0.0
    return fractions


def _check_thresholds(cfg: Config, stage_reports: dict) -> int:
    limit = cfg["pipeline"]["max_error_fraction"]
    for stage, fraction in _error_fractions(stage_reports).items():
        if fraction > limit:
            logger.error(
                "stage %s error fraction %.3f exceeds limit %.3f", stage, fraction, limit
            )
            return 1
    return 0


def run_pipeline(
    cfg: Config,
    out_dir: Path,
    replay_dir: Optional[str] = None,
    endpoint: Optional[str] = None,
) -> int:
    reports: dict = {}
    reports["ingest_old"] = stage_ingest(cfg, out_dir, "old")
    reports["ingest_new"] = stage_ingest(cfg, out_dir, "new")
    reports["diff"] = stage_diff(cfg, out_dir)
    reports["filter"] = stage_filter(cfg, out_dir)
    reports["probes"] = stage_probes(cfg, out_dir)
    reports["qagen"] = stage_qagen(cfg, out_dir, replay_dir=replay_dir, endpoint=endpoint)
    reports["validate"] = stage_validate(cfg, out_dir)
    reports["emit"] = stage_emit(cfg, out_dir)
    write_json(out_dir / "reports" / "pipeline_report.json", reports)
    fractions = _error_fractions(reports)
    rows = [(stage, f"{fraction:.3f}") for stage, fraction in sorted(fractions.items())]
    print_table(["stage", "error_fraction"], rows)
    return _check_thresholds(cfg, reports)


# -- evaluation commands ---------------------------------------------------


def _dataset_dir(cfg: Config, out_dir: Path, explicit: Optional[str]) -> Path:
    if explicit:
        return Path(explicit)
    return out_dir / "dataset" / cfg["pipeline"]["timestep_id"]


def cmd_eval(args: argparse.Namespace, cfg: Config, out_dir: Path) -> int:
    batch = load_timestep(_dataset_dir(cfg, out_dir, args.dataset))
    model = build_model(args.model or cfg["eval"]["model"])
    axes = tuple(cfg["eval"]["axes"])
    records = evaluate_batch(
        model,
        batch,
        axes=axes,
        judge_mode=cfg["eval"]["judge"],
        max_inflight=cfg["eval"]["max_inflight"],
    )
    rows = [
        (r.axis, r.n, f"{r.accuracy:.4f}", r.errored)
        for r in records
    ]
    print_table(["axis", "n", "accuracy", "errored"], rows)
    reports_dir = out_dir / "reports"
    name = f"eval_{batch.timestep_id}_{getattr(model, 'name', 'model')}"
    write_jsonl(
        reports_dir / f"{name}.jsonl", (r.to_dict(with_verdicts=True) for r in records)
    )
    annotations_path = args.annotations or cfg["eval"]["annotations"]
    if annotations_path and args.bin_key:
        annotations = load_annotations(annotations_path)
        for record in records:
            if record.axis != "update":
                continue
            histogram, skipped = bin_records(
                record.verdicts, args.bin_key, args.bins, annotations
            )
            print(f"\nbinning update axis by {args.bin_key} ({skipped} skipped):")
            print_table(
                ["low", "high", "n", "accuracy"],
                [(b["low"], b["high"], b["n"], f"{b['accuracy']:.4f}") for b in histogram],
            )
            write_jsonl(reports_dir / f"{name}_bins_{args.bin_key}.jsonl", histogram)
    return 0


def cmd_rag_build(args: argparse.Namespace, cfg: Config, out_dir: Path) -> int:
    batch = load_timestep(_dataset_dir(cfg, out_dir, args.dataset))
    embedder = build_embedder(cfg)
    memory = RagMemory(
        dim=cfg["rag"]["embed_dim"],
        mode=cfg["rag"]["mode"],
        recall_floor=cfg["rag"]["recall_floor"],
    )
    add_entries(memory, batch.sets.get("update", []), embedder)
    target = Path(args.memory) if args.memory else out_dir / "rag" / batch.timestep_id
    save_memory(memory, target)
    print_table(
        ["memory", "entries", "dim", "add_errors"],
        [(str(target), len(memory), memory.dim, memory.add_errors)],
    )
    return 0


def cmd_rag_eval(args: argparse.Namespace, cfg: Config, out_dir: Path) -> int:
    batch = load_timestep(_dataset_dir(cfg, out_dir, args.dataset))
    memory_dir = Path(args.memory) if args.memory else out_dir / "rag" / batch.timestep_id
    memory = load_memory(memory_dir, mode=cfg["rag"]["mode"])
    embedder = build_embedder(cfg)
    base_model = build_model(args.model or cfg["eval"]["model"])
    rag_model = RagAnswerer(memory, base_model, embedder, k=cfg["rag"]["k"])
    records = evaluate_batch(
        rag_model,
        batch,
        axes=tuple(cfg["eval"]["axes"]),
        judge_mode=cfg["eval"]["judge"],
        max_inflight=cfg["eval"]["max_inflight"],
    )
    rows = [(r.axis, r.n, f"{r.accuracy:.4f}", r.errored) for r in records]
    print_table(["axis", "n", "accuracy", "errored"], rows)
    stats = hop_retrieval_analysis(
        memory,
        batch.sets.get("mhop", []),
        base_model,
        k=cfg["rag"]["k"],
        embedder=embedder,
        updates=batch.sets.get("update", []),
        judge_mode=cfg["eval"]["judge"],
    )
    print("\nhop retrieval diagnostics:")
    print_table(
        ["n", "hop1", "hop2", "both", "acc|both", "acc|hop1-only"],
        [
            (
                stats.n,
                f"{stats.hop1_retrieved:.3f}",
                f"{stats.hop2_retrieved:.3f}",
                f"{stats.both_retrieved:.3f}",
                "-" if stats.accuracy_given_both is None else f"{stats.accuracy_given_both:.3f}",
                "-"
                if stats.accuracy_given_hop1_only is None
                else f"{stats.accuracy_given_hop1_only:.3f}",
            )
        ],
    )
    reports_dir = out_dir / "reports"
    name = f"rag_eval_{batch.timestep_id}_{getattr(base_model, 'name', 'model')}"
    payload = [r.to_dict(with_verdicts=True) for r in records]
    payload.append({"hop_stats": stats.to_dict()})
    write_jsonl(reports_dir / f"{name}.jsonl", payload)
    return 0


def cmd_report(args: argparse.Namespace, cfg: Config, out_dir: Path) -> int:
    rows = []
    combined = []
    for path in args.eval_files:
        for record in read_jsonl(path):
            if "axis" not in record:
                continue
            combined.append(record)
            rows.append(
                (
                    record.get("timestep_id", "-"),
                    record["axis"],
                    record.get("n", 0),
                    f"{record.get('accuracy', 0.0):.4f}",
                )
            )
    print_table(["timestep", "axis", "n", "accuracy"], rows)
    write_jsonl(out_dir / "reports" / "combined_report.jsonl", combined)
    return 0


# -- entry point ------------------------------------------------------------


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="override the top-level seed")
    common.add_argument("--out-dir", default="out", help="artifact directory")
    common.add_argument("--provider-endpoint", help="generation endpoint override")
    common.add_argument("--replay-dir", help="canned-response directory override")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, repeatable (e.g. --set rag.k=5)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="editforge",
        description="Forge QA benchmarks from knowledge-graph snapshot diffs "
        "and evaluate answer-producing models on them.",
    )
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", parents=[common], help="parse one snapshot")
    p_ingest.add_argument("--input", help="snapshot file or directory")
    p_ingest.add_argument("--name", choices=("old", "new"), required=True)

    sub.add_parser("diff", parents=[common], help="diff the two ingested snapshots")
    sub.add_parser("filter", parents=[common], help="apply quality filters")
    sub.add_parser("probes", parents=[common], help="build locality and mhop probes")
    sub.add_parser("qagen", parents=[common], help="synthesize and validate QA pairs")
    sub.add_parser("validate", parents=[common], help="re-audit generated QA pairs")
    sub.add_parser("emit", parents=[common], help="emit the timestep dataset")

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a model on a timestep")
    p_eval.add_argument("--dataset", help="timestep dataset directory")
    p_eval.add_argument("--model", help="model spec (overrides eval.model)")
    p_eval.add_argument("--annotations", help="annotations sidecar JSONL")
    p_eval.add_argument("--bin-key", choices=("fact_year", "subject_count", "object_count"))
    p_eval.add_argument("--bins", type=int, default=10)

    p_rag_build = sub.add_parser("rag-build", parents=[common], help="build the RAG memory")
    p_rag_build.add_argument("--dataset", help="timestep dataset directory")
    p_rag_build.add_argument("--memory", help="memory output directory")

    p_rag_eval = sub.add_parser("rag-eval", parents=[common], help="evaluate with RAG")
    p_rag_eval.add_argument("--dataset", help="timestep dataset directory")
    p_rag_eval.add_argument("--memory", help="memory directory")
    p_rag_eval.add_argument("--model", help="base model spec")

    p_report = sub.add_parser("report", parents=[common], help="aggregate eval reports")
    p_report.add_argument("eval_files", nargs="+", help="eval report JSONL files")

    sub.add_parser("pipeline", parents=[common], help="run ingest through emit")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args.overrides)
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        out_dir = Path(args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "ingest":
            report = stage_ingest(cfg, out_dir, args.name, input_path=args.input)
            return _check_thresholds(cfg, {f"ingest_{args.name}": report})
        if args.command == "diff":
            stage_diff(cfg, out_dir)
            return 0
        if args.command == "filter":
            stage_filter(cfg, out_dir)
            return 0
        if args.command == "probes":
            stage_probes(cfg, out_dir)
            return 0
        if args.command == "qagen":
            report = stage_qagen(
                cfg,
                out_dir,
                replay_dir=args.replay_dir,
                endpoint=args.provider_endpoint,
            )
            return _check_thresholds(cfg, {"qagen": report})
        if args.command == "validate":
            report = stage_validate(cfg, out_dir)
            return _check_thresholds(cfg, {"validate": report})
        if args.command == "emit":
            stage_emit(cfg, out_dir)
            return 0
        if args.command == "pipeline":
            return run_pipeline(
                cfg, out_dir, replay_dir=args.replay_dir, endpoint=args.provider_endpoint
            )
        if args.command == "eval":
            return cmd_eval(args, cfg, out_dir)
        if args.command == "rag-build":
            return cmd_rag_build(args, cfg, out_dir)
        if args.command == "rag-eval":
            return cmd_rag_eval(args, cfg, out_dir)
        if args.command == "report":
            return cmd_report(args, cfg, out_dir)
        parser.error(f"unknown command {args.command}")
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.error("stage %s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
