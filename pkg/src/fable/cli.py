"""Command-line interface.

Subcommands: ingest, decompose, synthesize, recompose, mine, evaluate,
compare, benchbuild, pipeline. Option precedence is CLI flag over config
file over built-in default; the effective semantic configuration is
embedded in every emitted manifest. Exit codes: 0 success, 1 validation
error, 2 backend failure, 3 partial completion.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import yaml

from . import __version__
from .backends import (
    BackendPolicy,
    HttpEmbeddingBackend,
    HttpGenerationBackend,
    HttpScoringBackend,
    MockEmbeddingBackend,
    MockGenerationBackend,
    MockScoringBackend,
)
from .benchbuild import agreement, build_pools, score_matrix, select_candidates, select_queries
from .corpus import load_documents
from .decompose import all_labeled, decompose_corpus
from .errors import BackendError, FableError, PartialCompletionError, ValidationError
from .evaluate import EvalConfig, EvalReport, compare_runs, evaluate_run
from .io import (
    dumps_record,
    iter_jsonl,
    load_embeddings,
    load_pools,
    load_units,
    unit_to_record,
    write_documents,
    write_pdocs,
    write_pools,
    write_triplets,
    write_units,
)
from .manifest import build_manifest, manifest_path_for, write_manifest
from .mine import (
    MiningConfig,
    drop_over_ceiling_triplets,
    facet_document_similarity,
    run_mining,
)
from .prompts import load_templates, template_hashes
from .recompose import PairingConfig, recompose_corpus
from .synthesize import DEFAULT_SYNTH_TEMPERATURE, synthesize_corpus
from .types import Document, FacetSchema, FacetUnit, parse_schema

log = logging.getLogger(__name__)

ENV_GEN_URL = "FABLE_GEN_URL"
ENV_GEN_TOKEN = "FABLE_GEN_TOKEN"
ENV_SCORE_URL = "FABLE_SCORE_URL"
ENV_SCORE_TOKEN = "FABLE_SCORE_TOKEN"
ENV_EMBED_URL = "FABLE_EMBED_URL"
ENV_EMBED_TOKEN = "FABLE_EMBED_TOKEN"

DEFAULT_SEED = 0
DEFAULT_BACKEND = "mock"
DEFAULT_CONCURRENCY = 1


class Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the validation code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"config file {p} must hold a mapping")
    return data


def resolve(args: argparse.Namespace, cfg: Mapping[str, Any], name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg:
        return cfg[name]
    return default


def _schema_from(args: argparse.Namespace, cfg: Mapping[str, Any]) -> FacetSchema:
    spec = resolve(args, cfg, "schema", None)
    if spec is None:
        raise ValidationError("a facet schema is required (--schema)")
    return parse_schema(spec)


def _out_path(args: argparse.Namespace, path: str | Path) -> Path:
    path = Path(path)
    out_dir = getattr(args, "out_dir", None)
    if not path.is_absolute() and out_dir:
        path = Path(out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def make_policy(concurrency: int) -> BackendPolicy:
    return BackendPolicy(max_concurrency=concurrency)


def make_generator(kind: str, seed: int, policy: BackendPolicy):
    if kind == "mock":
        return MockGenerationBackend(seed=seed)
    url = os.environ.get(ENV_GEN_URL)
    if not url:
        raise ValidationError(f"backend 'http' requires {ENV_GEN_URL}")
    return HttpGenerationBackend(url, token=os.environ.get(ENV_GEN_TOKEN), policy=policy)


def make_scorer(kind: str, policy: BackendPolicy, normalize: str = "logistic"):
    if kind == "mock":
        return MockScoringBackend()
    url = os.environ.get(ENV_SCORE_URL)
    if not url:
        raise ValidationError(f"backend 'http' requires {ENV_SCORE_URL}")
    return HttpScoringBackend(
        url, token=os.environ.get(ENV_SCORE_TOKEN), policy=policy, normalize=normalize
    )


def make_embedder(kind: str, seed: int, policy: BackendPolicy, dim: int = 16):
    if kind == "mock":
        return MockEmbeddingBackend(dim=dim, seed=seed)
    url = os.environ.get(ENV_EMBED_URL)
    if not url:
        raise ValidationError(f"backend 'http' requires {ENV_EMBED_URL}")
    return HttpEmbeddingBackend(url, token=os.environ.get(ENV_EMBED_TOKEN), policy=policy)


def _stream_unit_batches(
    path: Path, batches: Iterable[Sequence[FacetUnit]], stage: str, total_docs: int
) -> int:
    """Write per-document unit batches as they complete; on failure after
    at least one document, surface a partial-completion error (the file
    keeps everything written so far)."""
    done = 0
    count = 0
    try:
        with open(path, "w", encoding="utf-8") as handle:
            for batch in batches:
                for unit in batch:
                    handle.write(dumps_record(unit_to_record(unit)) + "\n")
                    count += 1
                handle.flush()
                done += 1
    except (BackendError, ValidationError) as exc:
        if done:
            raise PartialCompletionError(stage, done, total_docs, exc) from exc
        raise
    return count


def parse_percents(spec: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in spec.split(",") if part.strip())
    except ValueError as exc:
        raise ValidationError(f"bad percents '{spec}': {exc}") from exc


def parse_type_balance(spec: str) -> dict[str, int]:
    balance = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        name, _, count = part.partition("=")
        try:
            balance[name.strip()] = int(count)
        except ValueError as exc:
            raise ValidationError(f"bad type balance '{spec}'") from exc
    if not balance:
        raise ValidationError(f"bad type balance '{spec}'")
    return balance


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    docs = load_documents(args.input, schema)
    out = _out_path(args, args.out)
    write_documents(out, docs)
    config = {
        "command": "ingest",
        "schema": schema.domain_name,
        "facets": list(schema.facets),
    }
    manifest = build_manifest(
        seed, config,
        counts={"documents": len(docs), "units": 0, "triplets": {}},
        stages={"ingest": "completed"},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(f"ingested {len(docs)} documents -> {out}")
    return 0


def _decompose_config(
    schema: FacetSchema, backend_kind: str, extra: Optional[Mapping[str, Any]] = None
) -> dict[str, Any]:
    config = {
        "schema": schema.domain_name,
        "facets": list(schema.facets),
        "backend": backend_kind,
    }
    config.update(extra or {})
    return config


def cmd_decompose(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    backend_kind = resolve(args, cfg, "backend", DEFAULT_BACKEND)
    concurrency = int(resolve(args, cfg, "concurrency", DEFAULT_CONCURRENCY))
    templates = load_templates(args.template_dir)
    docs = load_documents(args.input, schema)
    policy = make_policy(concurrency)
    generator = make_generator(backend_kind, seed, policy)
    out = _out_path(args, args.out)
    batches = decompose_corpus(docs, schema, templates, generator, concurrency)
    n_units = _stream_unit_batches(out, batches, "decompose", len(docs))
    status = "skipped: labeled" if all_labeled(docs, schema) else "completed"
    manifest = build_manifest(
        seed,
        _decompose_config(schema, backend_kind, {"command": "decompose"}),
        counts={"documents": len(docs), "units": n_units, "triplets": {}},
        prompt_hashes=template_hashes(templates),
        backend_ids={"generate": generator.backend_id},
        stages={"decompose": status},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(f"decomposed {len(docs)} documents into {n_units} units -> {out}")
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    backend_kind = resolve(args, cfg, "backend", DEFAULT_BACKEND)
    concurrency = int(resolve(args, cfg, "concurrency", DEFAULT_CONCURRENCY))
    variants = int(resolve(args, cfg, "variants", 1))
    temperature = float(resolve(args, cfg, "temperature", DEFAULT_SYNTH_TEMPERATURE))
    templates = load_templates(args.template_dir)
    docs = load_documents(args.docs, schema)
    units = load_units(args.units)
    policy = make_policy(concurrency)
    generator = make_generator(backend_kind, seed, policy)
    out = _out_path(args, args.out)

    by_doc: dict[str, list[FacetUnit]] = {}
    for unit in units:
        by_doc.setdefault(unit.doc_id, []).append(unit)

    def batches() -> Iterable[list[FacetUnit]]:
        generated = synthesize_corpus(
            docs, units, schema, templates, generator,
            variants=variants, temperature=temperature, concurrency=concurrency,
        )
        for doc, new_units in zip(docs, generated):
            yield by_doc.get(doc.id, []) + new_units

    n_units = _stream_unit_batches(out, batches(), "synthesize", len(docs))
    manifest = build_manifest(
        seed,
        _decompose_config(
            schema, backend_kind,
            {"command": "synthesize", "variants": variants, "temperature": temperature},
        ),
        counts={"documents": len(docs), "units": n_units, "triplets": {}},
        prompt_hashes=template_hashes(templates),
        backend_ids={"generate": generator.backend_id},
        stages={"synthesize": "completed"},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(f"synthesized units for {len(docs)} documents ({n_units} total) -> {out}")
    return 0


def cmd_recompose(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    mode = resolve(args, cfg, "mode", "cross_all")
    fraction = float(resolve(args, cfg, "fraction", 1.0))
    separator = resolve(args, cfg, "separator", " ")
    units = load_units(args.units)
    pairing = PairingConfig(
        mode=mode, seed=seed, subsample_fraction=fraction,
        per_doc_cap=args.per_doc_cap, separator=separator,
    )
    result = recompose_corpus(units, schema, pairing)
    out = _out_path(args, args.out)
    pdocs_out = _out_path(args, args.pdocs or out.with_name(out.stem + "_pdocs.jsonl"))
    write_triplets(out, result.triplets)
    write_pdocs(pdocs_out, result.pdocs)
    config = {
        "command": "recompose",
        "schema": schema.domain_name,
        "facets": list(schema.facets),
        "mode": mode,
        "fraction": fraction,
        "separator": separator,
        "per_doc_cap": args.per_doc_cap,
    }
    manifest = build_manifest(
        seed, config,
        counts={
            "documents": len(result.doc_ids),
            "units": len(units),
            "triplets": result.counts_per_facet,
        },
        stages={"recompose": "completed"},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(
        f"recomposed {len(result.triplets)} triplets "
        f"({len(result.pdocs)} pseudo-documents) -> {out}"
    )
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    backend_kind = resolve(args, cfg, "backend", DEFAULT_BACKEND)
    concurrency = int(resolve(args, cfg, "concurrency", DEFAULT_CONCURRENCY))
    separator = resolve(args, cfg, "separator", " ")
    easy = float(resolve(args, cfg, "easy", 0.25))
    ceiling = float(resolve(args, cfg, "ceiling", 0.5))
    rounds = int(resolve(args, cfg, "rounds", 1))
    band = parse_percents(args.band) if args.band else (easy, ceiling)
    if len(band) != 2:
        raise ValidationError(f"--band needs two values, got {band}")
    mining = MiningConfig(
        easy_threshold=easy, hard_ceiling=ceiling, target_band=(band[0], band[1]),
        max_rounds=rounds, over_ceiling_policy=args.over_ceiling,
    )
    templates = load_templates(args.template_dir)
    docs = load_documents(args.docs, schema)
    units = load_units(args.units)
    policy = make_policy(concurrency)
    generator = make_generator(backend_kind, seed, policy)
    scorer = make_scorer(backend_kind, policy, args.score_normalize)
    pairing = PairingConfig(
        mode=resolve(args, cfg, "mode", "cross_all"), seed=seed, separator=separator
    )
    result = run_mining(
        docs, units, schema, mining, generator, scorer, templates,
        pairing=pairing, concurrency=concurrency,
    )
    out = _out_path(args, args.out)
    pdocs_out = _out_path(args, args.pdocs or out.with_name(out.stem + "_pdocs.jsonl"))
    write_triplets(out, result.supplement_triplets)
    write_pdocs(pdocs_out, result.supplement_pdocs)
    if args.units_out:
        write_units(
            _out_path(args, args.units_out),
            result.scored_units + result.regenerated_units,
        )
    report_path = _out_path(args, args.report)
    report_path.write_text(
        json.dumps(result.report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if args.similarity_table:
        table = facet_document_similarity(units, docs, scorer, concurrency)
        _out_path(args, args.similarity_table).write_text(
            json.dumps(table, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    per_facet: dict[str, int] = {}
    for triplet in result.supplement_triplets:
        per_facet[triplet.target_facet] = per_facet.get(triplet.target_facet, 0) + 1
    config = {
        "command": "mine",
        "schema": schema.domain_name,
        "facets": list(schema.facets),
        "backend": backend_kind,
        "easy_threshold": easy,
        "hard_ceiling": ceiling,
        "target_band": list(band),
        "max_rounds": rounds,
        "over_ceiling_policy": args.over_ceiling,
        "separator": separator,
    }
    manifest = build_manifest(
        seed, config,
        counts={
            "documents": len(docs),
            "units": len(result.scored_units) + len(result.regenerated_units),
            "triplets": per_facet,
        },
        prompt_hashes=template_hashes(templates),
        backend_ids={"generate": generator.backend_id, "score": scorer.backend_id},
        stages={"mine": "completed"},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(
        f"mining: {result.report['initial']['easy']} easy, "
        f"{result.report['accepted']} accepted, "
        f"{len(result.supplement_triplets)} supplemental triplets -> {out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    percents = parse_percents(resolve(args, cfg, "percents", "0.1,0.2"))
    config = EvalConfig(
        ndcg_percents=percents,
        gain=resolve(args, cfg, "gain", "linear"),
        map_threshold=int(resolve(args, cfg, "map_threshold", 1)),
        similarity=resolve(args, cfg, "similarity", "cosine"),
    )
    pools = load_pools(args.pools)
    embeddings = load_embeddings(args.embeddings)
    report = evaluate_run(pools, embeddings, config, manifest=args.manifest)
    out = _out_path(args, args.out)
    report.save(out)
    print(
        "aggregated: "
        + " ".join(f"{k}={v:.4f}" for k, v in sorted(report.aggregated.items()))
        + f" ({len(report.per_query)} queries) -> {out}"
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    report_a = EvalReport.load(args.a)
    report_b = EvalReport.load(args.b)
    result = compare_runs(report_a, report_b)
    text = json.dumps(
        {
            "queries": result["queries"],
            "fraction_non_decreasing": result["fraction_non_decreasing"],
        },
        sort_keys=True,
        indent=2,
    )
    if args.out:
        _out_path(args, args.out).write_text(
            json.dumps(result, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(text)
    return 0


def cmd_benchbuild(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    backend_kind = resolve(args, cfg, "backend", DEFAULT_BACKEND)
    concurrency = int(resolve(args, cfg, "concurrency", DEFAULT_CONCURRENCY))
    policy = make_policy(concurrency)
    scorer = make_scorer(backend_kind, policy, args.score_normalize)
    items = [d for d in _load_items(args.items)]
    balance = parse_type_balance(args.type_balance) if args.type_balance else None
    matrix = score_matrix(items, args.facet, scorer, concurrency)
    queries = select_queries(
        items, args.facet, args.queries, scorer, type_balance=balance, matrix=matrix
    )
    candidate_pools = select_candidates(
        items, args.facet, queries, args.candidates, scorer, matrix=matrix
    )
    annotator_labels = [_load_annotations(path) for path in (args.annotations or [])]
    pools = build_pools(args.facet, candidate_pools, annotator_labels or None)
    out = _out_path(args, args.out)
    write_pools(out, pools)
    if len(annotator_labels) >= 2:
        common_pairs = set(annotator_labels[0]) & set(annotator_labels[1])
        flat_a = {f"{q}::{d}": annotator_labels[0][(q, d)] for q, d in common_pairs}
        flat_b = {f"{q}::{d}": annotator_labels[1][(q, d)] for q, d in common_pairs}
        stats = agreement(flat_a, flat_b)
        print(
            json.dumps(
                {
                    "kendall_tau": stats.kendall_tau,
                    "spearman_rho": stats.spearman_rho,
                    "pearson_r": stats.pearson_r,
                },
                sort_keys=True,
            )
        )
    config = {
        "command": "benchbuild",
        "facet": args.facet,
        "queries": args.queries,
        "candidates": args.candidates,
        "type_balance": balance,
        "backend": backend_kind,
        "dispersion_set": "all same-facet items",
        "std": "population",
    }
    manifest = build_manifest(
        seed, config,
        counts={"documents": len(items), "units": 0, "triplets": {},
                "pools": len(pools)},
        backend_ids={"score": scorer.backend_id},
        stages={"benchbuild": "completed"},
    )
    write_manifest(manifest_path_for(out), manifest)
    print(f"built {len(pools)} pools ({args.queries} queries) -> {out}")
    return 0


def _load_items(path: str) -> list[Document]:
    from .io import load_documents_file

    return load_documents_file(path)


def _load_annotations(path: str) -> dict[tuple[str, str], int]:
    labels: dict[tuple[str, str], int] = {}
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        for key in ("query_id", "doc_id", "rating"):
            if key not in obj:
                raise ValidationError(f"{where}: missing '{key}'")
        rating = int(obj["rating"])
        if rating not in (0, 1, 2, 3):
            raise ValidationError(f"{where}: rating {rating} outside 0..3")
        labels[(obj["query_id"], obj["doc_id"])] = rating
    return labels


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    schema = _schema_from(args, cfg)
    seed = int(resolve(args, cfg, "seed", DEFAULT_SEED))
    backend_kind = resolve(args, cfg, "backend", DEFAULT_BACKEND)
    concurrency = int(resolve(args, cfg, "concurrency", DEFAULT_CONCURRENCY))
    mode = resolve(args, cfg, "mode", "cross_all")
    fraction = float(resolve(args, cfg, "fraction", 1.0))
    separator = resolve(args, cfg, "separator", " ")
    variants = int(resolve(args, cfg, "variants", 1))
    temperature = float(resolve(args, cfg, "temperature", DEFAULT_SYNTH_TEMPERATURE))
    mine_enabled = bool(resolve(args, cfg, "mine", False) or args.mine)
    out_dir = Path(args.out_dir or resolve(args, cfg, "out_dir", "fable_out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    templates = load_templates(args.template_dir)
    docs = load_documents(args.input, schema)
    policy = make_policy(concurrency)
    generator = make_generator(backend_kind, seed, policy)
    stages: dict[str, str] = {}

    # Stage 1
    units_path = out_dir / "units.jsonl"
    units: list[FacetUnit] = []

    def stage1_batches() -> Iterable[list[FacetUnit]]:
        for batch in decompose_corpus(docs, schema, templates, generator, concurrency):
            units.extend(batch)
            yield batch

    _stream_unit_batches(units_path, stage1_batches(), "decompose", len(docs))
    stages["decompose"] = "skipped: labeled" if all_labeled(docs, schema) else "completed"

    # Stage 2
    units2_path = out_dir / "units2.jsonl"
    all_units: list[FacetUnit] = []

    def stage2_batches() -> Iterable[list[FacetUnit]]:
        generated = synthesize_corpus(
            docs, units, schema, templates, generator,
            variants=variants, temperature=temperature, concurrency=concurrency,
        )
        by_doc: dict[str, list[FacetUnit]] = {}
        for unit in units:
            by_doc.setdefault(unit.doc_id, []).append(unit)
        for doc, new_units in zip(docs, generated):
            batch = by_doc.get(doc.id, []) + new_units
            all_units.extend(batch)
            yield batch

    n_units = _stream_unit_batches(units2_path, stage2_batches(), "synthesize", len(docs))
    stages["synthesize"] = "completed"

    # Stage 3
    pairing = PairingConfig(
        mode=mode, seed=seed, subsample_fraction=fraction,
        per_doc_cap=args.per_doc_cap, separator=separator,
    )
    result = recompose_corpus(all_units, schema, pairing)
    stages["recompose"] = "completed"

    base_triplets = result.triplets
    backend_ids = {"generate": generator.backend_id}
    counts: dict[str, Any] = {"documents": len(docs), "units": n_units}
    if mine_enabled:
        scorer = make_scorer(backend_kind, policy, args.score_normalize)
        mining = MiningConfig(
            easy_threshold=float(resolve(args, cfg, "easy", 0.25)),
            hard_ceiling=float(resolve(args, cfg, "ceiling", 0.5)),
            target_band=(
                float(resolve(args, cfg, "easy", 0.25)),
                float(resolve(args, cfg, "ceiling", 0.5)),
            ),
            max_rounds=int(resolve(args, cfg, "rounds", 1)),
            over_ceiling_policy=args.over_ceiling,
        )
        mined = run_mining(
            docs, all_units, schema, mining, generator, scorer, templates,
            pairing=pairing, concurrency=concurrency,
        )
        if mining.over_ceiling_policy == "drop":
            base_triplets, dropped = drop_over_ceiling_triplets(
                base_triplets, result.pdocs, mined.over_ceiling_unit_ids
            )
            counts["dropped_over_ceiling"] = dropped
        write_triplets(out_dir / "triplets_hn.jsonl", mined.supplement_triplets)
        write_pdocs(out_dir / "pdocs_hn.jsonl", mined.supplement_pdocs)
        (out_dir / "mine_report.json").write_text(
            json.dumps(mined.report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        per_facet: dict[str, int] = {facet: 0 for facet in schema.facets}
        for triplet in mined.supplement_triplets:
            per_facet[triplet.target_facet] += 1
        counts["supplement_triplets"] = per_facet
        backend_ids["score"] = scorer.backend_id
        stages["mine"] = "completed"
    else:
        stages["mine"] = "skipped"

    write_triplets(out_dir / "triplets.jsonl", base_triplets)
    write_pdocs(out_dir / "pdocs.jsonl", result.pdocs)
    per_facet_base: dict[str, int] = {facet: 0 for facet in schema.facets}
    for triplet in base_triplets:
        per_facet_base[triplet.target_facet] += 1
    counts["triplets"] = per_facet_base

    config = {
        "command": "pipeline",
        "schema": schema.domain_name,
        "facets": list(schema.facets),
        "backend": backend_kind,
        "mode": mode,
        "fraction": fraction,
        "separator": separator,
        "variants": variants,
        "temperature": temperature,
        "mine": mine_enabled,
        "per_doc_cap": args.per_doc_cap,
    }
    manifest = build_manifest(
        seed, config, counts,
        prompt_hashes=template_hashes(templates),
        backend_ids=backend_ids,
        stages=stages,
    )
    write_manifest(out_dir / "manifest.json", manifest)
    print(
        f"pipeline complete: {len(docs)} documents, {n_units} units, "
        f"{len(base_triplets)} triplets -> {out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON or YAML config file")
    sub.add_argument("--seed", type=int, help="run seed (default 0)")
    sub.add_argument("--backend", choices=["mock", "http"], help="backend kind")
    sub.add_argument("--concurrency", type=int, help="max in-flight backend calls")
    sub.add_argument("--out-dir", help="base directory for relative outputs")
    sub.add_argument(
        "--score-normalize", choices=["logistic", "identity"], default="logistic",
        help="raw score normalization for http scoring backends",
    )
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> Parser:
    parser = Parser(prog="fable", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fable {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("ingest", help="validate and normalize a documents file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = subparsers.add_parser("decompose", help="stage 1: facet units per document")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.add_argument("--template-dir")
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    p = subparsers.add_parser("synthesize", help="stage 2: similar/dissimilar fragments")
    p.add_argument("--units", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.add_argument("--template-dir")
    p.add_argument("--variants", type=int)
    p.add_argument("--temperature", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = subparsers.add_parser("recompose", help="stage 3: pseudo-documents and triplets")
    p.add_argument("--units", required=True)
    p.add_argument("--schema")
    p.add_argument("--mode", choices=["cross_all", "sample_one", "random_negative"])
    p.add_argument("--fraction", type=float)
    p.add_argument("--per-doc-cap", type=int)
    p.add_argument("--separator")
    p.add_argument("--out", required=True)
    p.add_argument("--pdocs", help="pseudo-documents output (default <out>_pdocs.jsonl)")
    _add_common(p)
    p.set_defaults(func=cmd_recompose)

    p = subparsers.add_parser("mine", help="hard-negative mining loop")
    p.add_argument("--units", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--schema")
    p.add_argument("--easy", type=float)
    p.add_argument("--ceiling", type=float)
    p.add_argument("--band", help="regeneration target band 'low,high'")
    p.add_argument("--rounds", type=int)
    p.add_argument("--over-ceiling", choices=["keep_warn", "drop"], default="keep_warn")
    p.add_argument("--mode", choices=["cross_all", "sample_one"])
    p.add_argument("--out", required=True)
    p.add_argument("--pdocs")
    p.add_argument("--units-out")
    p.add_argument("--report", required=True)
    p.add_argument("--similarity-table", help="write facet/document similarity means")
    p.add_argument("--template-dir")
    _add_common(p)
    p.set_defaults(func=cmd_mine)

    p = subparsers.add_parser("evaluate", help="rank pools and report NDCG/MAP")
    p.add_argument("--pools", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--percents", help="comma list of NDCG percents (default 0.1,0.2)")
    p.add_argument("--gain", choices=["linear", "exponential"])
    p.add_argument("--map-threshold", type=int)
    p.add_argument("--similarity", choices=["cosine", "negative_euclidean"])
    p.add_argument("--manifest", help="run-manifest path to link into the report")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subparsers.add_parser("compare", help="compare two evaluation reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = subparsers.add_parser("benchbuild", help="dispersion-based pool construction")
    p.add_argument("--items", required=True)
    p.add_argument("--facet", required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--candidates", type=int, required=True)
    p.add_argument("--type-balance", help="e.g. 'conversation=4,lecture=4'")
    p.add_argument("--annotations", action="append", help="annotator file (repeatable)")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_benchbuild)

    p = subparsers.add_parser("pipeline", help="decompose -> synthesize -> recompose [-> mine]")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--schema")
    p.add_argument("--mode", choices=["cross_all", "sample_one", "random_negative"])
    p.add_argument("--fraction", type=float)
    p.add_argument("--per-doc-cap", type=int)
    p.add_argument("--separator")
    p.add_argument("--variants", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--mine", action="store_true", default=None)
    p.add_argument("--easy", type=float)
    p.add_argument("--ceiling", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--over-ceiling", choices=["keep_warn", "drop"], default="keep_warn")
    p.add_argument("--template-dir")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except PartialCompletionError as exc:
        print(f"fable: partial completion: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"fable: validation error: {exc}", file=sys.stderr)
        return 1
    except BackendError as exc:
        print(f"fable: backend failure: {exc}", file=sys.stderr)
        return 2
    except FableError as exc:
        print(f"fable: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
