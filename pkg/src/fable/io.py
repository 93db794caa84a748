"""Line-delimited JSON persistence for every record type.

One UTF-8 JSON object per line, field names exactly as the record types
spell them. Serialization sorts keys and strips whitespace so identical
values produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

from .errors import ValidationError
from .types import (
    Document,
    FacetSchema,
    FacetUnit,
    Provenance,
    PseudoDocument,
    RelevancePool,
    RunManifest,
    Triplet,
)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield (line_number, parsed_object) pairs; blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc}") from exc


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> int:
    """Write records one per line; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(dumps_record(record))
            handle.write("\n")
            count += 1
    return count


def dumps_record(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise ValidationError(f"{where}: missing field '{key}'")
    return obj[key]


# ---------------------------------------------------------------------------
# Record codecs


def document_to_record(doc: Document) -> dict[str, Any]:
    record: dict[str, Any] = {"id": doc.id, "text": doc.text}
    if doc.facet_labels is not None:
        record["facet_labels"] = dict(doc.facet_labels)
    if doc.meta is not None:
        record["meta"] = dict(doc.meta)
    return record


def document_from_record(obj: Mapping[str, Any], where: str = "document") -> Document:
    labels = obj.get("facet_labels")
    meta = obj.get("meta")
    return Document(
        id=str(_require(obj, "id", where)),
        text=_require(obj, "text", where),
        facet_labels=dict(labels) if labels is not None else None,
        meta=dict(meta) if meta is not None else None,
    )


def unit_to_record(unit: FacetUnit) -> dict[str, Any]:
    provenance: dict[str, Any] = {
        "backend_id": unit.provenance.backend_id,
        "prompt_hash": unit.provenance.prompt_hash,
        "mining_round": unit.provenance.mining_round,
    }
    if unit.provenance.source_unit_id is not None:
        provenance["source_unit_id"] = unit.provenance.source_unit_id
    record: dict[str, Any] = {
        "unit_id": unit.unit_id,
        "doc_id": unit.doc_id,
        "facet": unit.facet,
        "kind": unit.kind,
        "text": unit.text,
        "provenance": provenance,
    }
    if unit.score is not None:
        record["score"] = unit.score
    return record


def unit_from_record(obj: Mapping[str, Any], where: str = "unit") -> FacetUnit:
    prov_obj = _require(obj, "provenance", where)
    provenance = Provenance(
        backend_id=_require(prov_obj, "backend_id", f"{where}.provenance"),
        prompt_hash=_require(prov_obj, "prompt_hash", f"{where}.provenance"),
        mining_round=int(prov_obj.get("mining_round", 0)),
        source_unit_id=prov_obj.get("source_unit_id"),
    )
    return FacetUnit(
        unit_id=_require(obj, "unit_id", where),
        doc_id=_require(obj, "doc_id", where),
        facet=_require(obj, "facet", where),
        kind=_require(obj, "kind", where),
        text=_require(obj, "text", where),
        provenance=provenance,
        score=obj.get("score"),
    )


def pdoc_to_record(pdoc: PseudoDocument) -> dict[str, Any]:
    return {
        "pdoc_id": pdoc.pdoc_id,
        "composition": [[facet, unit_id] for facet, unit_id in pdoc.composition],
        "target_facet": pdoc.target_facet,
        "polarity": pdoc.polarity,
        "text": pdoc.text,
    }


def pdoc_from_record(obj: Mapping[str, Any], where: str = "pseudo-document") -> PseudoDocument:
    composition = tuple(
        (entry[0], entry[1]) for entry in _require(obj, "composition", where)
    )
    return PseudoDocument(
        pdoc_id=_require(obj, "pdoc_id", where),
        composition=composition,
        target_facet=_require(obj, "target_facet", where),
        polarity=_require(obj, "polarity", where),
        text=_require(obj, "text", where),
    )


def triplet_to_record(triplet: Triplet) -> dict[str, Any]:
    return {
        "target_facet": triplet.target_facet,
        "query_ref": triplet.query_ref,
        "positive_ref": triplet.positive_ref,
        "negative_ref": triplet.negative_ref,
        "mode": triplet.mode,
    }


def triplet_from_record(obj: Mapping[str, Any], where: str = "triplet") -> Triplet:
    return Triplet(
        target_facet=_require(obj, "target_facet", where),
        query_ref=_require(obj, "query_ref", where),
        positive_ref=_require(obj, "positive_ref", where),
        negative_ref=_require(obj, "negative_ref", where),
        mode=_require(obj, "mode", where),
    )


def pool_to_record(pool: RelevancePool) -> dict[str, Any]:
    record: dict[str, Any] = {
        "facet": pool.facet,
        "query_id": pool.query_id,
        "candidates": [[doc_id, relevance] for doc_id, relevance in pool.candidates],
    }
    if pool.annotator_labels is not None:
        record["annotator_labels"] = [dict(labels) for labels in pool.annotator_labels]
    return record


def pool_from_record(obj: Mapping[str, Any], where: str = "pool") -> RelevancePool:
    candidates = tuple(
        (entry[0], int(entry[1])) for entry in _require(obj, "candidates", where)
    )
    labels = obj.get("annotator_labels")
    return RelevancePool(
        facet=_require(obj, "facet", where),
        query_id=_require(obj, "query_id", where),
        candidates=candidates,
        annotator_labels=tuple(dict(m) for m in labels) if labels is not None else None,
    )


def manifest_to_record(manifest: RunManifest) -> dict[str, Any]:
    return {
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
        "prompt_hashes": dict(manifest.prompt_hashes),
        "backend_ids": dict(manifest.backend_ids),
        "counts": dict(manifest.counts),
        "tool_version": manifest.tool_version,
        "config": dict(manifest.config),
        "stages": dict(manifest.stages),
    }


def manifest_from_record(obj: Mapping[str, Any]) -> RunManifest:
    return RunManifest(
        seed=_require(obj, "seed", "manifest"),
        config_hash=_require(obj, "config_hash", "manifest"),
        prompt_hashes=dict(obj.get("prompt_hashes", {})),
        backend_ids=dict(obj.get("backend_ids", {})),
        counts=dict(obj.get("counts", {})),
        tool_version=_require(obj, "tool_version", "manifest"),
        config=dict(obj.get("config", {})),
        stages=dict(obj.get("stages", {})),
    )


# ---------------------------------------------------------------------------
# File-level loaders and writers


def load_units(path: str | Path) -> list[FacetUnit]:
    units = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        unit = unit_from_record(obj, where=f"{path}:{lineno}")
        if unit.unit_id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate unit_id '{unit.unit_id}'")
        seen.add(unit.unit_id)
        units.append(unit)
    return units


def load_pdocs(path: str | Path) -> list[PseudoDocument]:
    """Load pseudo-documents, deduplicating byte-identical repeats.

    Supplement files re-emit the anchor/positive pseudo-documents they
    reference so they stay self-contained; loading the base and the
    supplement together must not trip on those repeats.
    """
    pdocs: dict[str, PseudoDocument] = {}
    for lineno, obj in iter_jsonl(path):
        pdoc = pdoc_from_record(obj, where=f"{path}:{lineno}")
        existing = pdocs.get(pdoc.pdoc_id)
        if existing is not None and existing != pdoc:
            raise ValidationError(
                f"{path}:{lineno}: conflicting records for pdoc_id '{pdoc.pdoc_id}'"
            )
        pdocs[pdoc.pdoc_id] = pdoc
    return list(pdocs.values())


def load_triplets(path: str | Path) -> list[Triplet]:
    return [
        triplet_from_record(obj, where=f"{path}:{lineno}")
        for lineno, obj in iter_jsonl(path)
    ]


def load_pools(path: str | Path) -> list[RelevancePool]:
    return [
        pool_from_record(obj, where=f"{path}:{lineno}")
        for lineno, obj in iter_jsonl(path)
    ]


def load_embeddings(path: str | Path) -> dict[str, list[float]]:
    """Embeddings file: one {"id", "vector"} record per line."""
    embeddings: dict[str, list[float]] = {}
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        doc_id = str(_require(obj, "id", where))
        vector = _require(obj, "vector", where)
        if not isinstance(vector, list) or not vector:
            raise ValidationError(f"{where}: 'vector' must be a non-empty array")
        if doc_id in embeddings:
            raise ValidationError(f"{where}: duplicate embedding id '{doc_id}'")
        embeddings[doc_id] = [float(x) for x in vector]
    return embeddings


def write_documents(path: str | Path, docs: Sequence[Document]) -> int:
    return write_jsonl(path, (document_to_record(d) for d in docs))


def write_units(path: str | Path, units: Sequence[FacetUnit]) -> int:
    return write_jsonl(path, (unit_to_record(u) for u in units))


def write_pdocs(path: str | Path, pdocs: Sequence[PseudoDocument]) -> int:
    return write_jsonl(path, (pdoc_to_record(p) for p in pdocs))


def write_triplets(path: str | Path, triplets: Sequence[Triplet]) -> int:
    return write_jsonl(path, (triplet_to_record(t) for t in triplets))


def write_pools(path: str | Path, pools: Sequence[RelevancePool]) -> int:
    return write_jsonl(path, (pool_to_record(p) for p in pools))


def write_embeddings(path: str | Path, embeddings: Mapping[str, Sequence[float]]) -> int:
    return write_jsonl(
        path,
        ({"id": doc_id, "vector": list(vec)} for doc_id, vec in embeddings.items()),
    )


def load_documents_file(
    path: str | Path, schema: Optional[FacetSchema] = None
) -> list[Document]:
    """Load and validate a documents file; duplicate ids are rejected."""
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        if not isinstance(obj, Mapping):
            raise ValidationError(f"{where}: record must be a JSON object")
        doc = document_from_record(obj, where=where)
        if doc.id in seen:
            raise ValidationError(f"{where}: duplicate document id '{doc.id}'")
        seen.add(doc.id)
        if schema is not None:
            doc.validate_against(schema)
        docs.append(doc)
    return docs
