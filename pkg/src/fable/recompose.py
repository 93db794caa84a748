"""Stage 3: facet-conditioned pseudo-documents and triplet assembly.

For a schema of n facets and one target facet, the target slot is pinned
to the similar (positive) or dissimilar (negative) fragment while every
other slot independently takes either fragment, giving 2^(n-1) positives
and 2^(n-1) negatives. The anchor pseudo-document is recomposed from the
document's own stage-1 units so all triplet members share the same
compositional format. Pool of anchor plus positives -> all unordered
query-positive pairs -> triplets by pairing mode.

Count law per (document, facet): positives = negatives = 2^(n-1),
pairs = C(2^(n-1) + 1, 2), cross_all triplets = pairs * 2^(n-1).
"""

from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, TypeVar

from .errors import ValidationError
from .types import FacetSchema, FacetUnit, PseudoDocument, Triplet
from .util import derive_seed, round_half_up

log = logging.getLogger(__name__)

T = TypeVar("T")

PAIRING_MODES = ("sample_one", "cross_all", "random_negative")

DEFAULT_SEPARATOR = " "

_SLOT_LETTER = {"similar": "s", "dissimilar": "d", "regenerated": "r",
                "summary": "a", "original": "a"}


@dataclass(frozen=True)
class PairingConfig:
    """How triplets are assembled from the enumerated pseudo-documents."""

    mode: str = "cross_all"
    seed: Optional[int] = None
    subsample_fraction: float = 1.0
    per_doc_cap: Optional[int] = None
    separator: str = DEFAULT_SEPARATOR

    def __post_init__(self) -> None:
        if self.mode not in PAIRING_MODES:
            raise ValidationError(f"unknown pairing mode '{self.mode}'")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValidationError(
                f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}"
            )
        needs_seed = (
            self.mode in ("sample_one", "random_negative")
            or self.subsample_fraction < 1.0
            or self.per_doc_cap is not None
        )
        if needs_seed and self.seed is None:
            raise ValidationError(f"mode '{self.mode}' requires a seed")
        if self.per_doc_cap is not None and self.per_doc_cap < 1:
            raise ValidationError("per_doc_cap must be >= 1")


@dataclass
class RecomposeResult:
    pdocs: list[PseudoDocument] = field(default_factory=list)
    triplets: list[Triplet] = field(default_factory=list)
    counts_per_facet: dict[str, int] = field(default_factory=dict)
    doc_ids: list[str] = field(default_factory=list)


KindMap = Mapping[str, Mapping[str, FacetUnit]]


def group_doc_units(units: Sequence[FacetUnit]) -> dict[str, dict[str, dict[str, FacetUnit]]]:
    """Index units as doc_id -> facet -> kind -> unit (first variant wins)."""
    grouped: dict[str, dict[str, dict[str, FacetUnit]]] = {}
    for unit in units:
        grouped.setdefault(unit.doc_id, {}).setdefault(unit.facet, {}).setdefault(
            unit.kind, unit
        )
    return grouped


def _base_unit(kinds: Mapping[str, FacetUnit], doc_id: str, facet: str) -> FacetUnit:
    unit = kinds.get("original") or kinds.get("summary")
    if unit is None:
        raise ValidationError(
            f"document '{doc_id}' has no summary/original unit for facet '{facet}'"
        )
    return unit


def _require_kind(kinds: Mapping[str, FacetUnit], doc_id: str, facet: str, kind: str) -> FacetUnit:
    if kind not in kinds:
        raise ValidationError(
            f"document '{doc_id}' is missing a {kind} unit for facet '{facet}'"
        )
    return kinds[kind]


def _pdoc(
    doc_id: str,
    target_facet: str,
    polarity: str,
    slots: Sequence[FacetUnit],
    schema: FacetSchema,
    separator: str,
    id_suffix: str = "",
) -> PseudoDocument:
    pattern = "".join(_SLOT_LETTER[u.kind] for u in slots)
    pdoc_id = f"{doc_id}|{target_facet}|{polarity}|{pattern}{id_suffix}"
    return PseudoDocument(
        pdoc_id=pdoc_id,
        composition=tuple((facet, unit.unit_id) for facet, unit in zip(schema.facets, slots)),
        target_facet=target_facet,
        polarity=polarity,
        text=separator.join(unit.text for unit in slots),
    )


def build_anchor(
    doc_id: str,
    doc_units: KindMap,
    schema: FacetSchema,
    target_facet: str,
    separator: str = DEFAULT_SEPARATOR,
) -> PseudoDocument:
    """The query-side pseudo-document: the document's own stage-1 units."""
    schema.index(target_facet)
    slots = [
        _base_unit(doc_units.get(facet, {}), doc_id, facet) for facet in schema.facets
    ]
    return _pdoc(doc_id, target_facet, "anchor", slots, schema, separator)


def enumerate_compositions(
    doc_id: str,
    doc_units: KindMap,
    schema: FacetSchema,
    target_facet: str,
    polarity: str,
    separator: str = DEFAULT_SEPARATOR,
    target_override: Optional[FacetUnit] = None,
) -> list[PseudoDocument]:
    """All 2^(n-1) pseudo-documents with the target slot fixed.

    ``target_override`` substitutes the unit placed in the target slot
    (used by hard-negative supplements, which pin a regenerated unit
    there); otherwise positives take the similar unit and negatives the
    dissimilar one. Enumeration order is deterministic: non-target facets
    in schema order, similar before dissimilar.
    """
    if polarity not in ("positive", "negative"):
        raise ValidationError(f"enumeration polarity must be positive/negative, got '{polarity}'")
    schema.index(target_facet)
    if target_override is not None:
        target_unit = target_override
    else:
        target_kind = "similar" if polarity == "positive" else "dissimilar"
        target_unit = _require_kind(
            doc_units.get(target_facet, {}), doc_id, target_facet, target_kind
        )
    others = [facet for facet in schema.facets if facet != target_facet]
    choices = []
    for facet in others:
        kinds = doc_units.get(facet, {})
        choices.append(
            (
                _require_kind(kinds, doc_id, facet, "similar"),
                _require_kind(kinds, doc_id, facet, "dissimilar"),
            )
        )
    suffix = "" if target_override is None else f"|r{target_override.provenance.mining_round}"
    pdocs = []
    for picks in itertools.product(*[(0, 1)] * len(others)) if others else [()]:
        by_facet = {target_facet: target_unit}
        for facet, (sim, dis), pick in zip(others, choices, picks):
            by_facet[facet] = dis if pick else sim
        slots = [by_facet[facet] for facet in schema.facets]
        pdocs.append(_pdoc(doc_id, target_facet, polarity, slots, schema, separator, suffix))
    return pdocs


def build_query_positive_pairs(
    anchor: PseudoDocument, positives: Sequence[PseudoDocument]
) -> list[tuple[PseudoDocument, PseudoDocument]]:
    """All unordered pairs over the pool {anchor} + positives.

    Each member of a pair can serve as query or positive; the returned
    orientation is (earlier pool member, later pool member).
    """
    pool = [anchor, *positives]
    if len(pool) < 2:
        raise ValidationError("query-positive pool needs at least 2 pseudo-documents")
    ids = [p.pdoc_id for p in pool]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate pseudo-document ids in query-positive pool")
    return list(itertools.combinations(pool, 2))


def assemble_triplets(
    pairs: Sequence[tuple[PseudoDocument, PseudoDocument]],
    negatives: Sequence[PseudoDocument],
    config: PairingConfig,
    *,
    doc_id: str,
    target_facet: str,
    doc_units: Optional[KindMap] = None,
    schema: Optional[FacetSchema] = None,
    foreign_summaries: Optional[Sequence[FacetUnit]] = None,
    triplet_mode: Optional[str] = None,
) -> tuple[list[Triplet], list[PseudoDocument]]:
    """Triplets for one (document, facet) plus any pseudo-documents the
    mode had to construct (random_negative builds its negatives on the
    fly from foreign summary units)."""
    mode = config.mode
    out_mode = triplet_mode or mode
    triplets: list[Triplet] = []
    extra_pdocs: list[PseudoDocument] = []

    if mode == "random_negative":
        if doc_units is None or schema is None:
            raise ValidationError("random_negative needs doc_units and schema")
        eligible = [
            u
            for u in (foreign_summaries or [])
            if u.facet == target_facet and u.doc_id != doc_id
            and u.kind in ("summary", "original")
        ]
        if not eligible:
            raise ValidationError(
                f"random_negative mode needs summary units for facet "
                f"'{target_facet}' from at least one other document"
            )
        rng = random.Random(derive_seed(config.seed or 0, f"rn|{doc_id}|{target_facet}"))
        base_negatives = list(negatives) or enumerate_compositions(
            doc_id, doc_units, schema, target_facet, "negative", config.separator
        )
        for index, (query, positive) in enumerate(pairs):
            base = base_negatives[rng.randrange(len(base_negatives))]
            foreign = eligible[rng.randrange(len(eligible))]
            slots = []
            for facet, unit_id in base.composition:
                if facet == target_facet:
                    slots.append((facet, foreign.unit_id, foreign.text))
                else:
                    kinds = doc_units[facet]
                    unit = next(u for u in kinds.values() if u.unit_id == unit_id)
                    slots.append((facet, unit.unit_id, unit.text))
            pdoc = PseudoDocument(
                pdoc_id=f"{doc_id}|{target_facet}|negative|rn{index}",
                composition=tuple((facet, uid) for facet, uid, _ in slots),
                target_facet=target_facet,
                polarity="negative",
                text=config.separator.join(text for _, _, text in slots),
            )
            extra_pdocs.append(pdoc)
            triplets.append(
                Triplet(target_facet, query.pdoc_id, positive.pdoc_id, pdoc.pdoc_id, out_mode)
            )
        return triplets, extra_pdocs

    if not negatives:
        raise ValidationError(
            f"no negative pseudo-documents for document '{doc_id}' facet "
            f"'{target_facet}'"
        )
    if mode == "cross_all":
        for query, positive in pairs:
            for negative in negatives:
                triplets.append(
                    Triplet(
                        target_facet, query.pdoc_id, positive.pdoc_id,
                        negative.pdoc_id, out_mode,
                    )
                )
        return triplets, extra_pdocs

    # sample_one: one negative drawn uniformly per pair
    rng = random.Random(derive_seed(config.seed or 0, f"negpick|{doc_id}|{target_facet}"))
    for query, positive in pairs:
        negative = negatives[rng.randrange(len(negatives))]
        triplets.append(
            Triplet(target_facet, query.pdoc_id, positive.pdoc_id, negative.pdoc_id, out_mode)
        )
    return triplets, extra_pdocs


def subsample_documents(docs: Sequence[T], fraction: float, seed: int) -> list[T]:
    """Seeded sample of round(fraction * N) items, input order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(docs)
    n_keep = round_half_up(fraction * len(docs))
    if n_keep == 0:
        log.warning(
            "subsampling %d documents at fraction %s keeps none", len(docs), fraction
        )
        return []
    rng = random.Random(derive_seed(seed, "subsample"))
    keep = sorted(rng.sample(range(len(docs)), n_keep))
    return [docs[i] for i in keep]


def recompose_document(
    doc_id: str,
    doc_units: KindMap,
    schema: FacetSchema,
    config: PairingConfig,
    foreign_summaries: Optional[Sequence[FacetUnit]] = None,
) -> tuple[list[PseudoDocument], list[Triplet]]:
    """All pseudo-documents and triplets for one document across facets."""
    pdocs: list[PseudoDocument] = []
    triplets: list[Triplet] = []
    for facet in schema.facets:
        anchor = build_anchor(doc_id, doc_units, schema, facet, config.separator)
        positives = enumerate_compositions(
            doc_id, doc_units, schema, facet, "positive", config.separator
        )
        negatives = enumerate_compositions(
            doc_id, doc_units, schema, facet, "negative", config.separator
        )
        pairs = build_query_positive_pairs(anchor, positives)
        facet_triplets, extra = assemble_triplets(
            pairs,
            negatives,
            config,
            doc_id=doc_id,
            target_facet=facet,
            doc_units=doc_units,
            schema=schema,
            foreign_summaries=foreign_summaries,
        )
        pdocs.extend([anchor, *positives])
        if config.mode != "random_negative":
            pdocs.extend(negatives)
        pdocs.extend(extra)
        triplets.extend(facet_triplets)
    if config.per_doc_cap is not None and len(triplets) > config.per_doc_cap:
        rng = random.Random(derive_seed(config.seed or 0, f"cap|{doc_id}"))
        keep = sorted(rng.sample(range(len(triplets)), config.per_doc_cap))
        triplets = [triplets[i] for i in keep]
    return pdocs, triplets


def recompose_corpus(
    units: Sequence[FacetUnit],
    schema: FacetSchema,
    config: PairingConfig,
) -> RecomposeResult:
    """Run recomposition over every document present in ``units``.

    Document order is first appearance in the unit sequence; subsampling,
    when configured, selects documents before any assembly.
    """
    grouped = group_doc_units(units)
    doc_ids = list(grouped.keys())
    if config.subsample_fraction < 1.0:
        doc_ids = subsample_documents(doc_ids, config.subsample_fraction, config.seed or 0)
    if config.mode == "random_negative" and len(doc_ids) < 2:
        raise ValidationError("random_negative mode needs at least 2 documents")
    foreign = [u for u in units if u.kind in ("summary", "original")]
    result = RecomposeResult(doc_ids=doc_ids)
    result.counts_per_facet = {facet: 0 for facet in schema.facets}
    for doc_id in doc_ids:
        pdocs, triplets = recompose_document(
            doc_id, grouped[doc_id], schema, config, foreign_summaries=foreign
        )
        result.pdocs.extend(pdocs)
        result.triplets.extend(triplets)
        for triplet in triplets:
            result.counts_per_facet[triplet.target_facet] += 1
    return result
