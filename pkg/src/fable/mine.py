"""Hard-negative mining: classify scored negatives, regenerate easy ones
toward a target band, accept those landing under the ceiling, and
recompose them into supplemental triplets.

Thresholds are strict-less at both ends: a negative is easy when its
score is strictly below the easy threshold, and a regenerated unit is
accepted when strictly below the hard ceiling. Initial negatives at or
above the ceiling risk being false negatives; they are kept with a
warning by default (dropping is opt-in).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .backends import bounded_map
from .errors import ValidationError
from .prompts import PromptTemplate
from .recompose import (
    PairingConfig,
    assemble_triplets,
    build_anchor,
    build_query_positive_pairs,
    enumerate_compositions,
    group_doc_units,
)
from .synthesize import regenerate_negative
from .types import Document, FacetSchema, FacetUnit, PseudoDocument, Triplet

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class MiningConfig:
    easy_threshold: float = 0.25
    hard_ceiling: float = 0.5
    target_band: tuple[float, float] = (0.25, 0.5)
    max_rounds: int = 1
    over_ceiling_policy: str = "keep_warn"

    def __post_init__(self) -> None:
        if not 0.0 <= self.easy_threshold < self.hard_ceiling <= 1.0:
            raise ValidationError(
                f"need 0 <= easy_threshold < hard_ceiling <= 1, got "
                f"({self.easy_threshold}, {self.hard_ceiling})"
            )
        low, high = self.target_band
        if not (self.easy_threshold <= low < high <= self.hard_ceiling):
            raise ValidationError(
                f"target band {self.target_band} must sit within "
                f"[{self.easy_threshold}, {self.hard_ceiling}]"
            )
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.over_ceiling_policy not in ("keep_warn", "drop"):
            raise ValidationError(
                f"unknown over_ceiling_policy '{self.over_ceiling_policy}'"
            )


@dataclass
class Classified:
    easy: list[FacetUnit] = field(default_factory=list)
    retained: list[FacetUnit] = field(default_factory=list)
    over_ceiling: list[FacetUnit] = field(default_factory=list)


@dataclass
class MiningResult:
    supplement_triplets: list[Triplet]
    supplement_pdocs: list[PseudoDocument]
    regenerated_units: list[FacetUnit]
    scored_units: list[FacetUnit]
    accepted_unit_ids: list[str]
    over_ceiling_unit_ids: list[str]
    report: dict[str, Any]


def _counterpart_for(
    unit: FacetUnit, grouped: Mapping[str, Mapping[str, Mapping[str, FacetUnit]]]
) -> FacetUnit:
    kinds = grouped.get(unit.doc_id, {}).get(unit.facet, {})
    counterpart = kinds.get("summary") or kinds.get("original")
    if counterpart is None:
        raise ValidationError(
            f"negative unit '{unit.unit_id}' has no summary/original "
            f"counterpart for scoring"
        )
    return counterpart


def score_negatives(
    units: Sequence[FacetUnit],
    scorer,
    concurrency: int = 1,
    context: Optional[Sequence[FacetUnit]] = None,
) -> list[FacetUnit]:
    """Attach scorer(summary, negative) to every dissimilar/regenerated
    unit that lacks a score; other units pass through unchanged. Input
    order is preserved and rescoring is a no-op per backend.

    ``context`` supplies the summary/original counterparts when ``units``
    is only a slice of the corpus (for example, a batch of regenerated
    negatives)."""
    grouped = group_doc_units(context if context is not None else units)
    todo: list[tuple[int, FacetUnit, FacetUnit]] = []
    for index, unit in enumerate(units):
        if unit.kind in ("dissimilar", "regenerated") and unit.score is None:
            todo.append((index, _counterpart_for(unit, grouped), unit))
    scores = bounded_map(
        lambda item: scorer.score(item[1].text, item[2].text), todo, concurrency
    )
    out = list(units)
    for (index, _, unit), score in zip(todo, scores):
        out[index] = unit.with_score(float(score))
    return out


def classify(units: Sequence[FacetUnit], config: MiningConfig) -> Classified:
    """Partition scored negatives by score band (strict-less boundaries)."""
    result = Classified()
    for unit in units:
        if unit.kind not in ("dissimilar", "regenerated"):
            continue
        if unit.score is None:
            raise ValidationError(f"unit '{unit.unit_id}' is unscored; score first")
        if unit.score < config.easy_threshold:
            result.easy.append(unit)
        elif unit.score < config.hard_ceiling:
            result.retained.append(unit)
        else:
            result.over_ceiling.append(unit)
    return result


def _histogram(scores: Sequence[float]) -> list[int]:
    counts, _ = np.histogram(np.asarray(scores, dtype=float), bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return counts.astype(int).tolist()


def _mean(scores: Sequence[float]) -> Optional[float]:
    return float(np.mean(scores)) if scores else None


def run_mining(
    docs: Sequence[Document],
    units: Sequence[FacetUnit],
    schema: FacetSchema,
    config: MiningConfig,
    generator,
    scorer,
    templates: Mapping[str, PromptTemplate],
    pairing: Optional[PairingConfig] = None,
    concurrency: int = 1,
) -> MiningResult:
    """The full mining pass over a scored stage-2 corpus.

    Per round, every easy chain end is regenerated exactly once and
    rescored; after the final round, chain ends scoring under the hard
    ceiling are accepted and recomposed into supplemental triplets with
    mode ``hard_negative``. Base triplets are never touched here; a
    regenerated unit that is still easy is accepted with a flag, per the
    default policy, and counted in the report.
    """
    pairing = pairing or PairingConfig(mode="cross_all")
    docs_by_id = {doc.id: doc for doc in docs}
    scored = score_negatives(units, scorer, concurrency)
    grouped = group_doc_units(scored)
    initial = classify(scored, config)
    if initial.over_ceiling:
        if config.over_ceiling_policy == "keep_warn":
            log.warning(
                "%d initial negatives score >= %.2f and may be false negatives; "
                "kept (policy keep_warn)",
                len(initial.over_ceiling),
                config.hard_ceiling,
            )
        else:
            log.warning(
                "%d initial negatives score >= %.2f; flagged for drop",
                len(initial.over_ceiling),
                config.hard_ceiling,
            )

    rounds_report: list[dict[str, Any]] = []
    regenerated_all: list[FacetUnit] = []
    chain_ends: list[FacetUnit] = list(initial.easy)
    for round_number in range(1, config.max_rounds + 1):
        easy_now = [u for u in chain_ends if u.score is not None and u.score < config.easy_threshold]
        if not easy_now:
            break

        def regen(unit: FacetUnit) -> FacetUnit:
            doc = docs_by_id.get(unit.doc_id)
            if doc is None:
                raise ValidationError(
                    f"unit '{unit.unit_id}' references unknown document '{unit.doc_id}'"
                )
            summary = _counterpart_for(unit, grouped)
            return regenerate_negative(
                doc, unit.facet, summary, unit, unit.score,
                config.target_band, templates, generator,
            )

        fresh = bounded_map(regen, easy_now, concurrency)
        fresh = score_negatives(fresh, scorer, concurrency, context=scored)
        regenerated_all.extend(fresh)
        before = [u.score for u in easy_now]
        after = [u.score for u in fresh]
        rounds_report.append(
            {
                "round": round_number,
                "regenerated": len(fresh),
                "before_mean": _mean(before),
                "after_mean": _mean(after),
                "before_histogram": _histogram(before),
                "after_histogram": _histogram(after),
            }
        )
        chain_ends = [u for u in chain_ends if u.score >= config.easy_threshold] + fresh

    accepted = [
        u for u in regenerated_all
        if u.unit_id in {c.unit_id for c in chain_ends} and u.score < config.hard_ceiling
    ]
    rejected = [u for u in regenerated_all if u not in accepted]
    still_easy = [u for u in accepted if u.score < config.easy_threshold]
    if still_easy:
        log.warning(
            "%d accepted hard negatives still score below %.2f after "
            "regeneration; flagged",
            len(still_easy),
            config.easy_threshold,
        )

    supplement_triplets: list[Triplet] = []
    supplement_pdocs: list[PseudoDocument] = []
    supplement_mode = "cross_all" if pairing.mode == "cross_all" else "sample_one"
    for unit in accepted:
        doc_units = grouped[unit.doc_id]
        anchor = build_anchor(unit.doc_id, doc_units, schema, unit.facet, pairing.separator)
        positives = enumerate_compositions(
            unit.doc_id, doc_units, schema, unit.facet, "positive", pairing.separator
        )
        negatives = enumerate_compositions(
            unit.doc_id, doc_units, schema, unit.facet, "negative",
            pairing.separator, target_override=unit,
        )
        pairs = build_query_positive_pairs(anchor, positives)
        triplets, _ = assemble_triplets(
            pairs,
            negatives,
            PairingConfig(mode=supplement_mode, seed=pairing.seed or 0,
                          separator=pairing.separator),
            doc_id=unit.doc_id,
            target_facet=unit.facet,
            triplet_mode="hard_negative",
        )
        supplement_triplets.extend(triplets)
        supplement_pdocs.extend([anchor, *positives, *negatives])

    report = {
        "initial": {
            "easy": len(initial.easy),
            "retained": len(initial.retained),
            "over_ceiling": len(initial.over_ceiling),
        },
        "over_ceiling_unit_ids": sorted(u.unit_id for u in initial.over_ceiling),
        "over_ceiling_policy": config.over_ceiling_policy,
        "rounds": rounds_report,
        "accepted": len(accepted),
        "rejected": len(rejected),
        "accepted_still_easy": len(still_easy),
        "supplement_triplets": len(supplement_triplets),
    }
    return MiningResult(
        supplement_triplets=supplement_triplets,
        supplement_pdocs=supplement_pdocs,
        regenerated_units=regenerated_all,
        scored_units=scored,
        accepted_unit_ids=[u.unit_id for u in accepted],
        over_ceiling_unit_ids=[u.unit_id for u in initial.over_ceiling],
        report=report,
    )


def drop_over_ceiling_triplets(
    triplets: Sequence[Triplet],
    pdocs: Sequence[PseudoDocument],
    over_ceiling_unit_ids: Sequence[str],
) -> tuple[list[Triplet], int]:
    """The drop policy: remove base triplets whose negative carries an
    over-ceiling unit in the target slot. Returns (kept, dropped count)."""
    over = set(over_ceiling_unit_ids)
    if not over:
        return list(triplets), 0
    pdocs_by_id = {p.pdoc_id: p for p in pdocs}
    kept: list[Triplet] = []
    dropped = 0
    for triplet in triplets:
        negative = pdocs_by_id.get(triplet.negative_ref)
        if negative is not None and negative.unit_for(triplet.target_facet) in over:
            dropped += 1
            continue
        kept.append(triplet)
    if dropped:
        log.warning("dropped %d base triplets with over-ceiling negatives", dropped)
    return kept, dropped


def facet_document_similarity(
    units: Sequence[FacetUnit],
    docs: Sequence[Document],
    scorer,
    concurrency: int = 1,
) -> dict[str, dict[str, float]]:
    """Mean scorer(document text, unit text) per facet and unit kind, over
    summary and similar units. A diagnostic of how much each facet tracks
    the whole document."""
    docs_by_id = {doc.id: doc for doc in docs}
    selected = [u for u in units if u.kind in ("summary", "similar")]
    if not selected:
        raise ValidationError("no summary/similar units to score")
    pairs = []
    for unit in selected:
        doc = docs_by_id.get(unit.doc_id)
        if doc is None:
            raise ValidationError(
                f"unit '{unit.unit_id}' references unknown document '{unit.doc_id}'"
            )
        pairs.append((doc.text, unit.text))
    scores = bounded_map(lambda pair: scorer.score(pair[0], pair[1]), pairs, concurrency)
    sums: dict[str, dict[str, list[float]]] = {}
    for unit, score in zip(selected, scores):
        sums.setdefault(unit.facet, {}).setdefault(unit.kind, []).append(float(score))
    table: dict[str, dict[str, float]] = {}
    for facet, kinds in sums.items():
        table[facet] = {kind: float(np.mean(vals)) for kind, vals in kinds.items()}
    return table
