"""Domain record types.

All types are immutable value objects; they validate their own structural
invariants on construction and raise :class:`ValidationError` on breach.
Persisted forms are line-delimited JSON objects, see :mod:`fable.io`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

from .errors import ValidationError
from .util import aggregate_ratings

UNIT_KINDS = ("original", "summary", "similar", "dissimilar", "regenerated")
POLARITIES = ("positive", "negative", "anchor")
TRIPLET_MODES = ("sample_one", "cross_all", "random_negative", "hard_negative")

#: Built-in facet schemas. "abstract" covers scientific-abstract corpora,
#: "education" covers exam items whose records carry pre-labeled facets.
BUILTIN_SCHEMAS = {
    "abstract": ("background", "method", "result"),
    "education": ("story", "question", "options"),
}


@dataclass(frozen=True)
class FacetSchema:
    """An ordered set of facet names for one document domain.

    The facet order is fixed and defines the concatenation order of
    pseudo-document slots.
    """

    domain_name: str
    facets: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.domain_name:
            raise ValidationError("schema domain_name must be non-empty")
        if len(self.facets) < 2:
            raise ValidationError("schema needs at least 2 facets")
        if len(set(self.facets)) != len(self.facets):
            raise ValidationError(f"duplicate facet names in schema: {self.facets}")

    @property
    def size(self) -> int:
        return len(self.facets)

    def index(self, facet: str) -> int:
        try:
            return self.facets.index(facet)
        except ValueError:
            raise ValidationError(
                f"facet '{facet}' not in schema '{self.domain_name}' {self.facets}"
            ) from None


def builtin_schema(name: str) -> FacetSchema:
    if name not in BUILTIN_SCHEMAS:
        raise ValidationError(
            f"unknown schema '{name}'; built-ins: {sorted(BUILTIN_SCHEMAS)}"
        )
    return FacetSchema(name, BUILTIN_SCHEMAS[name])


def parse_schema(spec: str) -> FacetSchema:
    """Resolve a schema argument: a built-in name or ``name=facet1,facet2,...``."""
    if "=" in spec:
        name, _, facet_csv = spec.partition("=")
        facets = tuple(f.strip() for f in facet_csv.split(",") if f.strip())
        return FacetSchema(name.strip(), facets)
    return builtin_schema(spec)


@dataclass(frozen=True)
class Document:
    """One corpus record, optionally carrying pre-labeled facet spans."""

    id: str
    text: str
    facet_labels: Optional[Mapping[str, str]] = None
    meta: Optional[Mapping[str, Any]] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if not isinstance(self.text, str) or not self.text:
            raise ValidationError(f"document '{self.id}' has empty text")

    def validate_against(self, schema: FacetSchema) -> None:
        if self.facet_labels is None:
            return
        for facet, value in self.facet_labels.items():
            if facet not in schema.facets:
                raise ValidationError(
                    f"document '{self.id}' labels facet '{facet}' outside schema "
                    f"'{schema.domain_name}'"
                )
            if not isinstance(value, str) or not value:
                raise ValidationError(
                    f"document '{self.id}' has empty label for facet '{facet}'"
                )


@dataclass(frozen=True)
class Provenance:
    """Where a facet unit came from.

    ``source_unit_id`` links a generated unit to the unit it was
    conditioned on: the summary/original unit for similar/dissimilar
    units, the prior negative for regenerated units.
    """

    backend_id: str
    prompt_hash: str
    mining_round: int = 0
    source_unit_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mining_round < 0:
            raise ValidationError("mining_round must be >= 0")


@dataclass(frozen=True)
class FacetUnit:
    """One facet-scoped text fragment with generation provenance."""

    unit_id: str
    doc_id: str
    facet: str
    kind: str
    text: str
    provenance: Provenance
    score: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in UNIT_KINDS:
            raise ValidationError(f"unit '{self.unit_id}': unknown kind '{self.kind}'")
        if not self.text:
            raise ValidationError(f"unit '{self.unit_id}' has empty text")
        if self.kind != "regenerated" and self.provenance.mining_round != 0:
            raise ValidationError(
                f"unit '{self.unit_id}': mining_round must be 0 for kind '{self.kind}'"
            )
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                f"unit '{self.unit_id}': score {self.score} outside [0, 1]"
            )

    def with_score(self, score: float) -> "FacetUnit":
        return replace(self, score=score)


@dataclass(frozen=True)
class PseudoDocument:
    """A recomposed document: one unit per schema facet, in schema order.

    ``pdoc_id`` is a deterministic identifier derived from the source
    document, target facet, polarity, and slot pattern; triplets reference
    pseudo-documents by it.
    """

    pdoc_id: str
    composition: tuple[tuple[str, str], ...]
    target_facet: str
    polarity: str
    text: str

    def __post_init__(self) -> None:
        if self.polarity not in POLARITIES:
            raise ValidationError(
                f"pseudo-document '{self.pdoc_id}': unknown polarity '{self.polarity}'"
            )
        facets = [facet for facet, _ in self.composition]
        if len(set(facets)) != len(facets):
            raise ValidationError(
                f"pseudo-document '{self.pdoc_id}': duplicate facet slot"
            )
        if self.target_facet not in facets:
            raise ValidationError(
                f"pseudo-document '{self.pdoc_id}': target facet "
                f"'{self.target_facet}' has no slot"
            )

    def unit_for(self, facet: str) -> str:
        for slot_facet, unit_id in self.composition:
            if slot_facet == facet:
                return unit_id
        raise ValidationError(f"pseudo-document '{self.pdoc_id}': no slot for '{facet}'")


@dataclass(frozen=True)
class Triplet:
    """(query, positive, negative) pseudo-document references for one facet."""

    target_facet: str
    query_ref: str
    positive_ref: str
    negative_ref: str
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in TRIPLET_MODES:
            raise ValidationError(f"unknown triplet mode '{self.mode}'")
        if self.query_ref == self.positive_ref:
            raise ValidationError(
                f"triplet query and positive are the same pseudo-document "
                f"'{self.query_ref}'"
            )


@dataclass(frozen=True)
class RelevancePool:
    """One faceted query with graded (0-3) candidates.

    When per-annotator labels are present, the stored relevance must equal
    the round-half-up mean of the annotator values.
    """

    facet: str
    query_id: str
    candidates: tuple[tuple[str, int], ...]
    annotator_labels: Optional[tuple[Mapping[str, int], ...]] = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc_id, relevance in self.candidates:
            if doc_id == self.query_id:
                raise ValidationError(
                    f"pool '{self.query_id}': query appears among candidates"
                )
            if doc_id in seen:
                raise ValidationError(
                    f"pool '{self.query_id}': duplicate candidate '{doc_id}'"
                )
            seen.add(doc_id)
            if not isinstance(relevance, int) or relevance not in (0, 1, 2, 3):
                raise ValidationError(
                    f"pool '{self.query_id}': relevance {relevance!r} for "
                    f"'{doc_id}' outside {{0,1,2,3}}"
                )
        if self.annotator_labels is not None:
            for doc_id, relevance in self.candidates:
                ratings = []
                for labels in self.annotator_labels:
                    if doc_id in labels:
                        ratings.append(labels[doc_id])
                if not ratings:
                    raise ValidationError(
                        f"pool '{self.query_id}': candidate '{doc_id}' missing "
                        f"from annotator labels"
                    )
                expected = aggregate_ratings(ratings)
                if expected != relevance:
                    raise ValidationError(
                        f"pool '{self.query_id}': relevance {relevance} for "
                        f"'{doc_id}' != round-half-up mean {expected} of {ratings}"
                    )

    @property
    def relevance_by_id(self) -> dict[str, int]:
        return dict(self.candidates)


@dataclass(frozen=True)
class RunManifest:
    """Provenance record emitted next to every pipeline output.

    Identical inputs, seed, and mock backends produce byte-identical
    manifests; nothing time- or path-dependent is stored.
    """

    seed: int
    config_hash: str
    prompt_hashes: Mapping[str, str]
    backend_ids: Mapping[str, str]
    counts: Mapping[str, Any]
    tool_version: str
    config: Mapping[str, Any] = field(default_factory=dict)
    stages: Mapping[str, str] = field(default_factory=dict)


def make_pool(
    facet: str,
    query_id: str,
    candidate_ids: Sequence[str],
    annotator_labels: Optional[Sequence[Mapping[str, int]]] = None,
) -> RelevancePool:
    """Build a pool, aggregating annotator ratings when given.

    Without annotator labels every candidate gets relevance 0 (a pool
    skeleton awaiting annotation).
    """
    if annotator_labels:
        labels = tuple(dict(m) for m in annotator_labels)
        candidates = []
        for doc_id in candidate_ids:
            ratings = [m[doc_id] for m in labels if doc_id in m]
            if not ratings:
                raise ValidationError(
                    f"pool '{query_id}': no annotator rating for '{doc_id}'"
                )
            candidates.append((doc_id, aggregate_ratings(ratings)))
        return RelevancePool(facet, query_id, tuple(candidates), labels)
    return RelevancePool(
        facet, query_id, tuple((doc_id, 0) for doc_id in candidate_ids)
    )
