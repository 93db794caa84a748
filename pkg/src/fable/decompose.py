"""Stage 1: one facet unit per schema facet per document.

Documents with pre-labeled facets adopt their labels as original-kind
units; unlabeled facets get a generated summary unit. The summary is an
indicator that guides the later generation stages, not a verified
extractive span.
"""

from __future__ import annotations

import logging
from typing import Iterator, Mapping, Sequence

from .backends import ChatRequest, bounded_map
from .errors import ValidationError
from .prompts import PromptTemplate
from .types import Document, FacetSchema, FacetUnit, Provenance

log = logging.getLogger(__name__)

#: Summaries longer than this many words are kept but flagged; downstream
#: pairwise scoring is length-sensitive.
DEFAULT_LENGTH_CAP_WORDS = 120

LABEL_BACKEND_ID = "labels"


def unit_id_for(doc_id: str, facet: str, kind: str, variant: int = 0) -> str:
    base = f"{doc_id}|{facet}|{kind}"
    return base if variant == 0 else f"{base}#{variant + 1}"


def summarize_request(
    doc: Document, facet: str, templates: Mapping[str, PromptTemplate]
) -> ChatRequest:
    """The stage-1 request: a single user turn asking for the facet summary."""
    prompt = templates["summarize"].render(document=doc.text, facet=facet)
    return ChatRequest(messages=(("user", prompt),), temperature=0.0)


def summarize_facet(
    doc: Document,
    facet: str,
    templates: Mapping[str, PromptTemplate],
    backend,
    length_cap_words: int = DEFAULT_LENGTH_CAP_WORDS,
) -> FacetUnit:
    request = summarize_request(doc, facet, templates)
    text = backend.generate(request)
    if len(text.split()) > length_cap_words:
        log.warning(
            "summary %s exceeds %d words (%d); kept but flagged",
            unit_id_for(doc.id, facet, "summary"),
            length_cap_words,
            len(text.split()),
        )
    return FacetUnit(
        unit_id=unit_id_for(doc.id, facet, "summary"),
        doc_id=doc.id,
        facet=facet,
        kind="summary",
        text=text,
        provenance=Provenance(
            backend_id=backend.backend_id,
            prompt_hash=templates["summarize"].hash,
        ),
    )


def adopt_labeled_facets(doc: Document, schema: FacetSchema) -> list[FacetUnit]:
    """Turn pre-labeled facet spans into original-kind units, schema order.

    Generation is skipped for the labeled facets; callers summarize any
    facet the labels do not cover.
    """
    if not doc.facet_labels:
        raise ValidationError(
            f"document '{doc.id}' has no facet labels; use summarize_facet instead"
        )
    doc.validate_against(schema)
    units = []
    for facet in schema.facets:
        if facet not in doc.facet_labels:
            continue
        units.append(
            FacetUnit(
                unit_id=unit_id_for(doc.id, facet, "original"),
                doc_id=doc.id,
                facet=facet,
                kind="original",
                text=doc.facet_labels[facet],
                provenance=Provenance(backend_id=LABEL_BACKEND_ID, prompt_hash=""),
            )
        )
    return units


def decompose_document(
    doc: Document,
    schema: FacetSchema,
    templates: Mapping[str, PromptTemplate],
    backend,
    concurrency: int = 1,
) -> list[FacetUnit]:
    """All stage-1 units for one document, one per schema facet in order."""
    labels = doc.facet_labels or {}
    adopted = {u.facet: u for u in adopt_labeled_facets(doc, schema)} if labels else {}
    to_generate = [facet for facet in schema.facets if facet not in adopted]
    generated = bounded_map(
        lambda facet: summarize_facet(doc, facet, templates, backend),
        to_generate,
        concurrency,
    )
    by_facet = dict(adopted)
    by_facet.update({u.facet: u for u in generated})
    return [by_facet[facet] for facet in schema.facets]


def decompose_corpus(
    docs: Sequence[Document],
    schema: FacetSchema,
    templates: Mapping[str, PromptTemplate],
    backend,
    concurrency: int = 1,
) -> Iterator[list[FacetUnit]]:
    """Yield each document's stage-1 units in corpus order.

    Streaming per document lets callers persist completed documents even
    if a later backend call fails.
    """
    for doc in docs:
        yield decompose_document(doc, schema, templates, backend, concurrency)


def all_labeled(docs: Sequence[Document], schema: FacetSchema) -> bool:
    return all(
        doc.facet_labels is not None
        and all(facet in doc.facet_labels for facet in schema.facets)
        for doc in docs
    )
