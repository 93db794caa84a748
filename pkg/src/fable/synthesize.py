"""Stage 2: facet-wise similar and dissimilar fragments via self-feeding.

Each generation call replays the stage-1 exchange (the summarize prompt
and the facet unit it produced) as prior conversation turns, then asks
for the new fragment. Running this stage without stage-1 units is
refused: generating directly from the raw document leaks non-target
facets into the output.
"""

from __future__ import annotations

import logging
from typing import Iterator, Mapping, Sequence

from .backends import ChatRequest, bounded_map
from .decompose import summarize_request, unit_id_for
from .errors import ValidationError
from .prompts import PromptTemplate
from .types import Document, FacetSchema, FacetUnit, Provenance

log = logging.getLogger(__name__)

DEFAULT_SYNTH_TEMPERATURE = 0.7


def stage1_exchange(
    doc: Document,
    facet: str,
    base_unit: FacetUnit,
    templates: Mapping[str, PromptTemplate],
) -> tuple[tuple[str, str], ...]:
    """The prior turns fed back to the model: the summarize prompt and the
    facet text it yielded. For labeled corpora the original label text
    plays the assistant turn."""
    prompt = summarize_request(doc, facet, templates).messages[0][1]
    return (("user", prompt), ("assistant", base_unit.text))


def _generate_fragment(
    doc: Document,
    facet: str,
    base_unit: FacetUnit,
    templates: Mapping[str, PromptTemplate],
    backend,
    stage: str,
    kind: str,
    temperature: float,
    variant: int,
) -> FacetUnit:
    if base_unit.kind not in ("summary", "original"):
        raise ValidationError(
            f"stage-2 conditioning unit must be summary or original, got "
            f"'{base_unit.kind}' ({base_unit.unit_id})"
        )
    if base_unit.facet != facet:
        raise ValidationError(
            f"conditioning unit '{base_unit.unit_id}' is for facet "
            f"'{base_unit.facet}', not '{facet}'"
        )
    prompt = templates[stage].render(facet=facet)
    if variant:
        prompt = f"{prompt} (variant {variant + 1})"
    messages = stage1_exchange(doc, facet, base_unit, templates) + (("user", prompt),)
    text = backend.generate(ChatRequest(messages=messages, temperature=temperature))
    return FacetUnit(
        unit_id=unit_id_for(doc.id, facet, kind, variant),
        doc_id=doc.id,
        facet=facet,
        kind=kind,
        text=text,
        provenance=Provenance(
            backend_id=backend.backend_id,
            prompt_hash=templates[stage].hash,
            source_unit_id=base_unit.unit_id,
        ),
    )


def generate_similar(
    doc: Document,
    facet: str,
    summary: FacetUnit,
    templates: Mapping[str, PromptTemplate],
    backend,
    temperature: float = DEFAULT_SYNTH_TEMPERATURE,
    variant: int = 0,
) -> FacetUnit:
    return _generate_fragment(
        doc, facet, summary, templates, backend, "similar", "similar", temperature, variant
    )


def generate_dissimilar(
    doc: Document,
    facet: str,
    summary: FacetUnit,
    templates: Mapping[str, PromptTemplate],
    backend,
    temperature: float = DEFAULT_SYNTH_TEMPERATURE,
    variant: int = 0,
) -> FacetUnit:
    return _generate_fragment(
        doc, facet, summary, templates, backend, "dissimilar", "dissimilar", temperature, variant
    )


def regenerate_negative(
    doc: Document,
    facet: str,
    summary: FacetUnit,
    prior_unit: FacetUnit,
    current_score: float,
    band: tuple[float, float],
    templates: Mapping[str, PromptTemplate],
    backend,
    temperature: float = DEFAULT_SYNTH_TEMPERATURE,
) -> FacetUnit:
    """Regenerate a too-easy negative toward the target score band.

    The rendered prompt carries the unit's current similarity score and
    the band bounds, extending the self-fed transcript with the prior
    negative as an assistant turn.
    """
    low, high = band
    if not low < high:
        raise ValidationError(f"invalid score band ({low}, {high})")
    if prior_unit.kind not in ("dissimilar", "regenerated"):
        raise ValidationError(
            f"can only regenerate dissimilar/regenerated units, got "
            f"'{prior_unit.kind}' ({prior_unit.unit_id})"
        )
    if prior_unit.score is None or abs(prior_unit.score - current_score) > 1e-12:
        raise ValidationError(
            f"current_score {current_score} does not match the score recorded "
            f"on '{prior_unit.unit_id}' ({prior_unit.score})"
        )
    prompt = templates["regenerate"].render(
        facet=facet, score=f"{current_score:.2f}", low=f"{low:.2f}", high=f"{high:.2f}"
    )
    messages = stage1_exchange(doc, facet, summary, templates) + (
        ("user", templates["dissimilar"].render(facet=facet)),
        ("assistant", prior_unit.text),
        ("user", prompt),
    )
    text = backend.generate(ChatRequest(messages=messages, temperature=temperature))
    round_ = prior_unit.provenance.mining_round + 1
    return FacetUnit(
        unit_id=f"{doc.id}|{facet}|regenerated|r{round_}",
        doc_id=doc.id,
        facet=facet,
        kind="regenerated",
        text=text,
        provenance=Provenance(
            backend_id=backend.backend_id,
            prompt_hash=templates["regenerate"].hash,
            mining_round=round_,
            source_unit_id=prior_unit.unit_id,
        ),
    )


def base_units_by_facet(
    doc_units: Sequence[FacetUnit], schema: FacetSchema, doc_id: str
) -> dict[str, FacetUnit]:
    """Pick the stage-1 unit (summary or original) for every schema facet."""
    by_facet: dict[str, FacetUnit] = {}
    for unit in doc_units:
        if unit.doc_id == doc_id and unit.kind in ("summary", "original"):
            by_facet.setdefault(unit.facet, unit)
    missing = [facet for facet in schema.facets if facet not in by_facet]
    if missing:
        raise ValidationError(
            f"document '{doc_id}' lacks stage-1 units for facets {missing}; "
            f"run decompose first"
        )
    return by_facet


def synthesize_document(
    doc: Document,
    doc_units: Sequence[FacetUnit],
    schema: FacetSchema,
    templates: Mapping[str, PromptTemplate],
    backend,
    variants: int = 1,
    temperature: float = DEFAULT_SYNTH_TEMPERATURE,
    concurrency: int = 1,
) -> list[FacetUnit]:
    """Similar and dissimilar units for one document, schema order, sim
    before dis per facet."""
    if variants < 1:
        raise ValidationError("variants must be >= 1")
    base = base_units_by_facet(doc_units, schema, doc.id)
    tasks = []
    for facet in schema.facets:
        for variant in range(variants):
            tasks.append(("similar", facet, variant))
            tasks.append(("dissimilar", facet, variant))

    def run(task: tuple[str, str, int]) -> FacetUnit:
        stage, facet, variant = task
        maker = generate_similar if stage == "similar" else generate_dissimilar
        return maker(
            doc, facet, base[facet], templates, backend,
            temperature=temperature, variant=variant,
        )

    return bounded_map(run, tasks, concurrency)


def synthesize_corpus(
    docs: Sequence[Document],
    units: Sequence[FacetUnit],
    schema: FacetSchema,
    templates: Mapping[str, PromptTemplate],
    backend,
    variants: int = 1,
    temperature: float = DEFAULT_SYNTH_TEMPERATURE,
    concurrency: int = 1,
) -> Iterator[list[FacetUnit]]:
    """Yield each document's stage-2 units in corpus order."""
    by_doc: dict[str, list[FacetUnit]] = {}
    for unit in units:
        by_doc.setdefault(unit.doc_id, []).append(unit)
    for doc in docs:
        yield synthesize_document(
            doc,
            by_doc.get(doc.id, []),
            schema,
            templates,
            backend,
            variants=variants,
            temperature=temperature,
            concurrency=concurrency,
        )
