import pytest

from helpers import RecordingGen, make_docs
from fable.backends import MockGenerationBackend, transcript_hash
from fable.decompose import (
    adopt_labeled_facets,
    decompose_corpus,
    decompose_document,
    summarize_facet,
    summarize_request,
)
from fable.errors import ValidationError
from fable.types import Document


def labeled_doc():
    return Document(
        id="t1",
        text="full item text",
        facet_labels={
            "story": "a conversation about housing",
            "question": "why does the student visit the office",
            "options": "1 2 3 4",
        },
    )


class TestSummarize:
    def test_mock_contract(self, schema3, templates):
        doc = make_docs(1)[0]
        backend = MockGenerationBackend(seed=22)
        unit = summarize_facet(doc, "method", templates, backend)
        expected_hash = transcript_hash(summarize_request(doc, "method", templates).messages)
        assert unit.text == f"GEN[{expected_hash}:22]"
        assert unit.kind == "summary"
        assert unit.facet == "method"
        assert unit.provenance.prompt_hash == templates["summarize"].hash

    def test_single_unit_per_call(self, schema3, templates):
        doc = make_docs(1)[0]
        unit = summarize_facet(doc, "method", templates, MockGenerationBackend())
        assert unit.unit_id == f"{doc.id}|method|summary"

    def test_full_document_covers_schema_in_order(self, schema3, templates):
        doc = make_docs(1)[0]
        units = decompose_document(doc, schema3, templates, MockGenerationBackend())
        assert [u.facet for u in units] == list(schema3.facets)
        assert all(u.kind == "summary" for u in units)
        assert len({u.facet for u in units}) == schema3.size

    def test_long_summary_flagged(self, schema3, templates, caplog):
        class LongGen:
            backend_id = "stub"

            def generate(self, request):
                return "word " * 200

        doc = make_docs(1)[0]
        with caplog.at_level("WARNING"):
            summarize_facet(doc, "method", templates, LongGen())
        assert any("exceeds" in r.message for r in caplog.records)


class TestAdoptLabels:
    def test_three_labels_three_originals(self, education_schema):
        units = adopt_labeled_facets(labeled_doc(), education_schema)
        assert [u.facet for u in units] == ["story", "question", "options"]
        assert all(u.kind == "original" for u in units)
        assert units[1].text == "why does the student visit the office"

    def test_unlabeled_doc_directed_to_summarize(self, education_schema):
        doc = Document(id="t2", text="no labels here")
        with pytest.raises(ValidationError, match="summarize_facet"):
            adopt_labeled_facets(doc, education_schema)

    def test_label_outside_schema(self, education_schema):
        doc = Document(id="t3", text="x", facet_labels={"verdict": "guilty"})
        with pytest.raises(ValidationError, match="verdict"):
            adopt_labeled_facets(doc, education_schema)

    def test_partial_labels_mix_with_summaries(self, education_schema, templates):
        doc = Document(
            id="t4", text="item text",
            facet_labels={"story": "the story", "question": "the question"},
        )
        units = decompose_document(doc, education_schema, templates, MockGenerationBackend())
        kinds = {u.facet: u.kind for u in units}
        assert kinds == {"story": "original", "question": "original", "options": "summary"}


class TestDeterminism:
    def test_rerun_reproduces_units(self, schema3, templates):
        docs = make_docs(3)

        def run():
            units = []
            for batch in decompose_corpus(docs, schema3, templates, MockGenerationBackend(seed=9)):
                units.extend(batch)
            return units

        assert run() == run()

    def test_output_order_is_doc_then_facet(self, schema3, templates):
        docs = make_docs(2)
        units = []
        for batch in decompose_corpus(docs, schema3, templates, MockGenerationBackend()):
            units.extend(batch)
        assert [(u.doc_id, u.facet) for u in units] == [
            (d.id, f) for d in docs for f in schema3.facets
        ]

    def test_transcript_is_single_user_turn(self, schema3, templates):
        doc = make_docs(1)[0]
        backend = RecordingGen()
        summarize_facet(doc, "result", templates, backend)
        (request,) = backend.requests
        assert [role for role, _ in request.messages] == ["user"]
        assert doc.text in request.messages[0][1]
        assert "result" in request.messages[0][1]
