import math

import pytest

from helpers import build_full_units, make_docs
from fable.errors import ValidationError
from fable.recompose import (
    PairingConfig,
    assemble_triplets,
    build_anchor,
    build_query_positive_pairs,
    enumerate_compositions,
    group_doc_units,
    recompose_corpus,
    subsample_documents,
)
from fable.types import FacetSchema


@pytest.fixture
def units3(schema3, templates):
    return build_full_units(make_docs(4), schema3, templates)


def doc_units_for(units, doc_id):
    return group_doc_units(units)[doc_id]


class TestEnumerate:
    def test_three_facets_four_each(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        positives = enumerate_compositions("d1", doc_units, schema3, "method", "positive")
        negatives = enumerate_compositions("d1", doc_units, schema3, "method", "negative")
        assert len(positives) == 4 and len(negatives) == 4

    def test_target_slot_fixed(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        sim_id = doc_units["method"]["similar"].unit_id
        dis_id = doc_units["method"]["dissimilar"].unit_id
        for pdoc in enumerate_compositions("d1", doc_units, schema3, "method", "positive"):
            assert pdoc.unit_for("method") == sim_id
        for pdoc in enumerate_compositions("d1", doc_units, schema3, "method", "negative"):
            assert pdoc.unit_for("method") == dis_id

    def test_two_facets_two_negatives(self, schema2, templates):
        units = build_full_units(make_docs(1), schema2, templates)
        doc_units = doc_units_for(units, "d1")
        assert len(enumerate_compositions("d1", doc_units, schema2, "alpha", "negative")) == 2

    def test_slots_follow_schema_order(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        for pdoc in enumerate_compositions("d1", doc_units, schema3, "result", "positive"):
            assert [facet for facet, _ in pdoc.composition] == list(schema3.facets)

    def test_missing_unit_rejected(self, schema3, units3):
        doc_units = {
            facet: dict(kinds) for facet, kinds in doc_units_for(units3, "d1").items()
        }
        del doc_units["background"]["dissimilar"]
        with pytest.raises(ValidationError, match="dissimilar"):
            enumerate_compositions("d1", doc_units, schema3, "method", "negative")

    def test_text_joins_slot_texts_in_order(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        pdoc = enumerate_compositions(
            "d1", doc_units, schema3, "method", "positive", separator=" | "
        )[0]
        texts = [doc_units[f]["similar"].text for f in schema3.facets]
        assert pdoc.text == " | ".join(texts)


class TestPairs:
    def test_pool_of_five_gives_ten(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        anchor = build_anchor("d1", doc_units, schema3, "method")
        positives = enumerate_compositions("d1", doc_units, schema3, "method", "positive")
        pairs = build_query_positive_pairs(anchor, positives)
        assert len(pairs) == 10

    def test_pairs_unordered_and_deduplicated(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        anchor = build_anchor("d1", doc_units, schema3, "method")
        positives = enumerate_compositions("d1", doc_units, schema3, "method", "positive")
        pairs = build_query_positive_pairs(anchor, positives)
        seen = set()
        for a, b in pairs:
            assert a.pdoc_id != b.pdoc_id
            key = frozenset((a.pdoc_id, b.pdoc_id))
            assert key not in seen
            seen.add(key)

    def test_two_facet_pool_of_three(self, schema2, templates):
        units = build_full_units(make_docs(1), schema2, templates)
        doc_units = doc_units_for(units, "d1")
        anchor = build_anchor("d1", doc_units, schema2, "alpha")
        positives = enumerate_compositions("d1", doc_units, schema2, "alpha", "positive")
        assert len(build_query_positive_pairs(anchor, positives)) == 3

    def test_anchor_uses_stage1_units(self, schema3, units3):
        doc_units = doc_units_for(units3, "d1")
        anchor = build_anchor("d1", doc_units, schema3, "method")
        for facet, unit_id in anchor.composition:
            assert unit_id == doc_units[facet]["summary"].unit_id
        assert anchor.polarity == "anchor"


class TestAssemble:
    def build(self, schema, units, doc_id, facet):
        doc_units = doc_units_for(units, doc_id)
        anchor = build_anchor(doc_id, doc_units, schema, facet)
        positives = enumerate_compositions(doc_id, doc_units, schema, facet, "positive")
        negatives = enumerate_compositions(doc_id, doc_units, schema, facet, "negative")
        pairs = build_query_positive_pairs(anchor, positives)
        return doc_units, pairs, negatives

    def test_cross_all_forty(self, schema3, units3):
        _, pairs, negatives = self.build(schema3, units3, "d1", "method")
        triplets, extra = assemble_triplets(
            pairs, negatives, PairingConfig(mode="cross_all"),
            doc_id="d1", target_facet="method",
        )
        assert len(triplets) == 40
        assert extra == []
        assert all(t.mode == "cross_all" for t in triplets)

    def test_sample_one_reproducible(self, schema3, units3):
        _, pairs, negatives = self.build(schema3, units3, "d1", "method")
        config = PairingConfig(mode="sample_one", seed=22)
        first, _ = assemble_triplets(pairs, negatives, config, doc_id="d1", target_facet="method")
        second, _ = assemble_triplets(pairs, negatives, config, doc_id="d1", target_facet="method")
        assert first == second
        assert len(first) == 10

    def test_empty_negatives_rejected(self, schema3, units3):
        _, pairs, _ = self.build(schema3, units3, "d1", "method")
        with pytest.raises(ValidationError, match="negative"):
            assemble_triplets(pairs, [], PairingConfig(mode="cross_all"),
                              doc_id="d1", target_facet="method")

    def test_random_negative_uses_foreign_summary(self, schema3, units3):
        doc_units, pairs, negatives = self.build(schema3, units3, "d1", "method")
        foreign = [u for u in units3 if u.kind in ("summary", "original")]
        triplets, extra = assemble_triplets(
            pairs, negatives, PairingConfig(mode="random_negative", seed=22),
            doc_id="d1", target_facet="method", doc_units=doc_units,
            schema=schema3, foreign_summaries=foreign,
        )
        units_by_id = {u.unit_id: u for u in units3}
        pdocs_by_id = {p.pdoc_id: p for p in extra}
        assert len(triplets) == len(pairs)
        for triplet in triplets:
            negative = pdocs_by_id[triplet.negative_ref]
            target_unit = units_by_id[negative.unit_for("method")]
            assert target_unit.kind in ("summary", "original")
            assert target_unit.doc_id != "d1"

    def test_random_negative_needs_other_documents(self, schema3, templates):
        units = build_full_units(make_docs(1), schema3, templates)
        with pytest.raises(ValidationError, match="at least 2 documents"):
            recompose_corpus(units, schema3, PairingConfig(mode="random_negative", seed=1))


class TestSubsample:
    def test_half_of_thousand(self):
        docs = [f"d{i}" for i in range(1000)]
        assert len(subsample_documents(docs, 0.5, seed=22)) == 500

    def test_identity_fraction(self):
        docs = [1, 2, 3]
        assert subsample_documents(docs, 1.0, seed=1) == docs

    def test_deterministic(self):
        docs = list(range(100))
        assert subsample_documents(docs, 0.3, 7) == subsample_documents(docs, 0.3, 7)

    def test_tiny_corpus_warns_not_fails(self, caplog):
        with caplog.at_level("WARNING"):
            result = subsample_documents([1], 0.1, seed=1)
        assert result == []
        assert any("keeps none" in r.message for r in caplog.records)


class TestCountLaw:
    @pytest.mark.parametrize("n_facets", [2, 3, 4])
    def test_per_doc_per_facet_counts(self, n_facets, templates):
        schema = FacetSchema("lab", tuple(f"f{i}" for i in range(n_facets)))
        units = build_full_units(make_docs(1), schema, templates)
        doc_units = doc_units_for(units, "d1")
        half = 2 ** (n_facets - 1)
        expected_pairs = math.comb(half + 1, 2)
        for facet in schema.facets:
            anchor = build_anchor("d1", doc_units, schema, facet)
            positives = enumerate_compositions("d1", doc_units, schema, facet, "positive")
            negatives = enumerate_compositions("d1", doc_units, schema, facet, "negative")
            pairs = build_query_positive_pairs(anchor, positives)
            assert len(positives) == half
            assert len(negatives) == half
            assert len(pairs) == expected_pairs
            triplets, _ = assemble_triplets(
                pairs, negatives, PairingConfig(mode="cross_all"),
                doc_id="d1", target_facet=facet,
            )
            assert len(triplets) == expected_pairs * half


class TestCorpusRecompose:
    def test_counts_and_shared_target_facet(self, schema3, units3):
        result = recompose_corpus(units3, schema3, PairingConfig(mode="cross_all"))
        assert result.counts_per_facet == {f: 4 * 40 for f in schema3.facets}
        pdocs_by_id = {p.pdoc_id: p for p in result.pdocs}
        for triplet in result.triplets:
            q = pdocs_by_id[triplet.query_ref]
            p = pdocs_by_id[triplet.positive_ref]
            n = pdocs_by_id[triplet.negative_ref]
            assert q.target_facet == p.target_facet == n.target_facet == triplet.target_facet

    def test_positive_negative_differ_only_at_target_when_patterns_match(
        self, schema3, units3
    ):
        result = recompose_corpus(units3, schema3, PairingConfig(mode="cross_all"))
        pdocs_by_id = {p.pdoc_id: p for p in result.pdocs}
        checked = 0
        for triplet in result.triplets:
            p = pdocs_by_id[triplet.positive_ref]
            n = pdocs_by_id[triplet.negative_ref]
            if p.polarity != "positive":
                continue
            p_rest = [e for e in p.composition if e[0] != triplet.target_facet]
            n_rest = [e for e in n.composition if e[0] != triplet.target_facet]
            if p_rest == n_rest:
                assert p.unit_for(triplet.target_facet) != n.unit_for(triplet.target_facet)
                checked += 1
        assert checked > 0

    def test_no_foreign_units_outside_rn_negative(self, schema3, units3):
        result = recompose_corpus(units3, schema3, PairingConfig(mode="cross_all"))
        units_by_id = {u.unit_id: u for u in units3}
        for pdoc in result.pdocs:
            owner = pdoc.pdoc_id.split("|", 1)[0]
            for _, unit_id in pdoc.composition:
                assert units_by_id[unit_id].doc_id == owner

    def test_subsample_applies_before_assembly(self, schema3, units3):
        config = PairingConfig(mode="cross_all", seed=22, subsample_fraction=0.5)
        result = recompose_corpus(units3, schema3, config)
        assert len(result.doc_ids) == 2
        assert sum(result.counts_per_facet.values()) == 2 * 3 * 40

    def test_per_doc_cap(self, schema3, units3):
        config = PairingConfig(mode="cross_all", seed=22, per_doc_cap=40)
        result = recompose_corpus(units3, schema3, config)
        assert len(result.triplets) == 4 * 40

    def test_seed_required_for_sampling_modes(self):
        with pytest.raises(ValidationError, match="seed"):
            PairingConfig(mode="sample_one")
        with pytest.raises(ValidationError, match="seed"):
            PairingConfig(mode="cross_all", subsample_fraction=0.5)
