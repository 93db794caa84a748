import math

import numpy as np
import pytest

from fable.errors import ValidationError
from fable.evaluate import (
    EvalConfig,
    EvalReport,
    QueryResult,
    average_precision,
    compare_runs,
    evaluate_run,
    k_at_percent,
    ndcg_at,
    pct_label,
    rank_pool,
)
from fable.types import RelevancePool, make_pool


def pool_of(facet, query_id, relevances):
    return RelevancePool(
        facet, query_id,
        tuple((f"{query_id}_c{i}", r) for i, r in enumerate(relevances)),
    )


class TestKRule:
    def test_spec_values(self):
        assert k_at_percent(0.20, 50) == 10
        assert k_at_percent(0.10, 23) == 2
        assert k_at_percent(0.10, 3) == 1

    def test_bounds(self):
        with pytest.raises(ValidationError):
            k_at_percent(0.0, 10)
        with pytest.raises(ValidationError):
            k_at_percent(0.2, 0)


class TestNdcg:
    def test_ideal_ranking_is_one(self):
        assert ndcg_at([3, 2, 0], 3) == 1.0

    def test_derived_two_item_case(self):
        # DCG = 3 / log2(3), IDCG = 3
        expected = (3 / math.log2(3)) / 3.0
        assert ndcg_at([0, 3], 2) == pytest.approx(expected, abs=1e-12)
        assert ndcg_at([0, 3], 2) == pytest.approx(0.6309, abs=1e-4)

    def test_exponential_gain(self):
        got = ndcg_at([1, 3], 2, gain="exponential")
        dcg = (2**1 - 1) / math.log2(2) + (2**3 - 1) / math.log2(3)
        idcg = (2**3 - 1) / math.log2(2) + (2**1 - 1) / math.log2(3)
        assert got == pytest.approx(dcg / idcg, abs=1e-12)

    def test_all_zero_pool_warns_zero(self, caplog):
        with caplog.at_level("WARNING"):
            assert ndcg_at([0, 0, 0], 2) == 0.0
        assert any("all-zero" in r.message for r in caplog.records)

    def test_k_out_of_range(self):
        with pytest.raises(ValidationError):
            ndcg_at([1, 2], 3)
        with pytest.raises(ValidationError):
            ndcg_at([1, 2], 0)

    def test_invariant_under_tied_block_permutation(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            rels = rng.integers(0, 4, size=n).tolist()
            if sum(rels) == 0:
                continue
            ideal = sorted(rels, reverse=True)
            shuffled = ideal[:]
            # permute inside each tied block
            start = 0
            for value in sorted(set(ideal), reverse=True):
                block = [i for i, r in enumerate(ideal) if r == value]
                sub = [shuffled[i] for i in block]
                rng.shuffle(sub)
                for i, v in zip(block, sub):
                    shuffled[i] = v
                start += len(block)
            k = int(rng.integers(1, n + 1))
            assert ndcg_at(shuffled, k) == pytest.approx(1.0, abs=1e-12)

    def test_adjacent_swap_never_helps_lower_relevance(self):
        rng = np.random.default_rng(6)
        checked = 0
        while checked < 300:
            n = int(rng.integers(2, 15))
            rels = rng.integers(0, 4, size=n).tolist()
            if sum(rels) == 0:
                continue
            k = int(rng.integers(2, n + 1))
            positions = [i for i in range(k - 1) if rels[i] < rels[i + 1]]
            if not positions:
                continue
            i = positions[0]
            swapped = rels[:]
            swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
            assert ndcg_at(rels, k) <= ndcg_at(swapped, k) + 1e-12
            checked += 1


class TestAveragePrecision:
    def test_two_of_four(self):
        assert average_precision([1, 0, 1, 0]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)

    def test_all_relevant(self):
        assert average_precision([2, 3, 1]) == 1.0

    def test_none_relevant_warns_zero(self, caplog):
        with caplog.at_level("WARNING"):
            assert average_precision([0, 0]) == 0.0
        assert any("no relevant" in r.message for r in caplog.records)

    def test_threshold_binarization(self):
        # threshold 2: only the 3 and 2 count
        assert average_precision([3, 1, 2], threshold=2) == pytest.approx(
            (1 / 1 + 2 / 3) / 2, abs=1e-12
        )

    def test_binary_brute_force_oracle_small_pools(self):
        def ref_ap(rels):
            flags = [1 if r >= 1 else 0 for r in rels]
            total = sum(flags)
            if total == 0:
                return 0.0
            acc = 0.0
            for i in range(len(flags)):
                if flags[i]:
                    acc += sum(flags[: i + 1]) / (i + 1)
            return acc / total

        rng = np.random.default_rng(7)
        for _ in range(500):
            n = int(rng.integers(1, 9))
            rels = rng.integers(0, 2, size=n).tolist()
            assert average_precision(rels) == pytest.approx(ref_ap(rels), abs=1e-12)


class TestRankPool:
    def test_orders_by_cosine(self):
        pool = make_pool("f", "q", ["a", "b"])
        embeddings = {"q": [1.0, 0.0], "a": [0.9, 0.1], "b": [0.1, 0.9]}
        assert rank_pool(pool, embeddings) == ["a", "b"]

    def test_tie_broken_by_doc_id(self):
        pool = make_pool("f", "q", ["zed", "abc"])
        embeddings = {"q": [1.0, 0.0], "zed": [2.0, 0.0], "abc": [4.0, 0.0]}
        assert rank_pool(pool, embeddings) == ["abc", "zed"]

    def test_ranking_is_a_permutation(self):
        rng = np.random.default_rng(1)
        ids = [f"c{i}" for i in range(23)]
        pool = make_pool("f", "q", ids)
        embeddings = {i: rng.standard_normal(8).tolist() for i in ["q", *ids]}
        ranking = rank_pool(pool, embeddings)
        assert sorted(ranking) == sorted(ids)

    def test_missing_embedding_listed(self):
        pool = make_pool("f", "q", ["a"])
        with pytest.raises(ValidationError, match="a"):
            rank_pool(pool, {"q": [1.0]})

    def test_dimension_mismatch(self):
        pool = make_pool("f", "q", ["a"])
        with pytest.raises(ValidationError, match="dimension"):
            rank_pool(pool, {"q": [1.0, 0.0], "a": [1.0]})

    def test_cosine_scale_invariance(self):
        rng = np.random.default_rng(2)
        ids = [f"c{i}" for i in range(10)]
        pool = make_pool("f", "q", ids)
        embeddings = {i: rng.standard_normal(6).tolist() for i in ["q", *ids]}
        scaled = {
            i: (np.asarray(v) * (3.0 if i == "c3" else 1.0)).tolist()
            for i, v in embeddings.items()
        }
        assert rank_pool(pool, embeddings) == rank_pool(pool, scaled)

    def test_negative_euclidean_option(self):
        pool = make_pool("f", "q", ["a", "b"])
        embeddings = {"q": [0.0, 0.0], "a": [1.0, 0.0], "b": [3.0, 0.0]}
        config = EvalConfig(similarity="negative_euclidean")
        assert rank_pool(pool, embeddings, config) == ["a", "b"]


class TestEvaluateRun:
    def run_small(self):
        rng = np.random.default_rng(3)
        pools = [
            pool_of("alpha", "q1", [3, 0, 1, 0, 2]),
            pool_of("beta", "q2", [0, 1, 0, 0]),
        ]
        ids = set()
        for pool in pools:
            ids.add(pool.query_id)
            ids.update(doc_id for doc_id, _ in pool.candidates)
        embeddings = {i: rng.standard_normal(8).tolist() for i in sorted(ids)}
        return pools, embeddings

    def test_aggregated_is_mean_over_queries(self):
        pools, embeddings = self.run_small()
        report = evaluate_run(pools, embeddings)
        for label in ("ndcg_10pct", "ndcg_20pct", "map"):
            values = [q.metrics()[label] for q in report.per_query]
            assert report.aggregated[label] == pytest.approx(np.mean(values), abs=1e-12)
            for facet in report.per_facet:
                facet_values = [
                    q.metrics()[label] for q in report.per_query if q.facet == facet
                ]
                assert report.per_facet[facet][label] == pytest.approx(
                    np.mean(facet_values), abs=1e-12
                )

    def test_two_runs_identical(self):
        pools, embeddings = self.run_small()
        a = evaluate_run(pools, embeddings)
        b = evaluate_run(pools, embeddings)
        assert a.to_dict() == b.to_dict()

    def test_coverage_gap_lists_ids(self):
        pools, embeddings = self.run_small()
        del embeddings["q1_c2"]
        with pytest.raises(ValidationError, match="q1_c2"):
            evaluate_run(pools, embeddings)

    def test_report_round_trip(self, tmp_path):
        pools, embeddings = self.run_small()
        report = evaluate_run(pools, embeddings)
        path = tmp_path / "report.json"
        report.save(path)
        assert EvalReport.load(path).to_dict() == report.to_dict()


def synthetic_report(metric_values, facet="f"):
    per_query = [
        QueryResult(facet, f"q{i}", {"ndcg_20pct": v}, v, [])
        for i, v in enumerate(metric_values)
    ]
    return EvalReport(per_query, {}, {})


class TestCompare:
    def test_equal_runs_fraction_one(self):
        report = synthetic_report([0.2, 0.5, 0.9])
        result = compare_runs(report, report)
        assert result["fraction_non_decreasing"] == {"map": 1.0, "ndcg_20pct": 1.0}

    def test_seventeen_of_twentyfour(self):
        a = synthetic_report([0.5] * 24)
        b_values = [0.6] * 17 + [0.4] * 7
        b = synthetic_report(b_values)
        result = compare_runs(a, b)
        assert result["fraction_non_decreasing"]["ndcg_20pct"] == pytest.approx(
            17 / 24, abs=1e-12
        )
        assert f"{result['fraction_non_decreasing']['ndcg_20pct'] * 100:.2f}" == "70.83"

    def test_single_query_is_zero_or_one(self):
        a = synthetic_report([0.5])
        b = synthetic_report([0.4])
        result = compare_runs(a, b)
        assert result["fraction_non_decreasing"]["ndcg_20pct"] in (0.0, 1.0)

    def test_pool_mismatch_rejected(self):
        a = synthetic_report([0.5, 0.6])
        b = synthetic_report([0.5])
        with pytest.raises(ValidationError, match="different query pools"):
            compare_runs(a, b)

    def test_deltas_reported_per_query(self):
        a = synthetic_report([0.5, 0.5])
        b = synthetic_report([0.7, 0.4])
        result = compare_runs(a, b)
        deltas = [entry["ndcg_20pct"] for entry in result["per_query"]]
        assert deltas == pytest.approx([0.2, -0.1], abs=1e-12)


class TestLabels:
    def test_pct_label_format(self):
        assert pct_label(0.1) == "ndcg_10pct"
        assert pct_label(0.2) == "ndcg_20pct"
        assert pct_label(0.05) == "ndcg_5pct"
