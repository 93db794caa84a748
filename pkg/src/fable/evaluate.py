"""Graded-relevance ranking metrics and run evaluation.

NDCG is computed at percent-of-pool cutoffs: K = max(1, round-half-up
(p * |candidates|)). DCG uses gain g(r) = r (linear, default) or
2^r - 1 (exponential) with discount 1/log2(i + 1) at 1-based rank i.
Average precision binarizes graded relevance at a configurable
threshold (default: relevant iff r >= 1). Aggregated report values are
unweighted means over all queries across facets.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .types import RelevancePool
from .util import round_half_up

log = logging.getLogger(__name__)

GAINS = ("linear", "exponential")
SIMILARITIES = ("cosine", "negative_euclidean")


@dataclass(frozen=True)
class EvalConfig:
    ndcg_percents: tuple[float, ...] = (0.10, 0.20)
    gain: str = "linear"
    map_threshold: int = 1
    similarity: str = "cosine"

    def __post_init__(self) -> None:
        if not self.ndcg_percents:
            raise ValidationError("need at least one NDCG percent")
        for p in self.ndcg_percents:
            if not 0.0 < p <= 1.0:
                raise ValidationError(f"NDCG percent {p} outside (0, 1]")
        if self.gain not in GAINS:
            raise ValidationError(f"unknown gain '{self.gain}'")
        if self.map_threshold < 1:
            raise ValidationError("map_threshold must be >= 1")
        if self.similarity not in SIMILARITIES:
            raise ValidationError(f"unknown similarity '{self.similarity}'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "ndcg_percents": list(self.ndcg_percents),
            "gain": self.gain,
            "map_threshold": self.map_threshold,
            "similarity": self.similarity,
        }


def k_at_percent(percent: float, pool_size: int) -> int:
    """Cutoff K for a fractional percent of the pool, floor of one."""
    if not 0.0 < percent <= 1.0:
        raise ValidationError(f"percent {percent} outside (0, 1]")
    if pool_size < 1:
        raise ValidationError("pool must be non-empty")
    return max(1, round_half_up(percent * pool_size))


def pct_label(percent: float) -> str:
    return f"ndcg_{percent * 100:g}pct"


def metric_labels(config: EvalConfig) -> list[str]:
    return [pct_label(p) for p in config.ndcg_percents] + ["map"]


def _gain(relevance: int, gain: str) -> float:
    if gain == "linear":
        return float(relevance)
    return float(2**relevance - 1)


def ndcg_at(relevances: Sequence[int], k: int, gain: str = "linear") -> float:
    """NDCG@K of a ranked relevance list: DCG@K / IDCG@K.

    Returns 0.0 with a warning when the pool has no relevant item at all
    (IDCG = 0).
    """
    if gain not in GAINS:
        raise ValidationError(f"unknown gain '{gain}'")
    if not 1 <= k <= len(relevances):
        raise ValidationError(f"K={k} out of range for a {len(relevances)}-item ranking")
    for r in relevances:
        if r not in (0, 1, 2, 3):
            raise ValidationError(f"relevance {r!r} outside {{0,1,2,3}}")
    dcg = sum(
        _gain(r, gain) / math.log2(i + 1)
        for i, r in enumerate(relevances[:k], start=1)
    )
    ideal = sorted(relevances, reverse=True)
    idcg = sum(
        _gain(r, gain) / math.log2(i + 1) for i, r in enumerate(ideal[:k], start=1)
    )
    if idcg == 0.0:
        log.warning("all-zero relevance pool: NDCG defined as 0.0")
        return 0.0
    return dcg / idcg


def average_precision(relevances: Sequence[int], threshold: int = 1) -> float:
    """AP of a ranked relevance list after binarizing at ``threshold``.

    Mean of precision@i over the ranks i that hold relevant items; a pool
    with no relevant item contributes 0.0 with a warning.
    """
    if not relevances:
        raise ValidationError("empty ranking")
    if threshold < 1:
        raise ValidationError("threshold must be >= 1")
    hits = 0
    precision_sum = 0.0
    for rank, relevance in enumerate(relevances, start=1):
        if relevance >= threshold:
            hits += 1
            precision_sum += hits / rank
    if hits == 0:
        log.warning("pool with no relevant item: AP defined as 0.0")
        return 0.0
    return precision_sum / hits


def _as_vector(doc_id: str, embeddings: Mapping[str, Sequence[float]]) -> np.ndarray:
    return np.asarray(embeddings[doc_id], dtype=float)


def _similarity(query: np.ndarray, candidate: np.ndarray, kind: str) -> float:
    if kind == "negative_euclidean":
        return -float(np.linalg.norm(query - candidate))
    qn = float(np.linalg.norm(query))
    cn = float(np.linalg.norm(candidate))
    if qn == 0.0 or cn == 0.0:
        return 0.0
    return float(np.dot(query, candidate) / (qn * cn))


def rank_pool(
    pool: RelevancePool,
    embeddings: Mapping[str, Sequence[float]],
    config: EvalConfig = EvalConfig(),
) -> list[str]:
    """Candidate ids sorted by similarity to the query, descending;
    ties break by ascending doc id."""
    missing = [
        doc_id
        for doc_id in (pool.query_id, *[c for c, _ in pool.candidates])
        if doc_id not in embeddings
    ]
    if missing:
        raise ValidationError(f"missing embeddings for ids: {missing}")
    query = _as_vector(pool.query_id, embeddings)
    scored = []
    for doc_id, _ in pool.candidates:
        vector = _as_vector(doc_id, embeddings)
        if vector.shape != query.shape:
            raise ValidationError(
                f"embedding dimension mismatch: query {query.shape[0]} vs "
                f"'{doc_id}' {vector.shape[0]}"
            )
        scored.append((doc_id, _similarity(query, vector, config.similarity)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [doc_id for doc_id, _ in scored]


@dataclass
class QueryResult:
    facet: str
    query_id: str
    ndcg: dict[str, float]
    average_precision: float
    ranking: list[str]

    def metrics(self) -> dict[str, float]:
        return {**self.ndcg, "map": self.average_precision}


@dataclass
class EvalReport:
    per_query: list[QueryResult]
    per_facet: dict[str, dict[str, float]]
    aggregated: dict[str, float]
    config: dict[str, Any] = field(default_factory=dict)
    manifest: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_query": [
                {
                    "facet": q.facet,
                    "query_id": q.query_id,
                    "ndcg": q.ndcg,
                    "average_precision": q.average_precision,
                    "ranking": q.ranking,
                }
                for q in self.per_query
            ],
            "per_facet": self.per_facet,
            "aggregated": self.aggregated,
            "config": self.config,
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "EvalReport":
        return cls(
            per_query=[
                QueryResult(
                    facet=q["facet"],
                    query_id=q["query_id"],
                    ndcg=dict(q["ndcg"]),
                    average_precision=q["average_precision"],
                    ranking=list(q["ranking"]),
                )
                for q in obj["per_query"]
            ],
            per_facet={k: dict(v) for k, v in obj["per_facet"].items()},
            aggregated=dict(obj["aggregated"]),
            config=dict(obj.get("config", {})),
            manifest=obj.get("manifest"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate_run(
    pools: Sequence[RelevancePool],
    embeddings: Mapping[str, Sequence[float]],
    config: EvalConfig = EvalConfig(),
    manifest: Optional[str] = None,
) -> EvalReport:
    """Rank and score every pool; report per query, per facet, aggregated."""
    if not pools:
        raise ValidationError("no pools to evaluate")
    needed: set[str] = set()
    for pool in pools:
        needed.add(pool.query_id)
        needed.update(doc_id for doc_id, _ in pool.candidates)
    missing = sorted(needed - set(embeddings))
    if missing:
        raise ValidationError(f"embeddings missing for {len(missing)} ids: {missing[:20]}")

    per_query: list[QueryResult] = []
    for pool in pools:
        ranking = rank_pool(pool, embeddings, config)
        relevance = pool.relevance_by_id
        ranked_relevances = [relevance[doc_id] for doc_id in ranking]
        ndcg = {
            pct_label(p): ndcg_at(ranked_relevances, k_at_percent(p, len(ranking)), config.gain)
            for p in config.ndcg_percents
        }
        ap = average_precision(ranked_relevances, config.map_threshold)
        per_query.append(QueryResult(pool.facet, pool.query_id, ndcg, ap, ranking))

    labels = metric_labels(config)
    per_facet: dict[str, dict[str, float]] = {}
    facets = sorted({q.facet for q in per_query})
    for facet in facets:
        subset = [q for q in per_query if q.facet == facet]
        per_facet[facet] = {
            label: float(np.mean([q.metrics()[label] for q in subset])) for label in labels
        }
    aggregated = {
        label: float(np.mean([q.metrics()[label] for q in per_query])) for label in labels
    }
    return EvalReport(per_query, per_facet, aggregated, config.to_dict(), manifest)


def compare_runs(report_a: EvalReport, report_b: EvalReport) -> dict[str, Any]:
    """Per-query metric deltas (b - a) and, per metric, the fraction of
    queries where b is at least a."""
    keys_a = [(q.facet, q.query_id) for q in report_a.per_query]
    keys_b = [(q.facet, q.query_id) for q in report_b.per_query]
    if sorted(keys_a) != sorted(keys_b):
        raise ValidationError("reports cover different query pools")
    by_key_b = {(q.facet, q.query_id): q for q in report_b.per_query}
    labels = sorted(
        set(report_a.per_query[0].metrics()) & set(report_b.per_query[0].metrics())
    )
    if not labels:
        raise ValidationError("reports share no metrics")
    deltas = []
    non_decreasing = {label: 0 for label in labels}
    for qa in report_a.per_query:
        qb = by_key_b[(qa.facet, qa.query_id)]
        entry: dict[str, Any] = {"facet": qa.facet, "query_id": qa.query_id}
        for label in labels:
            a_val, b_val = qa.metrics()[label], qb.metrics()[label]
            entry[label] = b_val - a_val
            if b_val >= a_val:
                non_decreasing[label] += 1
        deltas.append(entry)
    n = len(report_a.per_query)
    return {
        "queries": n,
        "per_query": deltas,
        "fraction_non_decreasing": {
            label: non_decreasing[label] / n for label in labels
        },
    }
