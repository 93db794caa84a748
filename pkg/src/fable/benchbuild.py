"""Benchmark pool construction and inter-annotator agreement.

Query selection follows score dispersion: every item's facet text is
scored against every other item's, each item's standard deviation over
those pairwise scores is taken (population formula; the comparison set
is all other same-facet items), and the items with the widest spread are
picked first. Candidate pools are the remaining items ranked the same
way, never containing a query id of the same facet.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .backends import bounded_map
from .errors import ValidationError
from .types import Document, RelevancePool, make_pool

log = logging.getLogger(__name__)


def facet_text(item: Document, facet: str) -> str:
    if not item.facet_labels or facet not in item.facet_labels:
        raise ValidationError(
            f"item '{item.id}' carries no label for facet '{facet}'"
        )
    return item.facet_labels[facet]


@dataclass
class ScoreMatrix:
    """Pairwise facet-text scores: entry [i, j] = score(item_i, item_j),
    diagonal unused."""

    ids: list[str]
    values: np.ndarray

    def std_by_id(self) -> dict[str, float]:
        n = len(self.ids)
        stds = {}
        for i, item_id in enumerate(self.ids):
            row = np.concatenate([self.values[i, :i], self.values[i, i + 1 :]])
            stds[item_id] = float(row.std(ddof=0)) if row.size else 0.0
        return stds


def score_matrix(
    items: Sequence[Document], facet: str, scorer, concurrency: int = 1
) -> ScoreMatrix:
    ids = [item.id for item in items]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate item ids")
    texts = [facet_text(item, facet) for item in items]
    n = len(items)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    scores = bounded_map(
        lambda ij: scorer.score(texts[ij[0]], texts[ij[1]]), pairs, concurrency
    )
    values = np.zeros((n, n), dtype=float)
    for (i, j), score in zip(pairs, scores):
        values[i, j] = score
    return ScoreMatrix(ids, values)


def _ranked_by_spread(stds: Mapping[str, float]) -> list[str]:
    # Widest spread first; ties break by ascending id.
    return [item_id for item_id, _ in sorted(stds.items(), key=lambda kv: (-kv[1], kv[0]))]


def select_queries(
    items: Sequence[Document],
    facet: str,
    k: int,
    scorer,
    type_balance: Optional[Mapping[str, int]] = None,
    matrix: Optional[ScoreMatrix] = None,
    concurrency: int = 1,
) -> list[str]:
    """The k item ids with the largest pairwise-score dispersion.

    ``type_balance`` constrains how many come from each item type (read
    from ``meta["type"]``), e.g. {"conversation": 4, "lecture": 4}.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if len(items) < k:
        raise ValidationError(f"need at least {k} items, have {len(items)}")
    if type_balance is not None and sum(type_balance.values()) != k:
        raise ValidationError(
            f"type balance {dict(type_balance)} does not sum to k={k}"
        )
    matrix = matrix or score_matrix(items, facet, scorer, concurrency)
    ranked = _ranked_by_spread(matrix.std_by_id())
    if type_balance is None:
        return ranked[:k]
    types_by_id = {}
    for item in items:
        item_type = (item.meta or {}).get("type")
        if item_type is None:
            raise ValidationError(
                f"item '{item.id}' has no meta 'type' but a type balance was requested"
            )
        types_by_id[item.id] = item_type
    quotas = dict(type_balance)
    selected: list[str] = []
    for item_id in ranked:
        item_type = types_by_id[item_id]
        if quotas.get(item_type, 0) > 0:
            selected.append(item_id)
            quotas[item_type] -= 1
        if len(selected) == k:
            return selected
    short = {t: q for t, q in quotas.items() if q > 0}
    raise ValidationError(f"not enough items to fill type balance; short: {short}")


def select_candidates(
    items: Sequence[Document],
    facet: str,
    queries: Sequence[str],
    m: int,
    scorer,
    matrix: Optional[ScoreMatrix] = None,
    concurrency: int = 1,
) -> dict[str, list[str]]:
    """Per-query candidate pools: the top-m non-query items by dispersion.

    When m reaches or exceeds the remainder, all remaining items are used
    (noted in the log). Pools never contain a query id of the facet.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    if m > len(items) - 1:
        raise ValidationError(
            f"m={m} exceeds the {len(items) - 1} items available per query"
        )
    query_set = set(queries)
    unknown = query_set - {item.id for item in items}
    if unknown:
        raise ValidationError(f"queries not among items: {sorted(unknown)}")
    matrix = matrix or score_matrix(items, facet, scorer, concurrency)
    ranked = [i for i in _ranked_by_spread(matrix.std_by_id()) if i not in query_set]
    if m >= len(ranked):
        if ranked and m > len(ranked):
            log.info(
                "facet '%s': only %d non-query items remain; using all of them",
                facet,
                len(ranked),
            )
        chosen = ranked
    else:
        chosen = ranked[:m]
    return {query_id: list(chosen) for query_id in queries}


def build_pools(
    facet: str,
    candidate_pools: Mapping[str, Sequence[str]],
    annotator_labels: Optional[Sequence[Mapping[tuple[str, str], int]]] = None,
) -> list[RelevancePool]:
    """Pool records for each query; relevance 0 skeletons when no
    annotations are given, aggregated labels otherwise.

    Annotator label maps are keyed by (query_id, doc_id).
    """
    pools = []
    for query_id, candidates in candidate_pools.items():
        if annotator_labels:
            per_query = []
            for labels in annotator_labels:
                per_query.append(
                    {
                        doc_id: rating
                        for (q, doc_id), rating in labels.items()
                        if q == query_id
                    }
                )
            pools.append(make_pool(facet, query_id, list(candidates), per_query))
        else:
            pools.append(make_pool(facet, query_id, list(candidates)))
    return pools


@dataclass(frozen=True)
class AgreementStats:
    kendall_tau: float
    spearman_rho: float
    pearson_r: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.kendall_tau, self.spearman_rho, self.pearson_r)


def agreement(
    labels_a: Mapping[str, int], labels_b: Mapping[str, int]
) -> AgreementStats:
    """Kendall's tau-b, Spearman's rho (average ranks), and Pearson's r
    between two labelings of the same id set.

    Zero-variance labelings make all three undefined; NaN is returned
    rather than a silent 0.
    """
    if set(labels_a) != set(labels_b):
        only_a = sorted(set(labels_a) - set(labels_b))
        only_b = sorted(set(labels_b) - set(labels_a))
        raise ValidationError(
            f"labelings cover different ids (only in a: {only_a[:5]}, "
            f"only in b: {only_b[:5]})"
        )
    if len(labels_a) < 2:
        raise ValidationError("agreement needs at least 2 items")
    ids = sorted(labels_a)
    a = np.asarray([labels_a[i] for i in ids], dtype=float)
    b = np.asarray([labels_b[i] for i in ids], dtype=float)
    for values, name in ((a, "a"), (b, "b")):
        if not np.all(np.isin(values, (0, 1, 2, 3))):
            raise ValidationError(f"labeling {name} has ratings outside 0..3")
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        log.warning("zero-variance labeling: agreement statistics undefined")
        nan = float("nan")
        return AgreementStats(nan, nan, nan)
    tau = float(stats.kendalltau(a, b, variant="b").statistic)
    rho = float(stats.spearmanr(a, b).statistic)
    r = float(stats.pearsonr(a, b).statistic)
    return AgreementStats(tau, rho, r)


def facet_average(values: Sequence[AgreementStats]) -> AgreementStats:
    """Mean of each statistic across facets, ignoring NaNs."""
    if not values:
        raise ValidationError("no agreement values to average")

    def mean_of(extract) -> float:
        xs = [extract(v) for v in values if not math.isnan(extract(v))]
        return float(np.mean(xs)) if xs else float("nan")

    return AgreementStats(
        mean_of(lambda v: v.kendall_tau),
        mean_of(lambda v: v.spearman_rho),
        mean_of(lambda v: v.pearson_r),
    )
