"""Hashing, rounding, and seeding helpers used by several stages."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any, Sequence


def canonical_json(obj: Any) -> str:
    """Deterministic JSON encoding: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def short_hash(text: str, length: int = 8) -> str:
    return sha256_hex(text)[:length]


def derive_seed(seed: int, label: str) -> int:
    """Derive a stage-specific seed from the single run seed.

    Every source of randomness in the pipeline derives its own seed this
    way, so stages are reproducible in isolation and insensitive to each
    other's consumption of the generator.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero's lower side.

    Evaluated on the binary float value of ``x``; callers that need exact
    half handling on rationals should use integer arithmetic instead
    (see :func:`aggregate_ratings`).
    """
    return math.floor(x + 0.5)


def aggregate_ratings(values: Sequence[int]) -> int:
    """Round-half-up mean of integer ratings, computed exactly.

    floor(sum/n + 1/2) without float error: (2*sum + n) // (2*n).
    """
    if not values:
        raise ValueError("no ratings to aggregate")
    total = sum(values)
    n = len(values)
    return (2 * total + n) // (2 * n)
