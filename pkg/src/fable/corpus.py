"""Corpus ingestion and deterministic splitting."""

from __future__ import annotations

import logging
import random
from pathlib import Path
from typing import Sequence, TypeVar

from .errors import ValidationError
from .io import load_documents_file
from .types import Document, FacetSchema
from .util import round_half_up

log = logging.getLogger(__name__)

T = TypeVar("T")


def load_documents(path: str | Path, schema: FacetSchema) -> list[Document]:
    """Load a documents JSONL file validated against ``schema``."""
    return load_documents_file(path, schema)


def split_train_val(
    items: Sequence[T], ratio: float, seed: int
) -> tuple[list[T], list[T]]:
    """Seeded shuffle-split into (train, val) with |train| = round(ratio * N).

    The split is a pure function of ``seed``; rounding is half-up on the
    float product. Degenerate sizes (empty validation side) are allowed
    with a warning.
    """
    if not items:
        raise ValidationError("cannot split an empty list")
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0, 1), got {ratio}")
    indices = list(range(len(items)))
    random.Random(seed).shuffle(indices)
    n_train = round_half_up(ratio * len(items))
    train = [items[i] for i in indices[:n_train]]
    val = [items[i] for i in indices[n_train:]]
    if not val:
        log.warning(
            "split of %d items at ratio %s leaves an empty validation side",
            len(items),
            ratio,
        )
    return train, val
