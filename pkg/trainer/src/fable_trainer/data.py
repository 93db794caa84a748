"""Readers for the pipeline's JSONL interchange files.

The trainer consumes the triplet and pseudo-document files exactly as the
pipeline writes them: triplets carry pseudo-document references, texts
live in the pseudo-document file.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TextTriplet:
    query: str
    positive: str
    negative: str


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            yield lineno, obj


def load_pdoc_texts(path: str | Path) -> dict[str, str]:
    texts: dict[str, str] = {}
    for lineno, obj in _iter_jsonl(path):
        for key in ("pdoc_id", "text"):
            if key not in obj:
                raise DataError(f"{path}:{lineno}: missing '{key}'")
        existing = texts.get(obj["pdoc_id"])
        if existing is not None and existing != obj["text"]:
            raise DataError(f"{path}:{lineno}: conflicting text for '{obj['pdoc_id']}'")
        texts[obj["pdoc_id"]] = obj["text"]
    return texts


def load_triplet_texts(
    triplets_path: str | Path, pdocs_path: str | Path
) -> list[TextTriplet]:
    """Resolve triplet references against the pseudo-document file."""
    texts = load_pdoc_texts(pdocs_path)
    out: list[TextTriplet] = []
    for lineno, obj in _iter_jsonl(triplets_path):
        for key in ("query_ref", "positive_ref", "negative_ref"):
            if key not in obj:
                raise DataError(f"{triplets_path}:{lineno}: missing '{key}'")
            if obj[key] not in texts:
                raise DataError(
                    f"{triplets_path}:{lineno}: reference '{obj[key]}' not in "
                    f"pseudo-document file"
                )
        out.append(
            TextTriplet(
                query=texts[obj["query_ref"]],
                positive=texts[obj["positive_ref"]],
                negative=texts[obj["negative_ref"]],
            )
        )
    if not out:
        raise DataError(f"no triplets in {triplets_path}")
    return out


def load_document_texts(path: str | Path) -> list[tuple[str, str]]:
    docs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "text"):
            if key not in obj:
                raise DataError(f"{path}:{lineno}: missing '{key}'")
        if obj["id"] in seen:
            raise DataError(f"{path}:{lineno}: duplicate id '{obj['id']}'")
        seen.add(obj["id"])
        docs.append((obj["id"], obj["text"]))
    if not docs:
        raise DataError(f"no documents in {path}")
    return docs


def write_embeddings(path: str | Path, embeddings: dict[str, list[float]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc_id, vector in embeddings.items():
            handle.write(
                json.dumps({"id": doc_id, "vector": vector}, sort_keys=True) + "\n"
            )


def split_train_val(
    triplets: list[TextTriplet], ratio: float, seed: int
) -> tuple[list[TextTriplet], list[TextTriplet]]:
    """Seeded 9:1-style split; train gets round(ratio * N) items."""
    if not triplets:
        raise DataError("cannot split an empty triplet list")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must be in (0, 1), got {ratio}")
    indices = list(range(len(triplets)))
    random.Random(seed).shuffle(indices)
    import math

    n_train = math.floor(ratio * len(triplets) + 0.5)
    train = [triplets[i] for i in indices[:n_train]]
    val = [triplets[i] for i in indices[n_train:]]
    return train, val
