"""Console entry points: fable-train and fable-embed."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .data import DataError, load_document_texts, load_triplet_texts
from .train import (
    TrainConfig,
    export_embeddings,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
)

log = logging.getLogger(__name__)


def _train_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fable-train",
        description="Fine-tune a bi-encoder with triplet margin loss.",
    )
    parser.add_argument("--triplets", required=True, help="triplet JSONL from the pipeline")
    parser.add_argument("--pdocs", required=True, help="pseudo-document JSONL with texts")
    parser.add_argument("--out", required=True, help="checkpoint directory")
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--domain", choices=["abstract", "education"], default="abstract")
    parser.add_argument("--epochs", type=int, default=2)
    parser.add_argument("--batch", type=int, default=30)
    parser.add_argument("--margin", type=float, default=1.0)
    parser.add_argument("--distance", choices=["euclidean", "cosine_distance"],
                        default="euclidean")
    parser.add_argument("--base-model", default="hash-linear")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--split-ratio", type=float, default=0.9,
                        help="train fraction of the train/val split")
    parser.add_argument("--input-dim", type=int, default=256)
    parser.add_argument("--embed-dim", type=int, default=32)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def train_main(argv: Optional[Sequence[str]] = None) -> int:
    args = _train_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = TrainConfig(
        learning_rate=args.lr,
        domain=args.domain,
        epochs=args.epochs,
        batch_size=args.batch,
        margin=args.margin,
        distance=args.distance,
        base_model=args.base_model,
        seed=args.seed,
        split_ratio=args.split_ratio,
        input_dim=args.input_dim,
        embed_dim=args.embed_dim,
    )
    try:
        triplets = load_triplet_texts(args.triplets, args.pdocs)
        result = fine_tune(triplets, config)
        save_checkpoint(args.out, result, config)
    except (DataError, ValueError) as exc:
        print(f"fable-train: {exc}", file=sys.stderr)
        return 1
    final = result.epoch_train_loss[-1]
    print(
        f"trained on {len(triplets)} triplets for {config.epochs} epochs "
        f"(final train loss {final:.6f}) -> {args.out}"
    )
    return 0


def _embed_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fable-embed",
        description="Export document embeddings from a trained checkpoint.",
    )
    parser.add_argument("--ckpt", required=True, help="checkpoint directory")
    parser.add_argument("--docs", required=True, help="documents JSONL with id/text")
    parser.add_argument("--out", required=True, help="embeddings JSONL output")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def embed_main(argv: Optional[Sequence[str]] = None) -> int:
    args = _embed_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        encoder = load_checkpoint(args.ckpt)
        documents = load_document_texts(args.docs)
        embeddings = export_embeddings(encoder, documents, path=args.out)
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"fable-embed: {exc}", file=sys.stderr)
        return 1
    dim = len(next(iter(embeddings.values())))
    print(f"embedded {len(embeddings)} documents (dim {dim}) -> {args.out}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Module entry: ``python -m fable_trainer {train,embed} ...``."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("train", "embed"):
        print("usage: python -m fable_trainer {train,embed} ...", file=sys.stderr)
        return 1
    if argv[0] == "train":
        return train_main(argv[1:])
    return embed_main(argv[1:])
