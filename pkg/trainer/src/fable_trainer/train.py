"""Fine-tuning loop and checkpoint/export plumbing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch

from .data import DataError, TextTriplet, split_train_val, write_embeddings
from .encoder import HashingEncoder, build_encoder
from .loss import DISTANCES, batch_triplet_loss

log = logging.getLogger(__name__)

#: Per-domain learning-rate defaults; abstracts train with the larger rate.
DOMAIN_LEARNING_RATES = {"abstract": 1e-5, "education": 1e-6}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: Optional[float] = None
    domain: str = "abstract"
    epochs: int = 2
    batch_size: int = 30
    margin: float = 1.0
    distance: str = "euclidean"
    base_model: str = "hash-linear"
    seed: int = 0
    split_ratio: float = 0.9
    input_dim: int = 256
    embed_dim: int = 32

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown distance '{self.distance}'")
        if self.domain not in DOMAIN_LEARNING_RATES:
            raise ValueError(f"unknown domain '{self.domain}'")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")

    @property
    def effective_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DOMAIN_LEARNING_RATES[self.domain]

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.effective_learning_rate,
            "domain": self.domain,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "margin": self.margin,
            "distance": self.distance,
            "base_model": self.base_model,
            "seed": self.seed,
            "split_ratio": self.split_ratio,
            "input_dim": self.input_dim,
            "embed_dim": self.embed_dim,
        }


@dataclass
class TrainResult:
    encoder: HashingEncoder
    step_losses: list[float] = field(default_factory=list)
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_val_loss: list[float] = field(default_factory=list)

    def history(self) -> dict:
        return {
            "step_losses": self.step_losses,
            "epoch_train_loss": self.epoch_train_loss,
            "epoch_val_loss": self.epoch_val_loss,
        }


def _batch_loss(encoder, batch: list[TextTriplet], config: TrainConfig) -> torch.Tensor:
    queries = encoder([t.query for t in batch])
    positives = encoder([t.positive for t in batch])
    negatives = encoder([t.negative for t in batch])
    return batch_triplet_loss(queries, positives, negatives, config.margin, config.distance)


def fine_tune(
    triplets: list[TextTriplet],
    config: TrainConfig,
    encoder: Optional[HashingEncoder] = None,
    presplit: Optional[tuple[list[TextTriplet], list[TextTriplet]]] = None,
) -> TrainResult:
    """Train the encoder with the margin loss; per-step losses are kept and
    validation loss is computed once per epoch on the held-out split.

    ``presplit`` bypasses the internal 9:1-style split when the caller
    already partitioned the data.
    """
    if presplit is not None:
        train, val = presplit
    else:
        train, val = split_train_val(triplets, config.split_ratio, config.seed)
    if not train:
        raise DataError("empty training split")
    torch.manual_seed(config.seed)
    encoder = encoder or build_encoder(
        config.base_model,
        input_dim=config.input_dim,
        embed_dim=config.embed_dim,
        seed=config.seed,
    )
    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.effective_learning_rate)
    shuffler = torch.Generator().manual_seed(config.seed)
    result = TrainResult(encoder=encoder)

    for epoch in range(config.epochs):
        encoder.train()
        order = torch.randperm(len(train), generator=shuffler).tolist()
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            loss = _batch_loss(encoder, batch, config)
            loss.backward()
            optimizer.step()
            value = float(loss.detach())
            epoch_losses.append(value)
            result.step_losses.append(value)
            log.debug("epoch %d step %d loss %.6f", epoch + 1, len(epoch_losses), value)
        mean_loss = sum(epoch_losses) / len(epoch_losses)
        result.epoch_train_loss.append(mean_loss)
        if val:
            encoder.eval()
            with torch.no_grad():
                val_loss = float(_batch_loss(encoder, val, config))
            result.epoch_val_loss.append(val_loss)
            log.info(
                "epoch %d: train loss %.6f, val loss %.6f", epoch + 1, mean_loss, val_loss
            )
        else:
            log.info("epoch %d: train loss %.6f (no validation split)", epoch + 1, mean_loss)
    return result


def export_embeddings(
    encoder: HashingEncoder,
    documents: list[tuple[str, str]],
    path: Optional[str | Path] = None,
    batch_size: int = 64,
) -> dict[str, list[float]]:
    """Embed documents and optionally write the {id, vector} JSONL file
    the evaluation harness reads."""
    if not documents:
        raise DataError("no documents to embed")
    encoder.eval()
    embeddings: dict[str, list[float]] = {}
    for start in range(0, len(documents), batch_size):
        batch = documents[start : start + batch_size]
        try:
            vectors = encoder.encode([text for _, text in batch])
        except Exception as exc:
            ids = [doc_id for doc_id, _ in batch]
            raise DataError(f"encoding failed for documents {ids}: {exc}") from exc
        for (doc_id, _), vector in zip(batch, vectors):
            embeddings[doc_id] = [float(x) for x in vector.tolist()]
    if path is not None:
        write_embeddings(path, embeddings)
    return embeddings


def save_checkpoint(directory: str | Path, result: TrainResult, config: TrainConfig) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"state_dict": result.encoder.state_dict(), "encoder": result.encoder.config()},
        directory / "model.pt",
    )
    (directory / "config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (directory / "loss_curve.json").write_text(
        json.dumps(result.history(), indent=2) + "\n", encoding="utf-8"
    )
    return directory


def load_checkpoint(directory: str | Path) -> HashingEncoder:
    directory = Path(directory)
    payload = torch.load(directory / "model.pt", weights_only=True)
    encoder = build_encoder(
        payload["encoder"]["base_model"],
        input_dim=payload["encoder"]["input_dim"],
        embed_dim=payload["encoder"]["embed_dim"],
        seed=payload["encoder"]["seed"],
    )
    encoder.load_state_dict(payload["state_dict"])
    encoder.eval()
    return encoder
