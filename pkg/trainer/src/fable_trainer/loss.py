"""Triplet margin loss: max(d(q, p) - d(q, n) + m, 0)."""

from __future__ import annotations

import torch

DISTANCES = ("euclidean", "cosine_distance")


def triplet_margin(d_pos: float, d_neg: float, margin: float) -> float:
    """Scalar hinge on precomputed distances. Zero exactly when the
    negative is at least ``margin`` farther than the positive."""
    return max(d_pos - d_neg + margin, 0.0)


def pair_distance(a: torch.Tensor, b: torch.Tensor, distance: str) -> torch.Tensor:
    if distance == "euclidean":
        return torch.linalg.vector_norm(a - b, dim=-1)
    if distance == "cosine_distance":
        return 1.0 - torch.nn.functional.cosine_similarity(a, b, dim=-1)
    raise ValueError(f"unknown distance '{distance}'")


def batch_triplet_loss(
    query: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    margin: float,
    distance: str = "euclidean",
) -> torch.Tensor:
    """Mean hinge loss over a batch of embedded triplets."""
    d_pos = pair_distance(query, positive, distance)
    d_neg = pair_distance(query, negative, distance)
    return torch.clamp_min(d_pos - d_neg + margin, 0.0).mean()
