"""Bi-encoder models producing pooled document vectors.

The base model is a configuration identifier. The built-in "hash-linear"
encoder feeds a stable signed token-hash bag through a trainable linear
projection and L2-normalizes the output, so euclidean and cosine
rankings coincide. Any encoder mapping a list of texts to a (n, d)
tensor can be registered alongside it.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
import torch
from torch import nn

_TOKEN = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class HashingEncoder(nn.Module):
    base_model = "hash-linear"

    def __init__(self, input_dim: int = 256, embed_dim: int = 32, seed: int = 0):
        super().__init__()
        if input_dim < 2 or embed_dim < 2:
            raise ValueError("input_dim and embed_dim must both be >= 2")
        self.input_dim = input_dim
        self.embed_dim = embed_dim
        self.seed = seed
        generator = torch.Generator().manual_seed(seed)
        weight = torch.randn(input_dim, embed_dim, generator=generator)
        self.projection = nn.Parameter(weight / input_dim**0.5)
        self._bucket_cache: dict[str, tuple[int, float]] = {}

    def _bucket(self, token: str) -> tuple[int, float]:
        cached = self._bucket_cache.get(token)
        if cached is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "big") % self.input_dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            cached = (index, sign)
            self._bucket_cache[token] = cached
        return cached

    def featurize(self, texts: list[str]) -> torch.Tensor:
        """Signed token-count features, L2-normalized per text."""
        features = np.zeros((len(texts), self.input_dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in tokenize(text):
                index, sign = self._bucket(token)
                features[row, index] += sign
        norms = np.linalg.norm(features, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return torch.from_numpy(features / norms)

    def forward(self, texts: list[str]) -> torch.Tensor:
        projected = self.featurize(texts) @ self.projection
        return nn.functional.normalize(projected, dim=1)

    def encode(self, texts: list[str]) -> torch.Tensor:
        with torch.no_grad():
            return self.forward(texts)

    def config(self) -> dict:
        return {
            "base_model": self.base_model,
            "input_dim": self.input_dim,
            "embed_dim": self.embed_dim,
            "seed": self.seed,
        }


def build_encoder(base_model: str, **kwargs) -> HashingEncoder:
    if base_model != HashingEncoder.base_model:
        raise ValueError(
            f"unknown base model '{base_model}'; built-in: '{HashingEncoder.base_model}'"
        )
    allowed = {k: v for k, v in kwargs.items() if k in ("input_dim", "embed_dim", "seed")}
    return HashingEncoder(**allowed)
