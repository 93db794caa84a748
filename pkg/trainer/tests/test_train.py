import json

import pytest
import torch

from synthetic import build_separable_triplets
from fable_trainer.data import DataError
from fable_trainer.encoder import HashingEncoder, build_encoder
from fable_trainer.train import (
    TrainConfig,
    export_embeddings,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
)


class TestEncoder:
    def test_output_is_normalized_and_fixed_dim(self):
        encoder = HashingEncoder(input_dim=64, embed_dim=16, seed=1)
        vectors = encoder.encode(["one text", "another text entirely"])
        assert vectors.shape == (2, 16)
        norms = torch.linalg.vector_norm(vectors, dim=1)
        assert torch.allclose(norms, torch.ones(2), atol=1e-6)

    def test_deterministic_across_instances(self):
        a = HashingEncoder(seed=5).encode(["same text"])
        b = HashingEncoder(seed=5).encode(["same text"])
        assert torch.equal(a, b)

    def test_unknown_base_model_rejected(self):
        with pytest.raises(ValueError, match="base model"):
            build_encoder("bert-gigantic")


class TestFineTune:
    def test_loss_decreases_on_separable_data(self):
        triplets = build_separable_triplets(300, seed=3)
        config = TrainConfig(learning_rate=1e-2, epochs=2, seed=3)
        result = fine_tune(triplets, config)
        assert result.epoch_train_loss[1] < result.epoch_train_loss[0]
        assert len(result.epoch_val_loss) == 2
        assert len(result.step_losses) == 2 * ((270 + 29) // 30)

    def test_deterministic_given_seed(self):
        triplets = build_separable_triplets(120, seed=4)
        config = TrainConfig(learning_rate=1e-2, epochs=1, seed=4)
        a = fine_tune(triplets, config)
        b = fine_tune(triplets, config)
        assert a.step_losses == b.step_losses
        assert torch.equal(a.encoder.projection, b.encoder.projection)

    def test_presplit_respected(self):
        triplets = build_separable_triplets(60, seed=5)
        config = TrainConfig(learning_rate=1e-2, epochs=1, seed=5)
        result = fine_tune(triplets, config, presplit=(triplets[:50], triplets[50:]))
        assert len(result.step_losses) == 2  # ceil(50 / 30)

    def test_empty_train_split_rejected(self):
        triplets = build_separable_triplets(10, seed=6)
        config = TrainConfig(learning_rate=1e-2, epochs=1, seed=6)
        with pytest.raises(DataError, match="empty"):
            fine_tune(triplets, config, presplit=([], triplets))


class TestCheckpointAndExport:
    def test_round_trip_preserves_vectors(self, tmp_path):
        triplets = build_separable_triplets(60, seed=7)
        config = TrainConfig(learning_rate=1e-2, epochs=1, seed=7)
        result = fine_tune(triplets, config)
        save_checkpoint(tmp_path / "ckpt", result, config)
        assert (tmp_path / "ckpt" / "loss_curve.json").exists()
        saved_config = json.loads((tmp_path / "ckpt" / "config.json").read_text())
        assert saved_config["margin"] == 1.0
        assert saved_config["distance"] == "euclidean"

        restored = load_checkpoint(tmp_path / "ckpt")
        texts = ["alpha beta", "gamma delta"]
        assert torch.equal(restored.encode(texts), result.encoder.encode(texts))

    def test_export_shape_and_determinism(self, tmp_path):
        encoder = HashingEncoder(input_dim=64, embed_dim=8, seed=9)
        documents = [(f"d{i}", f"text number {i}") for i in range(3)]
        first = export_embeddings(encoder, documents, path=tmp_path / "emb.jsonl")
        second = export_embeddings(encoder, documents)
        assert first == second
        assert len(first) == 3
        assert {len(v) for v in first.values()} == {8}
        lines = (tmp_path / "emb.jsonl").read_text().splitlines()
        assert [json.loads(l)["id"] for l in lines] == ["d0", "d1", "d2"]

    def test_export_empty_rejected(self):
        with pytest.raises(DataError, match="no documents"):
            export_embeddings(HashingEncoder(), [])
