"""Acceptance suite for the trainer package.

Criterion 10 pins the loss arithmetic, 11 the learnability smoke test,
12 the file-level interop with the pipeline and evaluation CLIs. The
pipeline and evaluator are exercised strictly through their command-line
interfaces and JSONL files.
"""

import hashlib
import json
import subprocess
import sys

import pytest

from synthetic import build_eval_pool, build_separable_triplets
from fable_trainer.encoder import build_encoder
from fable_trainer.loss import triplet_margin
from fable_trainer.train import TrainConfig, export_embeddings, fine_tune


def report(number, text):
    print(f"ACCEPTANCE {number:02d} PASS: {text}")


def run_cli(args):
    proc = subprocess.run(
        [sys.executable, "-m", *args], capture_output=True, text=True
    )
    assert proc.returncode == 0, f"{args} failed:\n{proc.stdout}\n{proc.stderr}"
    return proc


def test_10_loss_hand_arithmetic():
    config = TrainConfig()  # margin defaults to 1
    assert config.margin == 1.0
    assert triplet_margin(0.2, 0.9, config.margin) == pytest.approx(0.3, abs=1e-15)
    assert triplet_margin(0.1, 1.5, config.margin) == 0.0
    report(10, "hinge loss matches hand arithmetic (0.3 active, 0.0 clamped), "
               "margin read from config")


def evaluate_via_cli(tmp_path, tag, embeddings, pool_records):
    pools_path = tmp_path / f"pools_{tag}.jsonl"
    with open(pools_path, "w", encoding="utf-8") as handle:
        for record in pool_records:
            handle.write(json.dumps(record) + "\n")
    emb_path = tmp_path / f"emb_{tag}.jsonl"
    with open(emb_path, "w", encoding="utf-8") as handle:
        for doc_id, vector in embeddings.items():
            handle.write(json.dumps({"id": doc_id, "vector": vector}) + "\n")
    report_path = tmp_path / f"report_{tag}.json"
    run_cli([
        "fable", "evaluate", "--pools", str(pools_path),
        "--embeddings", str(emb_path), "--percents", "0.2",
        "--out", str(report_path),
    ])
    return json.loads(report_path.read_text())["aggregated"]["ndcg_20pct"]


def test_11_learnability_smoke(tmp_path):
    triplets = build_separable_triplets(1000, seed=22)
    config = TrainConfig(learning_rate=1e-2, epochs=2, batch_size=30, seed=22)
    result = fine_tune(triplets, config)
    assert result.epoch_train_loss[1] < result.epoch_train_loss[0]

    query, candidates = build_eval_pool(seed=122)
    documents = [(query[0], query[1])] + [(cid, text) for cid, text, _ in candidates]
    pool_records = [{
        "facet": "topic",
        "query_id": query[0],
        "candidates": [[cid, rel] for cid, _, rel in candidates],
    }]

    untrained = build_encoder(
        "hash-linear", input_dim=config.input_dim,
        embed_dim=config.embed_dim, seed=config.seed,
    )
    before = evaluate_via_cli(
        tmp_path, "untrained", export_embeddings(untrained, documents), pool_records
    )
    after = evaluate_via_cli(
        tmp_path, "trained", export_embeddings(result.encoder, documents), pool_records
    )
    assert after - before >= 0.10
    report(11, f"2-epoch fine-tune: loss {result.epoch_train_loss[0]:.4f} -> "
               f"{result.epoch_train_loss[1]:.4f}, NDCG%20 {before:.3f} -> {after:.3f} "
               f"(lift {after - before:+.3f} >= 0.10)")


def test_12_interop_with_pipeline_files(tmp_path):
    docs_path = tmp_path / "docs.jsonl"
    with open(docs_path, "w", encoding="utf-8") as handle:
        for i in range(1, 4):
            handle.write(json.dumps({
                "id": f"d{i}",
                "text": f"Study {i} of topic {i}. Approach {i} applies. Result {i} found.",
            }) + "\n")
    out_dir = tmp_path / "pipeline_out"
    run_cli([
        "fable", "pipeline", "--in", str(docs_path), "--schema", "abstract",
        "--backend", "mock", "--seed", "22", "--out-dir", str(out_dir),
    ])
    triplets_path = out_dir / "triplets.jsonl"
    before_hash = hashlib.sha256(triplets_path.read_bytes()).hexdigest()

    ckpt = tmp_path / "ckpt"
    run_cli([
        "fable_trainer", "train", "--triplets", str(triplets_path),
        "--pdocs", str(out_dir / "pdocs.jsonl"), "--epochs", "1",
        "--batch", "16", "--lr", "0.001", "--seed", "22", "--out", str(ckpt),
    ])
    assert hashlib.sha256(triplets_path.read_bytes()).hexdigest() == before_hash

    emb_path = tmp_path / "emb.jsonl"
    run_cli([
        "fable_trainer", "embed", "--ckpt", str(ckpt),
        "--docs", str(docs_path), "--out", str(emb_path),
    ])

    pools_path = tmp_path / "pools.jsonl"
    with open(pools_path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps({
            "facet": "method", "query_id": "d1",
            "candidates": [["d2", 1], ["d3", 0]],
        }) + "\n")
    report_path = tmp_path / "report.json"
    proc = run_cli([
        "fable", "evaluate", "--pools", str(pools_path),
        "--embeddings", str(emb_path), "--out", str(report_path),
    ])
    assert "coverage" not in proc.stderr.lower()
    parsed = json.loads(report_path.read_text())
    assert parsed["per_query"][0]["query_id"] == "d1"
    report(12, "pipeline triplets consumed unmodified; exported embeddings "
               "accepted by the evaluate command")
