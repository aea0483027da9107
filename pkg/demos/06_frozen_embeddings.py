"""
Frozen pretrained embeddings through CEMB files
===============================================

Real experiments consume token embeddings exported from a pretrained
chemical language model rather than training an encoder from scratch.
The exchange format is CEMB: a binary file of (SMILES, L x H float32
matrix) records.  Here we fake an "exported" file with random matrices,
load it back bit-identically, and train just a head on top of the frozen
embeddings.

The companion ``cemb-exporter`` package writes these files from an actual
pretrained checkpoint; this demo only needs the format.
"""

import tempfile
from pathlib import Path

import numpy as np

from elyte.cemb import write_embeddings
from elyte.encoder import load_pretrained_embeddings
from elyte.heads import head_init
from elyte.model import FrozenEmbeddingModel
from elyte.synth import synthetic_dataset
from elyte.training import TrainConfig, evaluate, train

dataset = synthetic_dataset(12, seed=21)
corpus = sorted({c.smiles for f in dataset for c in f.components})

# Pretend a pretrained model produced these token embeddings (H = 32).
rng = np.random.default_rng(0)
records = []
for smiles in corpus:
    n_tokens = len(smiles) // 2 + 2
    records.append((smiles, rng.normal(size=(n_tokens, 32)).astype(np.float32)))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "pretrained.cemb"
    write_embeddings(path, records)
    print(f"wrote {len(records)} records, {path.stat().st_size} bytes")

    embeddings = load_pretrained_embeddings(path)
    first = records[0]
    loaded = embeddings[first[0]].values.astype(np.float32)
    print("bit-identical round trip:", loaded.tobytes() == first[1].tobytes())

    # Only the head trains; the embedding file is the whole encoder.
    model = FrozenEmbeddingModel(embeddings, head_init("mlp", 32, None, seed=2))
    history = train(model, dataset, TrainConfig(epochs=40, learning_rate=1e-3, seed=0))
    print(f"trainable parameter tensors: {sorted(model.trainable_params())}")
    print(f"final train loss {history.epochs[-1].train_loss:.4f}")
    print(f"RMSE on the training formulations: {evaluate(model, dataset).rmse:.4f}")
