"""
End-to-end training on synthetic formulations
=============================================

The full pipeline: tokenize every component molecule, encode each one as
its own sequence through the toy linear-attention encoder, regroup the
per-molecule embeddings by formulation, pool token means weighted by molar
fraction, and regress LCE with a KAN head.  Everything trains end to end
with AdamW under a fixed seed, so the history below reproduces exactly.
"""

import numpy as np

from elyte.data import split_dataset
from elyte.encoder import EncoderConfig, init_encoder_params
from elyte.heads import head_init
from elyte.model import LocalEncoderModel
from elyte.synth import synthetic_dataset
from elyte.tokenizer import build_vocab
from elyte.training import TrainConfig, evaluate, predictions, train

dataset = synthetic_dataset(24, seed=3)
train_set, test_set = split_dataset(dataset, train_fraction=0.75, seed=0)
print(f"{len(train_set)} training / {len(test_set)} test formulations")

corpus = sorted({c.smiles for f in dataset for c in f.components})
vocab = build_vocab(corpus)
encoder_cfg = EncoderConfig(embed_dim=16, num_heads=2, num_layers=2)
model = LocalEncoderModel(
    encoder_cfg,
    init_encoder_params(encoder_cfg, len(vocab), seed=0),
    vocab,
    head_init("kan", encoder_cfg.embed_dim, None, seed=1),
    pooling_mode="cido",
)

cfg = TrainConfig(epochs=60, learning_rate=1e-3, seed=0)
history = train(model, train_set, cfg, test_set=test_set)
for epoch in (0, 14, 29, 44, 59):
    stats = history.epochs[epoch]
    print(
        f"epoch {epoch:>2}  train {stats.train_loss:.4f}  "
        f"val {stats.val_loss:.4f}  test RMSE {stats.test_rmse:.4f}"
    )
print(f"best epoch by validation loss: {history.best_epoch}")

# Restore the best checkpoint and look at per-formulation parity rows.
model.set_params(history.best_params)
print(f"\ntest RMSE at best checkpoint: {evaluate(model, test_set).rmse:.4f}")
print("\nid       actual   predicted")
for fid, actual, predicted in predictions(model, test_set)[:5]:
    print(f"{fid}   {actual:.4f}   {predicted:.4f}")
