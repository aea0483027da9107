import numpy as np
import pytest

from elyte.encoder import EncoderConfig, init_encoder_params
from elyte.heads import head_init
from elyte.model import LocalEncoderModel
from elyte.synth import synthetic_dataset
from elyte.tokenizer import build_vocab

TOY_ENCODER = EncoderConfig(embed_dim=16, num_heads=2, num_layers=2)


@pytest.fixture(scope="session")
def toy_dataset():
    return synthetic_dataset(16, seed=11)


@pytest.fixture(scope="session")
def toy_vocab(toy_dataset):
    corpus = sorted({c.smiles for f in toy_dataset for c in f.components})
    return build_vocab(corpus)


def make_toy_model(vocab, head_kind="kan", seed=0, pooling_mode="cido"):
    params = init_encoder_params(TOY_ENCODER, len(vocab), seed=seed)
    head = head_init(head_kind, TOY_ENCODER.embed_dim, None, seed=seed + 1)
    return LocalEncoderModel(
        TOY_ENCODER, params, vocab, head, pooling_mode=pooling_mode
    )


@pytest.fixture
def toy_model(toy_vocab):
    return make_toy_model(toy_vocab)


def random_formulation_embeddings(rng: np.random.Generator, width=8, n_mols=3):
    """Random per-molecule embeddings plus raw ratios, for pooling tests."""
    from elyte.encoder import TokenEmbeddings

    per_mol = []
    for _ in range(n_mols):
        rows = int(rng.integers(1, 6))
        per_mol.append(
            (
                TokenEmbeddings(rng.normal(size=(rows, width)), np.ones(rows, bool)),
                float(rng.uniform(0.1, 3.0)),
            )
        )
    return per_mol
