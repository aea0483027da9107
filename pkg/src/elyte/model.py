"""End-to-end prediction models: embedding source + pooling + head.

Two embedding sources share one interface:

* :class:`FrozenEmbeddingModel` looks token embeddings up in a CEMB map
  (pretrained, fixed); only the head trains.
* :class:`LocalEncoderModel` runs the in-package encoder, optionally
  training it end to end, with either per-component packing (``cido``) or
  the spliced single-sequence baseline (``sep_join``).

Both expose ``predict_batch``/``backward_batch`` over lists of
formulations, plus parameter dictionaries for the optimizer (trainable
subset) and for checkpoints (everything).
"""

from __future__ import annotations

import numpy as np

from .data import Formulation
from .encoder import (
    EncoderConfig,
    TokenEmbeddings,
    encoder_backward,
    encoder_forward,
    pad_sequences,
)
from .heads import head_backward_batch, head_forward_batch
from .pooling import cido_pack, cido_unpack, pool, pool_backward, sep_join
from .tokenizer import Vocabulary


class MissingEmbeddingError(KeyError):
    """A SMILES has no record in the frozen embedding map."""

    def __init__(self, smiles: str):
        self.smiles = smiles
        super().__init__(f"no pretrained embedding for SMILES {smiles!r}")


class FrozenEmbeddingModel:
    """Pretrained per-molecule embeddings plus a trainable head."""

    def __init__(self, embeddings: dict[str, TokenEmbeddings], head):
        self.embeddings = embeddings
        self.head = head

    def predict_batch(self, formulations: list[Formulation], mode: str = "eval", rng=None):
        groups = []
        for f in formulations:
            total = sum(f.ratios())
            if total <= 0.0:
                raise ValueError(f"formulation {f.id!r}: ratios sum to zero")
            per_mol = []
            for component in f.components:
                if component.smiles not in self.embeddings:
                    raise MissingEmbeddingError(component.smiles)
                per_mol.append(
                    (self.embeddings[component.smiles], component.molar_ratio / total)
                )
            groups.append(per_mol)
        pooled = np.stack([pool(per_mol) for per_mol in groups])
        preds, head_cache = head_forward_batch(self.head, pooled, mode, rng)
        return preds, head_cache

    def backward_batch(self, cache, d_preds: np.ndarray) -> dict[str, np.ndarray]:
        _, grads = head_backward_batch(self.head, cache, d_preds)
        return grads

    def trainable_params(self) -> dict[str, np.ndarray]:
        return self.head.param_dict()

    def all_params(self) -> dict[str, np.ndarray]:
        return self.head.param_dict()

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.head.set_params(params)


class LocalEncoderModel:
    """In-package encoder (trainable or fixed) plus a trainable head."""

    def __init__(
        self,
        cfg: EncoderConfig,
        encoder_params: dict[str, np.ndarray],
        vocab: Vocabulary,
        head,
        pooling_mode: str = "cido",
        train_encoder: bool = True,
    ):
        if pooling_mode not in ("cido", "sep_join"):
            raise ValueError(f"unknown pooling mode {pooling_mode!r}")
        self.cfg = cfg
        self.encoder_params = encoder_params
        self.vocab = vocab
        self.head = head
        self.pooling_mode = pooling_mode
        self.train_encoder = train_encoder

    # -- forward ----------------------------------------------------------

    def _groups_for(self, hidden, packed, seqs):
        """Per-formulation (embedding view, ratio) lists over hidden rows."""
        if self.pooling_mode == "cido":
            embeddings = [
                TokenEmbeddings(hidden[row, : len(seq)], np.ones(len(seq), dtype=bool))
                for row, seq in enumerate(packed.sequences)
            ]
            return cido_unpack(embeddings, packed)
        return [
            [(TokenEmbeddings(hidden[row, : len(seq)], np.ones(len(seq), dtype=bool)), 1.0)]
            for row, seq in enumerate(seqs)
        ]

    def predict_batch(self, formulations: list[Formulation], mode: str = "eval", rng=None):
        if self.pooling_mode == "cido":
            packed = cido_pack(formulations, self.vocab)
            seqs = packed.sequences
        else:
            packed = None
            seqs = [sep_join(f, self.vocab) for f in formulations]
        ids, mask = pad_sequences(seqs)
        hidden, enc_cache = encoder_forward(
            self.encoder_params, self.cfg, ids, mask, with_cache=True
        )
        groups = self._groups_for(hidden, packed, seqs)
        pooled = np.stack([pool(per_mol) for per_mol in groups])
        preds, head_cache = head_forward_batch(self.head, pooled, mode, rng)
        cache = (enc_cache, groups, seqs, packed, hidden.shape, head_cache)
        return preds, cache

    # -- backward ---------------------------------------------------------

    def backward_batch(self, cache, d_preds: np.ndarray) -> dict[str, np.ndarray]:
        enc_cache, groups, seqs, packed, hidden_shape, head_cache = cache
        d_pooled, grads = head_backward_batch(self.head, head_cache, d_preds)
        if not self.train_encoder:
            return grads
        d_hidden = np.zeros(hidden_shape)
        if self.pooling_mode == "cido":
            # rows appear in packed order: formulation-major, component order
            row_of = {}
            for r, seg in enumerate(packed.segments):
                row_of[(seg.formulation_index, seg.component_index)] = r
            for fi, per_mol in enumerate(groups):
                row_grads = pool_backward(per_mol, d_pooled[fi])
                for ci, grad in enumerate(row_grads):
                    r = row_of[(fi, ci)]
                    d_hidden[r, : grad.shape[0]] += grad
        else:
            for fi, per_mol in enumerate(groups):
                (grad,) = pool_backward(per_mol, d_pooled[fi])
                d_hidden[fi, : grad.shape[0]] += grad
        enc_grads = encoder_backward(self.encoder_params, self.cfg, enc_cache, d_hidden)
        for name, grad in enc_grads.items():
            grads[f"enc.{name}"] = grad
        return grads

    # -- parameters -------------------------------------------------------

    def trainable_params(self) -> dict[str, np.ndarray]:
        params = self.head.param_dict()
        if self.train_encoder:
            params.update({f"enc.{k}": v for k, v in self.encoder_params.items()})
        return params

    def all_params(self) -> dict[str, np.ndarray]:
        params = self.head.param_dict()
        params.update({f"enc.{k}": v for k, v in self.encoder_params.items()})
        return params

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        head_params = {k: v for k, v in params.items() if k.startswith("head.")}
        if head_params:
            self.head.set_params(head_params)
        for name, value in params.items():
            if name.startswith("enc."):
                self.encoder_params[name[len("enc.") :]] = value
