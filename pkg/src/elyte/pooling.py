"""Formulation-level pooling of per-molecule token embeddings.

Two routes from a formulation's component molecules to encoder input:

* ``cido_pack``/``cido_unpack``: every component is its own encoder batch
  row and per-molecule embeddings are regrouped afterwards.  This keeps
  each molecule's profile intact and is the default.
* ``sep_join``: all components spliced into a single sequence separated by
  ``<sep>``.  Retained purely as the ablation baseline; the joined sequence
  is pooled as one pseudo-molecule, so molar ratios cannot be applied.

Pooling is mean-over-valid-tokens per molecule followed by a molar-ratio
weighted sum.  Ratios are normalized to fractions first, so 1:3 and 25:75
are the same formulation, and the output does not depend on per-molecule
token counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Formulation
from .encoder import TokenEmbeddings
from .tokenizer import (
    BOS_ID,
    EOS_ID,
    MAX_SEQ_LEN,
    SEP_ID,
    UNK_ID,
    TokenSequence,
    Vocabulary,
    encode,
    tokenize,
)


class Segment(NamedTuple):
    """Provenance of one packed batch row."""

    formulation_index: int
    component_index: int
    ratio: float


@dataclass
class PackedBatch:
    sequences: list[TokenSequence]
    segments: list[Segment]
    num_formulations: int


def _normalized_ratios(f: Formulation) -> list[float]:
    total = sum(f.ratios())
    if total <= 0.0:
        raise ValueError(f"formulation {f.id!r}: ratios sum to zero")
    return [r / total for r in f.ratios()]


def cido_pack(formulations, vocab: Vocabulary) -> PackedBatch:
    """Pack every component molecule as its own encoder row.

    Segments record (formulation, component, normalized ratio) per row so
    the batch can be disentangled after encoding.
    """
    formulations = list(formulations)
    sequences: list[TokenSequence] = []
    segments: list[Segment] = []
    for fi, f in enumerate(formulations):
        ratios = _normalized_ratios(f)
        for ci, component in enumerate(f.components):
            try:
                tokens = tokenize(component.smiles)
            except ValueError as exc:
                raise ValueError(f"formulation {f.id!r}: {exc}") from exc
            sequences.append(encode(tokens, vocab))
            segments.append(Segment(fi, ci, ratios[ci]))
    return PackedBatch(sequences, segments, len(formulations))


def cido_unpack(
    embeddings: list[TokenEmbeddings], packed: PackedBatch
) -> list[list[tuple[TokenEmbeddings, float]]]:
    """Regroup per-row embeddings into per-formulation (embedding, ratio)
    lists, restoring the original component order."""
    if len(embeddings) != len(packed.sequences):
        raise ValueError(
            f"{len(embeddings)} embeddings for {len(packed.sequences)} rows"
        )
    groups: list[list[tuple[int, TokenEmbeddings, float]]] = [
        [] for _ in range(packed.num_formulations)
    ]
    for emb, seg in zip(embeddings, packed.segments):
        groups[seg.formulation_index].append((seg.component_index, emb, seg.ratio))
    return [
        [(emb, ratio) for _, emb, ratio in sorted(group, key=lambda t: t[0])]
        for group in groups
    ]


def sep_join(f: Formulation, vocab: Vocabulary) -> TokenSequence:
    """Single spliced sequence: bos, tokens(c1), sep, tokens(c2), ..., eos."""
    body: list[int] = []
    for index, component in enumerate(f.components):
        if index:
            body.append(SEP_ID)
        try:
            tokens = tokenize(component.smiles)
        except ValueError as exc:
            raise ValueError(f"formulation {f.id!r}: {exc}") from exc
        body.extend(vocab.id_for(token) for token in tokens)
    truncated = False
    if len(body) + 2 > MAX_SEQ_LEN:
        body = body[: MAX_SEQ_LEN - 2]
        truncated = True
    return TokenSequence(
        ids=(BOS_ID, *body, EOS_ID),
        truncated=truncated,
        unknown_count=sum(1 for i in body if i == UNK_ID),
    )


def pool(per_mol: list[tuple[TokenEmbeddings, float]]) -> np.ndarray:
    """Ratio-weighted sum of per-molecule valid-token means.

    Raw ratios are normalized to fractions here, so the result is invariant
    to rescaling all ratios by any positive constant and to component
    order.  With a single component the output is exactly that molecule's
    token mean; in general it lies in the convex hull of the molecule
    means.
    """
    if not per_mol:
        raise ValueError("cannot pool an empty component list")
    ratios = np.array([ratio for _, ratio in per_mol], dtype=np.float64)
    if np.any(ratios < 0.0):
        raise ValueError("negative molar ratio")
    total = ratios.sum()
    if total <= 0.0:
        raise ValueError("ratios sum to zero")
    weights = ratios / total
    width = per_mol[0][0].values.shape[1]
    out = np.zeros(width, dtype=np.float64)
    for (emb, _), weight in zip(per_mol, weights):
        if not emb.valid_mask.any():
            raise ValueError("molecule with zero valid tokens")
        out += weight * emb.values[emb.valid_mask].mean(axis=0)
    return out


def pool_backward(
    per_mol: list[tuple[TokenEmbeddings, float]], d_vector: np.ndarray
) -> list[np.ndarray]:
    """Per-molecule gradients of :func:`pool` wrt the embedding rows.

    Valid rows of molecule i receive weight_i / L_i times the upstream
    vector; padded rows receive zero.
    """
    ratios = np.array([ratio for _, ratio in per_mol], dtype=np.float64)
    weights = ratios / ratios.sum()
    grads = []
    for (emb, _), weight in zip(per_mol, weights):
        grad = np.zeros_like(emb.values)
        count = int(emb.valid_mask.sum())
        grad[emb.valid_mask] = (weight / count) * d_vector
        grads.append(grad)
    return grads
