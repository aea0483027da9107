"""Extract token embeddings and vocabulary from a pretrained chemical LM.

Each SMILES is fed through the model one molecule at a time (no padding
ambiguity) and the final-layer hidden states for all of its tokens,
special tokens included, become one CEMB record.  The model runs in
evaluation mode, so identical inputs yield identical embeddings across
runs.

A backend object supplies the model specifics; :class:`TransformersBackend`
wraps a Hugging Face checkpoint (for example the publicly released
MoLFormer weights), and tests inject a deterministic stub.  Backends need:

* ``hidden_width`` - embedding dimension H
* ``embed(smiles)`` - (L, H) float32 matrix, raising ``ValueError`` for
  SMILES the model tokenizer rejects
* ``token_list()`` - the model's chemical tokens, model order, specials
  excluded
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cembfile import write_cemb

#: Specials header of the vocabulary file format, fixed order and ids 0..5.
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>", "<mask>", "<sep>")


@dataclass
class ExportManifest:
    model_id: str
    smiles: list[str]
    out_path: str
    hidden_width: int = 768


@dataclass
class ExportReport:
    written: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (smiles, reason)
    deduplicated: int = 0


class ModelLoadError(RuntimeError):
    """The pretrained model could not be obtained."""


class TransformersBackend:
    """Hugging Face model backend; imports torch/transformers lazily."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(
                "transformers and torch are required for model export; "
                "install the 'model' extra"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(
                model_id, trust_remote_code=True
            )
            self._model = AutoModel.from_pretrained(model_id, trust_remote_code=True)
        except Exception as exc:
            raise ModelLoadError(f"could not load model {model_id!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.hidden_width = int(self._model.config.hidden_size)

    def embed(self, smiles: str) -> np.ndarray:
        encoded = self._tokenizer(smiles, return_tensors="pt")
        if encoded["input_ids"].shape[1] == 0:
            raise ValueError(f"model tokenizer produced no tokens for {smiles!r}")
        with self._torch.no_grad():
            output = self._model(**encoded)
        hidden = output.last_hidden_state[0]
        return hidden.to(self._torch.float32).cpu().numpy()

    def token_list(self) -> list[str]:
        specials = set(self._tokenizer.all_special_tokens) | set(SPECIAL_TOKENS)
        by_id = sorted(self._tokenizer.get_vocab().items(), key=lambda kv: kv[1])
        return [token for token, _ in by_id if token not in specials]


def export_embeddings(
    manifest: ExportManifest, backend=None
) -> ExportReport:
    """Write one CEMB record per distinct manifest SMILES.

    Duplicates are dropped with a warning; SMILES the model tokenizer
    rejects are reported and skipped rather than aborting the export.
    """
    if backend is None:
        backend = TransformersBackend(manifest.model_id)
    if backend.hidden_width != manifest.hidden_width:
        raise ValueError(
            f"manifest expects H={manifest.hidden_width} but the model "
            f"produces H={backend.hidden_width}"
        )
    report = ExportReport()
    seen: set[str] = set()
    records: list[tuple[str, np.ndarray]] = []
    for smiles in manifest.smiles:
        if smiles in seen:
            report.deduplicated += 1
            warnings.warn(f"duplicate SMILES in manifest: {smiles!r}", stacklevel=2)
            continue
        seen.add(smiles)
        try:
            matrix = np.asarray(backend.embed(smiles), dtype=np.float32)
        except ValueError as exc:
            report.skipped.append((smiles, str(exc)))
            continue
        if matrix.ndim != 2 or matrix.shape[1] != manifest.hidden_width:
            report.skipped.append(
                (smiles, f"backend returned shape {matrix.shape}")
            )
            continue
        records.append((smiles, matrix))
        report.written.append(smiles)
    write_cemb(manifest.out_path, manifest.hidden_width, records)
    return report


def export_vocab(backend, out_path) -> int:
    """Write the model's token list in the shared vocabulary file format.

    The six specials come first in fixed order, then the model's chemical
    tokens in model vocabulary order.  Returns the total line count.
    """
    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for token in backend.token_list():
        if token and "\n" not in token and token not in seen:
            seen.add(token)
            tokens.append(token)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for token in tokens:
            fh.write(token + "\n")
    return len(tokens)


def read_smiles_file(path) -> list[str]:
    """One SMILES per line; blank lines and ``#`` comments are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out
