"""Exporter CLI with an injected stub backend."""

import numpy as np
import pytest

from cemb_exporter.cli import main

from test_export import StubBackend

elyte_encoder = pytest.importorskip("elyte.encoder")


def write_smiles(path, entries):
    path.write_text("\n".join(entries) + "\n", encoding="utf-8")


def test_export_success(tmp_path, capsys):
    smiles_file = tmp_path / "mols.smi"
    write_smiles(smiles_file, ["CCO", "# comment", "", "CC"])
    out = tmp_path / "emb.cemb"
    code = main(
        [
            "export",
            "--model", "stub",
            "--smiles-file", str(smiles_file),
            "--out", str(out),
            "--width", "16",
        ],
        backend=StubBackend(),
    )
    assert code == 0
    assert "wrote 2 records" in capsys.readouterr().out
    assert set(elyte_encoder.load_pretrained_embeddings(out)) == {"CCO", "CC"}


def test_skipped_smiles_nonzero_exit(tmp_path, capsys):
    smiles_file = tmp_path / "mols.smi"
    write_smiles(smiles_file, ["CCO", "XBAD"])
    out = tmp_path / "emb.cemb"
    code = main(
        ["export", "--model", "stub", "--smiles-file", str(smiles_file),
         "--out", str(out), "--width", "16"],
        backend=StubBackend(),
    )
    assert code == 1
    captured = capsys.readouterr()
    assert "skipped 'XBAD'" in captured.err
    assert set(elyte_encoder.load_pretrained_embeddings(out)) == {"CCO"}


def test_vocab_out(tmp_path):
    smiles_file = tmp_path / "mols.smi"
    write_smiles(smiles_file, ["CCO"])
    vocab_out = tmp_path / "vocab.txt"
    code = main(
        ["export", "--model", "stub", "--smiles-file", str(smiles_file),
         "--out", str(tmp_path / "e.cemb"), "--width", "16",
         "--vocab-out", str(vocab_out)],
        backend=StubBackend(),
    )
    assert code == 0
    assert vocab_out.exists()


def test_missing_smiles_file(tmp_path, capsys):
    code = main(
        ["export", "--model", "stub", "--smiles-file", str(tmp_path / "nope.smi"),
         "--out", str(tmp_path / "e.cemb")],
        backend=StubBackend(),
    )
    assert code == 2


def test_empty_smiles_file(tmp_path):
    smiles_file = tmp_path / "mols.smi"
    smiles_file.write_text("\n# nothing\n", encoding="utf-8")
    code = main(
        ["export", "--model", "stub", "--smiles-file", str(smiles_file),
         "--out", str(tmp_path / "e.cemb")],
        backend=StubBackend(),
    )
    assert code == 2
