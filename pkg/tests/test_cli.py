"""CLI subcommands: artifacts, determinism and exit codes."""

import json

import numpy as np
import pytest

from elyte.cli import (
    EXIT_GRADCHECK,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_SCHEMA,
    main,
)
from elyte.data import load_dataset, save_dataset
from elyte.synth import synthetic_dataset


@pytest.fixture(scope="module")
def data_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    train = root / "train.jsonl"
    test = root / "test.jsonl"
    save_dataset(synthetic_dataset(12, seed=0), train)
    save_dataset(synthetic_dataset(4, seed=1), test)
    return train, test


def write_config(path, train, test, out_dir, **overrides):
    config = {
        "data": str(train),
        "test_data": str(test),
        "out_dir": str(out_dir),
        "head": "kan",
        "embed_dim": 16,
        "num_heads": 2,
        "num_layers": 1,
        "epochs": 3,
        "seed": 5,
        "learning_rate": 1e-3,
    }
    config.update(overrides)
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


class TestIngest:
    def test_clean_pass_through(self, tmp_path, data_files):
        train, _ = data_files
        out = tmp_path / "clean.jsonl"
        assert main(["ingest", "--data", str(train), "--out", str(out)]) == EXIT_OK
        assert len(load_dataset(out)) == 12

    def test_duplicate_removed(self, tmp_path, capsys):
        ds = synthetic_dataset(5, seed=3)
        path = tmp_path / "dup.jsonl"
        save_dataset(ds, path)
        line = json.loads(path.read_text().splitlines()[0])
        line["id"] = "copycat"
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(line) + "\n")
        out = tmp_path / "clean.jsonl"
        assert main(["ingest", "--data", str(path), "--out", str(out)]) == EXIT_OK
        assert len(load_dataset(out)) == 5
        assert "copycat" in capsys.readouterr().out

    def test_missing_file_exit_2(self, tmp_path):
        code = main(
            ["ingest", "--data", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_SCHEMA

    def test_schema_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "x"}\n', encoding="utf-8")
        code = main(["ingest", "--data", str(bad), "--out", str(tmp_path / "o")])
        assert code == EXIT_SCHEMA


class TestTrain:
    def test_artifacts_and_rows(self, tmp_path, data_files, capsys):
        train, test = data_files
        out_dir = tmp_path / "run"
        config = write_config(tmp_path / "c.json", train, test, out_dir)
        assert main(["train", "--config", str(config)]) == EXIT_OK
        history = (out_dir / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_loss,test_rmse"
        assert len(history) == 4  # header + 3 epochs
        assert (out_dir / "model.ckpt").exists()
        assert (out_dir / "vocab.txt").exists()
        assert "best epoch" in capsys.readouterr().out

    def test_determinism_byte_identical(self, tmp_path, data_files):
        train, test = data_files
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        config_a = write_config(tmp_path / "ca.json", train, test, out_a)
        config_b = write_config(tmp_path / "cb.json", train, test, out_b)
        assert main(["train", "--config", str(config_a)]) == EXIT_OK
        assert main(["train", "--config", str(config_b)]) == EXIT_OK
        assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()
        assert (out_a / "model.ckpt").read_bytes() == (out_b / "model.ckpt").read_bytes()

    def test_unknown_config_key_exit_2(self, tmp_path, data_files):
        train, test = data_files
        config = write_config(
            tmp_path / "c.json", train, test, tmp_path / "r", banana=1
        )
        assert main(["train", "--config", str(config)]) == EXIT_SCHEMA

    def test_sep_join_arm_trains(self, tmp_path, data_files):
        train, test = data_files
        out_dir = tmp_path / "sep"
        config = write_config(
            tmp_path / "c.json", train, test, out_dir, pooling_mode="sep_join"
        )
        assert main(["train", "--config", str(config)]) == EXIT_OK
        assert (out_dir / "history.csv").exists()

    def test_frozen_mode_end_to_end(self, tmp_path, data_files, capsys):
        train, test = data_files
        from elyte.cemb import write_embeddings

        rng = np.random.default_rng(0)
        corpus = sorted(
            {
                c.smiles
                for path in (train, test)
                for f in load_dataset(path)
                for c in f.components
            }
        )
        emb_path = tmp_path / "full.cemb"
        write_embeddings(
            emb_path,
            [
                (s, rng.normal(size=(len(s) + 2, 8)).astype(np.float32))
                for s in corpus
            ],
        )
        out_dir = tmp_path / "frozen"
        config = write_config(
            tmp_path / "c.json",
            train,
            test,
            out_dir,
            encoder_mode="frozen",
            embeddings=str(emb_path),
            head="mlp",
        )
        assert main(["train", "--config", str(config)]) == EXIT_OK
        assert (out_dir / "model.ckpt").exists()
        code = main(
            ["eval", "--checkpoint", str(out_dir / "model.ckpt"), "--data", str(test)]
        )
        assert code == EXIT_OK
        assert "RMSE" in capsys.readouterr().out

    def test_frozen_mode_missing_smiles_exit_3(self, tmp_path, data_files):
        train, test = data_files
        from elyte.cemb import write_embeddings

        emb_path = tmp_path / "partial.cemb"
        write_embeddings(
            emb_path, [("CC", np.zeros((3, 8), dtype=np.float32))]
        )
        config = write_config(
            tmp_path / "c.json",
            train,
            test,
            tmp_path / "r",
            encoder_mode="frozen",
            embeddings=str(emb_path),
        )
        assert main(["train", "--config", str(config)]) == EXIT_MISSING


class TestEval:
    def test_eval_after_train(self, tmp_path, data_files, capsys):
        train, test = data_files
        out_dir = tmp_path / "run"
        config = write_config(tmp_path / "c.json", train, test, out_dir)
        assert main(["train", "--config", str(config)]) == EXIT_OK
        code = main(
            ["eval", "--checkpoint", str(out_dir / "model.ckpt"), "--data", str(test)]
        )
        assert code == EXIT_OK
        parity = (out_dir / "parity.csv").read_text().splitlines()
        assert parity[0] == "id,actual_lce,predicted_lce"
        assert len(parity) == 5  # header + 4 test rows
        assert "RMSE" in capsys.readouterr().out


class TestSweep:
    def test_grid_rows(self, tmp_path, data_files):
        train, test = data_files
        out_dir = tmp_path / "run"
        config = write_config(
            tmp_path / "c.json", train, test, out_dir, epochs=1
        )
        code = main(
            [
                "sweep",
                "--config",
                str(config),
                "--depths",
                "1,2",
                "--widths",
                "4",
                "--head",
                "mlp",
            ]
        )
        assert code == EXIT_OK
        rows = (out_dir / "sweep_mlp.csv").read_text().splitlines()
        assert rows[0] == "head,depth,width,rmse,best_epoch"
        assert len(rows) == 3


class TestBoxplot:
    def test_known_quartiles(self, tmp_path, capsys):
        from elyte.data import Dataset, ElectrolyteComponent, Formulation

        forms = tuple(
            Formulation(
                f"f{i}",
                (ElectrolyteComponent("CC", 1.0), ElectrolyteComponent("CCO", 1.0)),
                target_ce=None if False else 0.5,
                target_lce=float(v),
            )
            for i, v in enumerate([1, 2, 3, 4, 5])
        )
        path = tmp_path / "d.jsonl"
        save_dataset(Dataset(forms), path)
        assert main(["boxplot", "--data", str(path)]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "component_count,min,q25,median,q75,max,outliers"
        assert out[1] == "2,1.0,2.0,3.0,4.0,5.0,"

    def test_single_group_one_row(self, tmp_path, capsys):
        path = tmp_path / "d.jsonl"
        save_dataset(synthetic_dataset(6, seed=2, components_range=(3, 3)), path)
        assert main(["boxplot", "--data", str(path)]) == EXIT_OK
        assert len(capsys.readouterr().out.splitlines()) == 2


class TestGradcheck:
    def test_default_passes(self, capsys):
        assert main(["gradcheck", "--head", "kan"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "float64" in out

    def test_corrupted_fails(self, capsys):
        assert main(["gradcheck", "--corrupt"]) == EXIT_GRADCHECK
        assert "FAIL" in capsys.readouterr().out
