"""Metrics, AdamW, the training loop and its determinism, sweeps, gradcheck."""

import math

import numpy as np
import pytest

from conftest import TOY_ENCODER, make_toy_model

from elyte.data import Dataset
from elyte.synth import synthetic_dataset
from elyte.training import (
    NonFiniteLossError,
    TrainConfig,
    adamw_step,
    evaluate,
    gradient_check,
    history_csv_lines,
    init_adamw_state,
    mse_loss,
    predictions,
    rmse,
    split_validation,
    sweep,
    sweep_csv_lines,
    train,
)


class TestRmse:
    def test_exact_predictions(self):
        assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_hand_value(self):
        assert rmse([1.0, 2.0], [0.0, 2.0]) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_constant_offset(self):
        rng = np.random.default_rng(0)
        targets = rng.normal(size=20)
        assert rmse(targets + 0.37, targets) == pytest.approx(0.37, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            rmse([], [])


class TestMseLoss:
    def test_exact(self):
        loss, grad = mse_loss([1.0, 2.0], [1.0, 2.0])
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_single_pair(self):
        loss, grad = mse_loss([1.0], [0.0])
        assert loss == 1.0
        assert grad[0] == 2.0

    def test_equals_rmse_squared(self):
        rng = np.random.default_rng(1)
        preds, targets = rng.normal(size=10), rng.normal(size=10)
        loss, _ = mse_loss(preds, targets)
        assert loss == pytest.approx(rmse(preds, targets) ** 2, rel=1e-12)


class TestAdamW:
    def test_zero_grad_zero_decay_unchanged(self):
        cfg = TrainConfig(weight_decay=0.0)
        params = {"p": np.array([1.5, -2.0])}
        new, _ = adamw_step(params, {"p": np.zeros(2)}, init_adamw_state(params), cfg)
        np.testing.assert_array_equal(new["p"], params["p"])

    def test_first_step_magnitude(self):
        # hand evaluation at t=1: mhat = g, vhat = g^2, update ~ lr * sign(g)
        cfg = TrainConfig(learning_rate=0.1, weight_decay=0.0)
        params = {"p": np.array([1.0])}
        new, state = adamw_step(params, {"p": np.array([1.0])}, init_adamw_state(params), cfg)
        assert new["p"][0] == pytest.approx(0.9, abs=1e-8)
        assert state.step == 1

    def test_decoupled_decay(self):
        cfg = TrainConfig(learning_rate=0.1, weight_decay=0.5)
        params = {"p": np.array([2.0])}
        new, _ = adamw_step(params, {"p": np.zeros(1)}, init_adamw_state(params), cfg)
        assert new["p"][0] == pytest.approx(2.0 * (1 - 0.1 * 0.5), rel=1e-12)

    def test_loss_scale_invariant_sign_pattern(self):
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.0)
        rng = np.random.default_rng(2)
        params = {"p": rng.normal(size=12)}
        grads = {"p": rng.normal(size=12)}
        base, _ = adamw_step(params, grads, init_adamw_state(params), cfg)
        scaled, _ = adamw_step(
            params, {"p": grads["p"] * 1000.0}, init_adamw_state(params), cfg
        )
        np.testing.assert_array_equal(
            np.sign(base["p"] - params["p"]), np.sign(scaled["p"] - params["p"])
        )
        assert np.abs(scaled["p"] - params["p"]).max() <= cfg.learning_rate * (1 + 1e-12)

    def test_non_finite_gradient_reports_name(self):
        cfg = TrainConfig()
        params = {"ok": np.zeros(1), "bad": np.zeros(1)}
        grads = {"ok": np.zeros(1), "bad": np.array([np.nan])}
        with pytest.raises(NonFiniteLossError, match="bad"):
            adamw_step(params, grads, init_adamw_state(params), cfg)

    def test_name_mismatch(self):
        cfg = TrainConfig()
        params = {"a": np.zeros(1)}
        with pytest.raises(ValueError, match="mismatch"):
            adamw_step(params, {"b": np.zeros(1)}, init_adamw_state(params), cfg)


class TestSplitValidation:
    def test_deterministic_and_disjoint(self):
        ds = synthetic_dataset(20, seed=0)
        a_train, a_val = split_validation(ds, 0.1, seed=5)
        b_train, b_val = split_validation(ds, 0.1, seed=5)
        assert [f.id for f in a_train] == [f.id for f in b_train]
        assert [f.id for f in a_val] == [f.id for f in b_val]
        assert not set(f.id for f in a_train) & set(f.id for f in a_val)
        assert len(a_val) == 2

    def test_at_least_one_each(self):
        ds = synthetic_dataset(3, seed=1)
        train_forms, val_forms = split_validation(ds, 0.01, seed=0)
        assert len(val_forms) == 1 and len(train_forms) == 2


class TestTrainLoop:
    def test_lr_zero_keeps_parameters(self, toy_vocab, toy_dataset):
        model = make_toy_model(toy_vocab)
        before = {k: v.copy() for k, v in model.trainable_params().items()}
        cfg = TrainConfig(learning_rate=0.0, weight_decay=0.0, epochs=3, seed=0)
        history = train(model, toy_dataset, cfg)
        after = model.trainable_params()
        for name, value in before.items():
            np.testing.assert_array_equal(value, after[name])
        losses = [e.train_loss for e in history.epochs]
        assert max(losses) - min(losses) < 1e-12

    def test_same_seed_identical_history(self, toy_vocab, toy_dataset):
        cfg = TrainConfig(epochs=3, seed=7)
        h1 = train(make_toy_model(toy_vocab, seed=3), toy_dataset, cfg)
        h2 = train(make_toy_model(toy_vocab, seed=3), toy_dataset, cfg)
        assert h1.epochs == h2.epochs
        assert h1.best_epoch == h2.best_epoch
        for name, value in h1.best_params.items():
            np.testing.assert_array_equal(value, h2.best_params[name])

    def test_best_epoch_is_argmin_val_loss(self, toy_vocab, toy_dataset):
        cfg = TrainConfig(epochs=5, seed=1, learning_rate=1e-3)
        history = train(make_toy_model(toy_vocab, seed=2), toy_dataset, cfg)
        val_losses = [e.val_loss for e in history.epochs]
        assert history.best_epoch == int(np.argmin(val_losses))

    def test_history_has_epoch_rows(self, toy_vocab, toy_dataset):
        cfg = TrainConfig(epochs=4, seed=0)
        history = train(make_toy_model(toy_vocab), toy_dataset, cfg)
        assert len(history.epochs) == 4
        lines = history_csv_lines(history)
        assert lines[0] == "epoch,train_loss,val_loss,test_rmse"
        assert len(lines) == 5

    def test_test_set_recorded(self, toy_vocab, toy_dataset):
        test_set = synthetic_dataset(4, seed=99)
        cfg = TrainConfig(epochs=2, seed=0)
        history = train(make_toy_model(toy_vocab), toy_dataset, cfg, test_set=test_set)
        assert all(e.test_rmse is not None for e in history.epochs)

    def test_empty_dataset_rejected(self, toy_vocab):
        with pytest.raises(ValueError):
            train(make_toy_model(toy_vocab), Dataset(()), TrainConfig())

    def test_loss_trend_decreases(self, toy_vocab, toy_dataset):
        # final-10-epoch mean train loss below the first-10-epoch mean
        cfg = TrainConfig(epochs=30, learning_rate=1e-3, seed=2)
        history = train(make_toy_model(toy_vocab, seed=4), toy_dataset, cfg)
        losses = [e.train_loss for e in history.epochs]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])


class TestEvaluatePredictions:
    def test_rmse_zero_against_self(self, toy_vocab, toy_dataset):
        model = make_toy_model(toy_vocab)
        rows = predictions(model, toy_dataset)
        fake = Dataset(
            tuple(
                f.__class__(
                    id=f.id, components=f.components, target_ce=f.target_ce,
                    target_lce=pred,
                )
                for f, (_, _, pred) in zip(toy_dataset.formulations, rows)
            )
        )
        assert evaluate(model, fake).rmse == pytest.approx(0.0, abs=1e-12)

    def test_row_count(self, toy_vocab, toy_dataset):
        model = make_toy_model(toy_vocab)
        assert len(predictions(model, toy_dataset)) == len(toy_dataset)


class TestSweep:
    def test_single_cell_matches_train_evaluate(self, toy_vocab):
        ds = synthetic_dataset(8, seed=3)
        test = synthetic_dataset(4, seed=4)
        cfg = TrainConfig(epochs=2, seed=0)

        def factory(depth, width):
            return make_toy_model(toy_vocab, seed=depth * 100 + width)

        results = sweep(factory, "kan", ds, test, [2], [8], cfg)
        assert len(results) == 1
        row = results[0]
        assert (row.head, row.depth, row.width) == ("kan", 2, 8)
        assert row.rmse >= 0.0

    def test_rerun_identical(self, toy_vocab):
        ds = synthetic_dataset(8, seed=3)
        test = synthetic_dataset(4, seed=4)
        cfg = TrainConfig(epochs=2, seed=0)

        def factory(depth, width):
            return make_toy_model(toy_vocab, seed=41)

        a = sweep(factory, "mlp", ds, test, [1, 2], [4], cfg)
        b = sweep(factory, "mlp", ds, test, [1, 2], [4], cfg)
        assert sweep_csv_lines(a) == sweep_csv_lines(b)

    def test_grid_size(self, toy_vocab):
        ds = synthetic_dataset(6, seed=3)
        test = synthetic_dataset(3, seed=4)
        cfg = TrainConfig(epochs=1, seed=0)
        results = sweep(
            lambda d, w: make_toy_model(toy_vocab), "kan", ds, test, [1, 2, 3], [4, 8], cfg
        )
        assert len(results) == 6

    def test_empty_grid_rejected(self, toy_vocab):
        with pytest.raises(ValueError):
            sweep(lambda d, w: None, "kan", synthetic_dataset(4), synthetic_dataset(2), [], [1], TrainConfig())


class TestGradientCheck:
    def test_linear_model_near_exact(self):
        # quadratic loss on a pure linear map: FD error ~ rounding only
        from elyte.heads import MlpHead
        from elyte.model import FrozenEmbeddingModel
        from elyte.encoder import TokenEmbeddings
        from elyte.data import ElectrolyteComponent, Formulation

        rng = np.random.default_rng(0)
        head = MlpHead(
            weights=[rng.normal(size=(4, 1))], biases=[np.zeros(1)], dropout_rate=0.0
        )
        embeddings = {
            "CC": TokenEmbeddings(rng.normal(size=(3, 4)), np.ones(3, bool)),
            "CCO": TokenEmbeddings(rng.normal(size=(2, 4)), np.ones(2, bool)),
        }
        forms = [
            Formulation(
                "f1",
                (ElectrolyteComponent("CC", 1.0), ElectrolyteComponent("CCO", 2.0)),
                target_ce=0.9,
                target_lce=1.0,
            )
        ]
        model = FrozenEmbeddingModel(embeddings, head)
        assert gradient_check(model, forms) < 1e-8

    def test_toy_pipeline_under_tolerance(self, toy_vocab, toy_dataset):
        model = make_toy_model(toy_vocab)
        error = gradient_check(
            model, list(toy_dataset.formulations[:4]), max_checks=150, seed=0
        )
        assert error < 1e-4

    def test_corrupted_gradient_fails(self, toy_vocab, toy_dataset):
        model = make_toy_model(toy_vocab)
        error = gradient_check(
            model, list(toy_dataset.formulations[:2]), max_checks=40, seed=0, corrupt=True
        )
        assert error > 1e-2
