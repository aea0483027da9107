"""Training loop, AdamW optimizer, metrics, sweeps and gradient checking.

The loop is fully deterministic under its seed: the validation carve-out,
the per-epoch mini-batch shuffle and the dropout stream each derive from
the config seed through independent generators, so identical (seed, config,
data) reproduce byte-identical histories and checkpoints.  The best
checkpoint is the epoch with the lowest validation loss, ties broken toward
the earlier epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Formulation, _shuffled_indices


class NonFiniteLossError(RuntimeError):
    """Training diverged: a loss or gradient became NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 5e-5
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    val_fraction: float = 0.1
    encoder_mode: str = "finetune"  # "frozen" (embeddings from file) or "finetune"
    pooling_mode: str = "cido"  # "cido" or "sep_join"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be strictly between 0 and 1")
        if self.encoder_mode not in ("frozen", "finetune"):
            raise ValueError(f"unknown encoder_mode {self.encoder_mode!r}")
        if self.pooling_mode not in ("cido", "sep_join"):
            raise ValueError(f"unknown pooling_mode {self.pooling_mode!r}")


def rmse(preds, targets) -> float:
    """Root mean square error between prediction and target sequences."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise ValueError("rmse of empty sequences")
    diff = preds - targets
    return float(np.sqrt(np.mean(diff * diff)))


def mse_loss(preds, targets) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient 2 (pred - target) / N."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise ValueError("loss of empty sequences")
    diff = preds - targets
    return float(np.mean(diff * diff)), 2.0 * diff / preds.size


@dataclass
class OptimizerState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step: int = 0


def init_adamw_state(params: dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState(
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
    )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One decoupled-weight-decay Adam update; returns new params and state.

    p <- p - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p), with
    bias-corrected first/second moment estimates mhat, vhat.
    """
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise ValueError(f"parameter/gradient name mismatch: {sorted(missing)}")
    t = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(f"non-finite gradient for parameter {name!r}")
        m = cfg.beta1 * state.first_moment[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.second_moment[name] + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        update = m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[name]
        new_params[name] = params[name] - cfg.learning_rate * update
        new_m[name] = m
        new_v[name] = v
    return new_params, OptimizerState(new_m, new_v, t)


@dataclass(frozen=True)
class EpochStats:
    train_loss: float
    val_loss: float
    test_rmse: float | None = None


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0  # index into epochs of the lowest validation loss
    best_params: dict[str, np.ndarray] = field(default_factory=dict)
    train_ids: tuple[str, ...] = ()
    val_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Metrics:
    rmse: float


def _targets(formulations) -> np.ndarray:
    return np.array([f.target_lce for f in formulations], dtype=np.float64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_validation(
    dataset: Dataset, val_fraction: float, seed: int
) -> tuple[list[Formulation], list[Formulation]]:
    """Deterministic validation carve-out (at least one sample each side)."""
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two formulations to carve a validation set")
    order = _shuffled_indices(n, seed)
    n_val = min(max(1, _round_half_up(n * val_fraction)), n - 1)
    val = [dataset.formulations[i] for i in order[:n_val]]
    train = [dataset.formulations[i] for i in order[n_val:]]
    return train, val


def _eval_predictions(model, formulations, batch_size: int = 32) -> np.ndarray:
    preds = []
    for start in range(0, len(formulations), batch_size):
        chunk = formulations[start : start + batch_size]
        p, _ = model.predict_batch(list(chunk), mode="eval")
        preds.append(np.asarray(p))
    return np.concatenate(preds)


def train(
    model,
    train_set: Dataset,
    cfg: TrainConfig,
    test_set: Dataset | None = None,
) -> TrainHistory:
    """Mini-batch AdamW fine-tuning on MSE over LCE targets.

    A ``val_fraction`` slice of ``train_set`` is held out (seeded) for
    best-epoch selection.  ``test_set``, when given, is evaluated each epoch
    for the history record only; it never influences training.
    """
    if len(train_set) == 0:
        raise ValueError("cannot train on an empty dataset")
    train_forms, val_forms = split_validation(train_set, cfg.val_fraction, cfg.seed)
    shuffle_seed = (cfg.seed * 0x9E3779B9 + 1) & 0xFFFFFFFFFFFFFFFF
    dropout_rng = np.random.default_rng((cfg.seed, 0xD0))

    params = model.trainable_params()
    state = init_adamw_state(params)
    history = TrainHistory(
        train_ids=tuple(f.id for f in train_forms),
        val_ids=tuple(f.id for f in val_forms),
    )
    best_val = math.inf
    for epoch in range(cfg.epochs):
        order = _shuffled_indices(len(train_forms), shuffle_seed + epoch)
        total_se = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_forms[i] for i in order[start : start + cfg.batch_size]]
            preds, cache = model.predict_batch(batch, mode="train", rng=dropout_rng)
            loss, d_preds = mse_loss(preds, _targets(batch))
            if not math.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            grads = model.backward_batch(cache, d_preds)
            params, state = adamw_step(params, grads, state, cfg)
            model.set_params(params)
            total_se += loss * len(batch)
        train_loss = total_se / len(train_forms)
        val_loss, _ = mse_loss(_eval_predictions(model, val_forms), _targets(val_forms))
        test_metric = None
        if test_set is not None:
            test_metric = rmse(
                _eval_predictions(model, test_set.formulations),
                _targets(test_set.formulations),
            )
        history.epochs.append(EpochStats(train_loss, val_loss, test_metric))
        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            history.best_params = {k: v.copy() for k, v in model.all_params().items()}
    return history


def evaluate(model, dataset: Dataset) -> Metrics:
    """Eval-mode RMSE over a dataset's LCE targets."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = _eval_predictions(model, dataset.formulations)
    return Metrics(rmse=rmse(preds, _targets(dataset.formulations)))


def predictions(model, dataset: Dataset) -> list[tuple[str, float, float]]:
    """Per-formulation (id, actual LCE, predicted LCE) rows, eval mode."""
    preds = _eval_predictions(model, dataset.formulations)
    return [
        (f.id, float(f.target_lce), float(p))
        for f, p in zip(dataset.formulations, preds)
    ]


@dataclass(frozen=True)
class SweepResult:
    head: str
    depth: int
    width: int
    rmse: float
    best_epoch: int


def sweep(
    model_factory,
    head_kind: str,
    train_set: Dataset,
    test_set: Dataset,
    depths: list[int],
    widths: list[int],
    cfg: TrainConfig,
) -> list[SweepResult]:
    """Train/evaluate a fresh model per (depth, width) grid cell.

    ``model_factory(depth, width)`` must return a freshly initialized model.
    Each cell trains under the shared config, restores its best-validation
    checkpoint and reports test RMSE.
    """
    if not depths or not widths:
        raise ValueError("depth and width grids must be non-empty")
    results = []
    for depth in depths:
        for width in widths:
            model = model_factory(depth, width)
            history = train(model, train_set, cfg, test_set=test_set)
            model.set_params(history.best_params)
            metric = evaluate(model, test_set)
            results.append(
                SweepResult(head_kind, depth, width, metric.rmse, history.best_epoch)
            )
    return results


def gradient_check(
    model,
    sample_batch: list[Formulation],
    h: float = 1e-5,
    max_checks: int = 200,
    seed: int = 0,
    corrupt: bool = False,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss is eval-mode MSE on the sample batch (deterministic, so finite
    differences are well defined).  For large models a seeded subsample of
    at least ``max_checks`` parameters is checked.  ``corrupt`` perturbs one
    analytic gradient by 1.0 as a sensitivity control; the check must then
    fail.
    """
    targets = _targets(sample_batch)

    def loss_value() -> float:
        preds, _ = model.predict_batch(sample_batch, mode="eval")
        value, _ = mse_loss(preds, targets)
        return value

    preds, cache = model.predict_batch(sample_batch, mode="eval")
    _, d_preds = mse_loss(preds, targets)
    grads = model.backward_batch(cache, d_preds)
    params = model.trainable_params()

    entries: list[tuple[str, int]] = []
    for name in sorted(params):
        entries.extend((name, i) for i in range(params[name].size))
    if len(entries) > max_checks:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(entries), size=max_checks, replace=False)
        entries = [entries[i] for i in sorted(chosen)]

    if corrupt and entries:
        name, index = entries[0]
        grads[name] = grads[name].copy()
        grads[name].flat[index] += 1.0

    worst = 0.0
    for name, index in entries:
        array = params[name]
        original = array.flat[index]
        array.flat[index] = original + h
        loss_plus = loss_value()
        array.flat[index] = original - h
        loss_minus = loss_value()
        array.flat[index] = original
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        analytic = grads[name].flat[index]
        scale = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def history_csv_lines(history: TrainHistory) -> list[str]:
    """History CSV rows: ``epoch,train_loss,val_loss,test_rmse``."""
    lines = ["epoch,train_loss,val_loss,test_rmse"]
    for i, stats in enumerate(history.epochs):
        test = "" if stats.test_rmse is None else repr(stats.test_rmse)
        lines.append(f"{i},{stats.train_loss!r},{stats.val_loss!r},{test}")
    return lines


def sweep_csv_lines(results: list[SweepResult]) -> list[str]:
    """Sweep CSV rows: ``head,depth,width,rmse,best_epoch``."""
    lines = ["head,depth,width,rmse,best_epoch"]
    for r in results:
        lines.append(f"{r.head},{r.depth},{r.width},{r.rmse!r},{r.best_epoch}")
    return lines
