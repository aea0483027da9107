"""Regression heads mapping a formulation embedding to a scalar LCE.

Two head families:

* ``MlpHead``: linear layers with ReLU and inverted dropout between them
  (default two layers, hidden width 64, dropout 0.2).  Dropout is active
  only in train mode and scales by 1/(1 - rate), so the eval forward equals
  the train-mode expectation.
* ``KanHead``: a stack of spline KAN layers followed by a plain linear
  output map (default widths 64, 16).  Deterministic in both modes; no
  dropout.

Forward passes are pure given parameters; train-mode randomness comes only
from the caller-supplied RNG stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kan import KanLayer, KanStack, kan_backward, kan_forward, kan_layer_init, BSplineGrid


@dataclass
class MlpHead:
    weights: list[np.ndarray]  # each (fan_in, fan_out); last fan_out == 1
    biases: list[np.ndarray]
    dropout_rate: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for w_prev, w_next in zip(self.weights, self.weights[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise ValueError("layer dimensions do not chain")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("final layer must map to one output")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def param_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"head.linear{i}.w"] = w
            out[f"head.linear{i}.b"] = b
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = params[f"head.linear{i}.w"]
            self.biases[i] = params[f"head.linear{i}.b"]


def mlp_head_init(
    input_dim: int,
    hidden: tuple[int, ...] = (64,),
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> MlpHead:
    """Fan-in scaled normal weights, zero biases, deterministic under seed."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, 1]
    weights = [
        rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(dims, dims[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in dims[1:]]
    return MlpHead(weights, biases, dropout_rate)


def _mlp_forward_batch(head: MlpHead, x: np.ndarray, mode: str, rng):
    """Batch forward; returns (predictions (N,), cache for backward)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if x.ndim != 2 or x.shape[1] != head.input_dim:
        raise ValueError(f"input shape {x.shape} incompatible with width {head.input_dim}")
    hidden = x
    stages = []
    last = len(head.weights) - 1
    for i, (w, b) in enumerate(zip(head.weights, head.biases)):
        pre = hidden @ w + b
        if i == last:
            stages.append((hidden, pre, None, None))
            hidden = pre
            break
        relu = np.maximum(pre, 0.0)
        if mode == "train" and head.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("train mode with dropout needs an RNG")
            keep = rng.random(relu.shape) >= head.dropout_rate
            dropped = relu * keep / (1.0 - head.dropout_rate)
        else:
            keep = None
            dropped = relu
        stages.append((hidden, pre, relu, keep))
        hidden = dropped
    return hidden[:, 0], stages


def _mlp_backward_batch(head: MlpHead, stages, d_preds: np.ndarray):
    """Gradients wrt input and parameters given d loss/d predictions."""
    grads: dict[str, np.ndarray] = {}
    d_hidden = d_preds[:, None]
    for i in range(len(head.weights) - 1, -1, -1):
        inp, pre, relu, keep = stages[i]
        if i < len(head.weights) - 1:
            if keep is not None:
                d_hidden = d_hidden * keep / (1.0 - head.dropout_rate)
            d_hidden = d_hidden * (pre > 0.0)
        grads[f"head.linear{i}.w"] = inp.T @ d_hidden
        grads[f"head.linear{i}.b"] = d_hidden.sum(axis=0)
        d_hidden = d_hidden @ head.weights[i].T
    return d_hidden, grads


def mlp_forward(head: MlpHead, x, mode: str = "eval", rng=None) -> float:
    """Scalar prediction for one formulation embedding."""
    preds, _ = _mlp_forward_batch(head, np.asarray(x, dtype=np.float64)[None, :], mode, rng)
    return float(preds[0])


@dataclass
class KanHead:
    kan_layers: list[KanLayer]
    out_weight: np.ndarray  # (last_width, 1)
    out_bias: np.ndarray  # (1,)

    def __post_init__(self):
        KanStack(self.kan_layers)  # validates the width chain
        if self.out_weight.shape != (self.kan_layers[-1].n_out, 1):
            raise ValueError("output weight shape mismatch")

    @property
    def input_dim(self) -> int:
        return self.kan_layers[0].n_in

    def param_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.kan_layers):
            out[f"head.kan{i}.base"] = layer.base_weight
            out[f"head.kan{i}.scale"] = layer.spline_scale
            out[f"head.kan{i}.coeffs"] = layer.spline_coeffs
        out["head.out.w"] = self.out_weight
        out["head.out.b"] = self.out_bias
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.kan_layers):
            layer.base_weight = params[f"head.kan{i}.base"]
            layer.spline_scale = params[f"head.kan{i}.scale"]
            layer.spline_coeffs = params[f"head.kan{i}.coeffs"]
        self.out_weight = params["head.out.w"]
        self.out_bias = params["head.out.b"]


def kan_head_init(
    input_dim: int,
    widths: tuple[int, ...] = (64, 16),
    seed: int = 0,
    grid: BSplineGrid | None = None,
) -> KanHead:
    rng = np.random.default_rng(seed)
    dims = [input_dim, *widths]
    layers = [
        kan_layer_init(fan_in, fan_out, rng, grid=grid)
        for fan_in, fan_out in zip(dims, dims[1:])
    ]
    out_weight = rng.normal(0.0, 1.0 / np.sqrt(dims[-1]), size=(dims[-1], 1))
    return KanHead(layers, out_weight, np.zeros(1))


def _kan_head_forward_batch(head: KanHead, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != head.input_dim:
        raise ValueError(f"input shape {x.shape} incompatible with width {head.input_dim}")
    activations = [x]
    for layer in head.kan_layers:
        activations.append(kan_forward(layer, activations[-1]))
    preds = (activations[-1] @ head.out_weight + head.out_bias)[:, 0]
    return preds, activations


def _kan_head_backward_batch(head: KanHead, activations, d_preds: np.ndarray):
    grads: dict[str, np.ndarray] = {}
    d_col = d_preds[:, None]
    grads["head.out.w"] = activations[-1].T @ d_col
    grads["head.out.b"] = d_col.sum(axis=0)
    d_hidden = d_col @ head.out_weight.T
    for i in range(len(head.kan_layers) - 1, -1, -1):
        layer_grads = kan_backward(head.kan_layers[i], activations[i], d_hidden)
        grads[f"head.kan{i}.base"] = layer_grads.base_weight
        grads[f"head.kan{i}.scale"] = layer_grads.spline_scale
        grads[f"head.kan{i}.coeffs"] = layer_grads.spline_coeffs
        d_hidden = layer_grads.x
    return d_hidden, grads


def kan_head_forward(head: KanHead, x, mode: str = "eval") -> float:
    """Scalar prediction; deterministic in both modes (no dropout here)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    preds, _ = _kan_head_forward_batch(head, np.asarray(x, dtype=np.float64)[None, :])
    return float(preds[0])


def head_init(kind: str, input_dim: int, widths=None, seed: int = 0, dropout_rate: float = 0.2):
    """Construct either head kind with deterministic seeded parameters."""
    if kind == "mlp":
        hidden = tuple(widths) if widths is not None else (64,)
        return mlp_head_init(input_dim, hidden, dropout_rate, seed)
    if kind == "kan":
        kan_widths = tuple(widths) if widths is not None else (64, 16)
        return kan_head_init(input_dim, kan_widths, seed)
    raise ValueError(f"unknown head kind {kind!r}")


def head_forward_batch(head, x: np.ndarray, mode: str = "eval", rng=None):
    """Uniform batch interface over both head kinds; returns (preds, cache)."""
    if isinstance(head, MlpHead):
        return _mlp_forward_batch(head, x, mode, rng)
    if isinstance(head, KanHead):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be train or eval, got {mode!r}")
        return _kan_head_forward_batch(head, x)
    raise TypeError(f"unknown head type {type(head).__name__}")


def head_backward_batch(head, cache, d_preds: np.ndarray):
    if isinstance(head, MlpHead):
        return _mlp_backward_batch(head, cache, d_preds)
    if isinstance(head, KanHead):
        return _kan_head_backward_batch(head, cache, d_preds)
    raise TypeError(f"unknown head type {type(head).__name__}")
