"""
Spline KAN layers
=================

A KAN layer learns one scalar function per (output, input) edge instead of
a fixed activation on a linear map:

    phi(x) = w_base * silu(x) + w_spline * sum_j c_j B_j(x)

The B_j are cubic B-splines on a uniform grid; they sum to one across the
domain and each lives on a small knot span, so coefficients act locally.
The demo shows those basis properties, exact-vs-numeric gradients, and a
KAN stack learning sin(pi x) from scratch.
"""

import numpy as np

from elyte.kan import (
    BSplineGrid,
    KanStack,
    bspline_basis,
    kan_backward,
    kan_forward,
    kan_layer_init,
    stack_backward,
    stack_forward,
)
from elyte.training import TrainConfig, adamw_step, init_adamw_state, mse_loss

grid = BSplineGrid()  # order 3, five intervals on [-2, 2]
xs = np.linspace(grid.t_min, grid.t_max, 5)
basis = bspline_basis(xs, grid)
print(f"{grid.num_basis} basis functions; sums over the domain:", basis.sum(axis=-1))
print()

# Analytic gradients vs central finite differences on one random layer.
rng = np.random.default_rng(1)
layer = kan_layer_init(3, 2, rng)
x = rng.uniform(-1.5, 1.5, size=3)
upstream = rng.normal(size=2)
grads = kan_backward(layer, x, upstream)
h = 1e-5
index = (1, 2, 4)
original = layer.spline_coeffs[index]
layer.spline_coeffs[index] = original + h
plus = float(kan_forward(layer, x) @ upstream)
layer.spline_coeffs[index] = original - h
minus = float(kan_forward(layer, x) @ upstream)
layer.spline_coeffs[index] = original
print(f"analytic dc{list(index)} = {grads.spline_coeffs[index]:+.8f}")
print(f"numeric  dc{list(index)} = {(plus - minus) / (2 * h):+.8f}")
print()

# Fit sin(pi x) with a 1 -> 8 -> 1 stack and full-batch AdamW.
stack = KanStack([kan_layer_init(1, 8, rng), kan_layer_init(8, 1, rng)])
x = np.linspace(-1, 1, 256)[:, None]
target = np.sin(np.pi * x[:, 0])
cfg = TrainConfig(learning_rate=0.01, weight_decay=0.0)
params = {
    f"k{i}.{name}": getattr(layer, attr)
    for i, layer in enumerate(stack.layers)
    for name, attr in (("base", "base_weight"), ("scale", "spline_scale"), ("coeffs", "spline_coeffs"))
}
state = init_adamw_state(params)
for step in range(1501):
    out = stack_forward(stack, x)[:, 0]
    loss, d_out = mse_loss(out, target)
    if step % 300 == 0:
        print(f"step {step:>4}  MSE {loss:.6f}")
    _, layer_grads = stack_backward(stack, x, d_out[:, None])
    grads = {
        f"k{i}.{name}": getattr(g, attr)
        for i, g in enumerate(layer_grads)
        for name, attr in (("base", "base_weight"), ("scale", "spline_scale"), ("coeffs", "spline_coeffs"))
    }
    params, state = adamw_step(params, grads, state, cfg)
    for i, layer in enumerate(stack.layers):
        layer.base_weight = params[f"k{i}.base"]
        layer.spline_scale = params[f"k{i}.scale"]
        layer.spline_coeffs = params[f"k{i}.coeffs"]
