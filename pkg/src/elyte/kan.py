"""Kolmogorov-Arnold layers built on uniform B-splines, with exact gradients.

A layer maps n_in inputs to n_out outputs through a matrix of learnable
scalar functions, one per (output, input) edge:

    phi[q, p](x) = base_weight[q, p] * silu(x)
                 + spline_scale[q, p] * sum_j coeffs[q, p, j] * B_j(x)
    y[q] = sum_p phi[q, p](x[p])

The B_j are order-k B-spline basis functions on an extended uniform knot
vector over a fixed domain, evaluated by the Cox-de Boor recursion.  They
are a partition of unity on the domain interior and have local support, so
early training behaves like a small perturbation of the silu base term.

The grid is static: inputs arriving outside the domain still get the silu
base term, while the spline term decays to zero beyond the extended knots.
No clamping, no error.

Forward and backward passes are pure functions of (layer, input); parameter
updates must be serialized by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class BSplineGrid:
    """Uniform knot grid for order-``order`` B-splines on [t_min, t_max].

    The knot vector is extended ``order`` steps past each end, giving
    ``intervals + 2 * order + 1`` knots and ``intervals + order`` basis
    functions.
    """

    order: int = 3
    intervals: int = 5
    t_min: float = -2.0
    t_max: float = 2.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.intervals < 1:
            raise ValueError("intervals must be >= 1")
        if not self.t_min < self.t_max:
            raise ValueError("t_min must be < t_max")

    @property
    def num_basis(self) -> int:
        return self.intervals + self.order

    def knots(self) -> np.ndarray:
        step = (self.t_max - self.t_min) / self.intervals
        return self.t_min + step * np.arange(
            -self.order, self.intervals + self.order + 1, dtype=np.float64
        )


def _basis_recursion(x_col: np.ndarray, knots: np.ndarray, up_to: int) -> np.ndarray:
    """Cox-de Boor recursion from degree 0 up to degree ``up_to``.

    ``x_col`` has shape (N, 1); the result has one basis value per surviving
    knot span, shape (N, len(knots) - 1 - up_to).
    """
    bases = ((x_col >= knots[:-1]) & (x_col < knots[1:])).astype(np.float64)
    for degree in range(1, up_to + 1):
        left = (x_col - knots[: -(degree + 1)]) / (knots[degree:-1] - knots[: -(degree + 1)])
        right = (knots[degree + 1 :] - x_col) / (knots[degree + 1 :] - knots[1:-degree])
        bases = left * bases[:, :-1] + right * bases[:, 1:]
    return bases


def bspline_basis(x, grid: BSplineGrid) -> np.ndarray:
    """All ``grid.num_basis`` basis values at ``x``; shape ``x.shape + (num_basis,)``.

    On [t_min, t_max] the values sum to 1 (partition of unity); outside the
    extended knot span they are all zero.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 1)
    bases = _basis_recursion(flat, grid.knots(), grid.order)
    return bases.reshape(*x.shape, grid.num_basis)


def bspline_basis_and_deriv(x, grid: BSplineGrid) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and their first derivatives at ``x``.

    The derivative uses the standard recursion
    ``B'_{j,k} = k * (B_{j,k-1} / span_j - B_{j+1,k-1} / span_{j+1})``.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 1)
    knots = grid.knots()
    k = grid.order
    lower = _basis_recursion(flat, knots, k - 1)
    left = (flat - knots[: -(k + 1)]) / (knots[k:-1] - knots[: -(k + 1)])
    right = (knots[k + 1 :] - flat) / (knots[k + 1 :] - knots[1:-k])
    bases = left * lower[:, :-1] + right * lower[:, 1:]
    deriv = k * (
        lower[:, :-1] / (knots[k:-1] - knots[: -(k + 1)])
        - lower[:, 1:] / (knots[k + 1 :] - knots[1:-k])
    )
    shape = (*x.shape, grid.num_basis)
    return bases.reshape(shape), deriv.reshape(shape)


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class KanLayer:
    """One function-matrix layer; see the module docstring for the formula."""

    n_in: int
    n_out: int
    grid: BSplineGrid
    base_weight: np.ndarray  # (n_out, n_in)
    spline_scale: np.ndarray  # (n_out, n_in)
    spline_coeffs: np.ndarray  # (n_out, n_in, num_basis)

    def __post_init__(self):
        expected = (self.n_out, self.n_in, self.grid.num_basis)
        if self.spline_coeffs.shape != expected:
            raise ValueError(
                f"spline_coeffs shape {self.spline_coeffs.shape} != {expected}"
            )
        if self.base_weight.shape != expected[:2]:
            raise ValueError("base_weight shape mismatch")
        if self.spline_scale.shape != expected[:2]:
            raise ValueError("spline_scale shape mismatch")


def kan_layer_init(
    n_in: int, n_out: int, rng: np.random.Generator, grid: BSplineGrid | None = None
) -> KanLayer:
    """Fan-in scaled init: base ~ N(0, 1/n_in), scale 1, small spline coeffs.

    The spline coefficients start at N(0, (0.1 / sqrt(n_in))^2) so the layer
    begins as a small perturbation of a plain silu map.
    """
    grid = grid if grid is not None else BSplineGrid()
    return KanLayer(
        n_in=n_in,
        n_out=n_out,
        grid=grid,
        base_weight=rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)),
        spline_scale=np.ones((n_out, n_in)),
        spline_coeffs=rng.normal(
            0.0, 0.1 / np.sqrt(n_in), size=(n_out, n_in, grid.num_basis)
        ),
    )


def phi_eval(layer: KanLayer, p: int, q: int, x: float) -> float:
    """Evaluate the single edge function phi[q, p] at scalar ``x``."""
    basis = bspline_basis(np.float64(x), layer.grid)
    spline = float(layer.spline_coeffs[q, p] @ basis)
    return float(
        layer.base_weight[q, p] * silu(np.float64(x))
        + layer.spline_scale[q, p] * spline
    )


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected a vector or a batch of vectors, got shape {arr.shape}")


def kan_forward(layer: KanLayer, x) -> np.ndarray:
    """Apply the layer to one vector (n_in,) or a batch (N, n_in)."""
    batch, squeeze = _as_batch(x)
    if batch.shape[1] != layer.n_in:
        raise ValueError(f"input width {batch.shape[1]} != n_in {layer.n_in}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite input to kan_forward")
    basis = bspline_basis(batch, layer.grid)  # (N, n_in, nb)
    scaled = layer.spline_scale[:, :, None] * layer.spline_coeffs  # (n_out, n_in, nb)
    y = silu(batch) @ layer.base_weight.T + np.einsum(
        "npj,qpj->nq", basis, scaled, optimize=False
    )
    return y[0] if squeeze else y


@dataclass
class KanLayerGrads:
    """Gradients from :func:`kan_backward`, shaped like their parameters."""

    x: np.ndarray
    base_weight: np.ndarray
    spline_scale: np.ndarray
    spline_coeffs: np.ndarray


def kan_backward(layer: KanLayer, x, upstream) -> KanLayerGrads:
    """Analytic gradients of ``sum(upstream * kan_forward(layer, x))``.

    Uses the B-spline derivative recursion and silu' for the input gradient;
    the coefficient gradient is linear: upstream[q] * scale[q, p] * B_j(x[p]).
    """
    batch, squeeze = _as_batch(x)
    up, up_squeeze = _as_batch(upstream)
    if up.shape != (batch.shape[0], layer.n_out):
        raise ValueError(
            f"upstream shape {np.shape(upstream)} incompatible with "
            f"({batch.shape[0]}, {layer.n_out})"
        )
    basis, dbasis = bspline_basis_and_deriv(batch, layer.grid)
    sil = silu(batch)
    dsil = silu_grad(batch)
    # Per-edge spline value and its x-derivative: (N, n_out, n_in)
    edge = np.einsum("qpj,npj->nqp", layer.spline_coeffs, basis, optimize=False)
    edge_dx = np.einsum("qpj,npj->nqp", layer.spline_coeffs, dbasis, optimize=False)
    d_base = np.einsum("nq,np->qp", up, sil, optimize=False)
    d_scale = np.einsum("nq,nqp->qp", up, edge, optimize=False)
    d_coeffs = np.einsum(
        "nq,qp,npj->qpj", up, layer.spline_scale, basis, optimize=False
    )
    dx = (up @ layer.base_weight) * dsil + np.einsum(
        "nq,qp,nqp->np", up, layer.spline_scale, edge_dx, optimize=False
    )
    return KanLayerGrads(
        x=dx[0] if squeeze else dx,
        base_weight=d_base,
        spline_scale=d_scale,
        spline_coeffs=d_coeffs,
    )


@dataclass
class KanStack:
    """Left-to-right composition of KAN layers with matching widths."""

    layers: list[KanLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(
                    f"layer widths do not chain: {a.n_out} -> {b.n_in}"
                )


def stack_forward(stack: KanStack, x) -> np.ndarray:
    out = x
    for layer in stack.layers:
        out = kan_forward(layer, out)
    return out


def stack_backward(stack: KanStack, x, upstream) -> tuple[np.ndarray, list[KanLayerGrads]]:
    """Gradients through the whole stack; recomputes the forward internally."""
    inputs = [x]
    for layer in stack.layers:
        inputs.append(kan_forward(layer, inputs[-1]))
    grads: list[KanLayerGrads] = [None] * len(stack.layers)  # type: ignore[list-item]
    d_out = upstream
    for i in range(len(stack.layers) - 1, -1, -1):
        grads[i] = kan_backward(stack.layers[i], inputs[i], d_out)
        d_out = grads[i].x
    return d_out, grads
