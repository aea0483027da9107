"""Linear-attention transformer encoder over token id sequences.

Each block is pre-norm residual: layernorm, multi-head linear attention
with rotary position encoding, residual add, layernorm, a two-layer GELU
feed-forward, residual add.  The attention kernel uses the strictly
positive feature map fmap(u) = elu(u) + 1, so for query position m

    out_m = sum_n <fmap(R_m q_m), fmap(R_n k_n)> v_n
          / sum_n <fmap(R_m q_m), fmap(R_n k_n)>

which factorizes through the accumulated key-value and key sums and costs
O(L d^2) instead of O(L^2 d).  Rotating queries and keys by their positions
makes the kernel score depend only on the relative offset m - n.

Masked (padding) positions are excluded from both attention sums and zeroed
in the output, so results are invariant to how much padding a batch adds.

The module also supports a frozen-embedding mode: per-molecule token
embedding matrices exported by an external tool are loaded from a CEMB file
(see :mod:`elyte.cemb`) and keyed by exact SMILES text, bypassing the local
encoder entirely.

All forward/backward functions are pure in (params, input).  Training-time
parameter mutation must be serialized by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import cemb
from .tokenizer import PAD_ID, TokenSequence

LAYERNORM_EPS = 1e-5
ROTARY_BASE = 10000.0


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 768
    num_heads: int = 12
    num_layers: int = 12
    ffn_mult: int = 4
    max_len: int = 202
    feature_map: str = "elu_plus_one"

    def __post_init__(self):
        if self.embed_dim <= 0 or self.num_heads <= 0 or self.num_layers <= 0:
            raise ValueError("embed_dim, num_heads and num_layers must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")
        if (self.embed_dim // self.num_heads) % 2 != 0:
            raise ValueError("head dimension must be even for rotary pairs")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.ffn_mult < 1:
            raise ValueError("ffn_mult must be >= 1")
        if self.feature_map != "elu_plus_one":
            raise ValueError(f"unknown feature map {self.feature_map!r}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


@dataclass
class TokenEmbeddings:
    """Per-molecule token embedding matrix with a per-row validity mask."""

    values: np.ndarray  # (L, H)
    valid_mask: np.ndarray  # (L,) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if self.valid_mask.shape != (self.values.shape[0],):
            raise ValueError("valid_mask length must equal the row count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite embedding values")


# ---------------------------------------------------------------------------
# Rotary position encoding
# ---------------------------------------------------------------------------

def _rotary_angles(positions: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (len(positions), dim // 2)."""
    pair = np.arange(dim // 2, dtype=np.float64)
    freqs = ROTARY_BASE ** (-2.0 * pair / dim)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * freqs[None, :]
    return np.cos(angles), np.sin(angles)


def rotary_rotate(x, position: int) -> np.ndarray:
    """Rotate consecutive pairs (x_2j, x_2j+1) by position * base^(-2j/d).

    Norm-preserving; position 0 is the identity.  The pairwise dot product
    of a rotated query and key depends only on their position difference.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2 != 0:
        raise ValueError("rotary dimension must be even")
    cos, sin = _rotary_angles(np.array([position]), x.shape[-1])
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos[0] - odd * sin[0]
    out[..., 1::2] = even * sin[0] + odd * cos[0]
    return out


def _rotary_apply(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate the last axis of x (..., L, d) with per-position tables."""
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def _rotary_apply_inverse(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Inverse rotation (the transpose of the block-diagonal rotation)."""
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos + odd * sin
    out[..., 1::2] = -even * sin + odd * cos
    return out


# ---------------------------------------------------------------------------
# Feature map
# ---------------------------------------------------------------------------

def elu_plus_one(u: np.ndarray) -> np.ndarray:
    """elu(u) + 1: strictly positive, smooth, identity slope for u > 0."""
    return np.where(u > 0.0, u + 1.0, np.exp(np.minimum(u, 0.0)))


def elu_plus_one_grad(u: np.ndarray) -> np.ndarray:
    return np.where(u > 0.0, 1.0, np.exp(np.minimum(u, 0.0)))


# ---------------------------------------------------------------------------
# Single-head attention (reference ops; the encoder uses the batched variant)
# ---------------------------------------------------------------------------

@dataclass
class AttentionInputs:
    """One head's query/key/value rows plus their integer positions."""

    queries: np.ndarray  # (L, d)
    keys: np.ndarray  # (L, d)
    values: np.ndarray  # (L, d)
    positions: np.ndarray | None = None

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.float64)
        self.keys = np.asarray(self.keys, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.queries.shape != self.keys.shape or self.keys.shape != self.values.shape:
            raise ValueError("queries, keys and values must share one shape")
        if self.positions is None:
            self.positions = np.arange(self.queries.shape[0])
        self.positions = np.asarray(self.positions)


def _featurized(inp: AttentionInputs) -> tuple[np.ndarray, np.ndarray]:
    cos, sin = _rotary_angles(inp.positions, inp.queries.shape[-1])
    a = elu_plus_one(_rotary_apply(inp.queries, cos, sin))
    b = elu_plus_one(_rotary_apply(inp.keys, cos, sin))
    return a, b


def _as_mask(mask, length: int) -> np.ndarray:
    if mask is None:
        return np.ones(length, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (length,):
        raise ValueError(f"mask shape {mask.shape} != ({length},)")
    return mask


def linear_attention(inp: AttentionInputs, mask=None) -> np.ndarray:
    """Normalized feature-map attention in O(L d^2) via accumulated sums."""
    mask = _as_mask(mask, inp.queries.shape[0])
    if not mask.any():
        raise ValueError("attention needs at least one valid key")
    a, b = _featurized(inp)
    b = b * mask[:, None]
    v = inp.values * mask[:, None]
    kv_sum = b.T @ v  # (d, d)
    k_sum = b.sum(axis=0)  # (d,)
    denom = a @ k_sum
    assert np.all(denom[mask] > 0.0), "positive feature map guarantees a positive denominator"
    out = (a @ kv_sum) / denom[:, None]
    return out * mask[:, None]


def attention_bruteforce(inp: AttentionInputs, mask=None) -> np.ndarray:
    """Same attention by materializing the full L x L kernel (test oracle)."""
    mask = _as_mask(mask, inp.queries.shape[0])
    if not mask.any():
        raise ValueError("attention needs at least one valid key")
    a, b = _featurized(inp)
    kernel = (a @ b.T) * mask[None, :]  # zero scores against masked keys
    out = (kernel @ inp.values) / kernel.sum(axis=1, keepdims=True)
    return out * mask[:, None]


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def init_encoder_params(
    cfg: EncoderConfig, vocab_size: int, seed: int
) -> dict[str, np.ndarray]:
    """Deterministic parameter dictionary.

    Weight matrices are stored (fan_in, fan_out) and drawn from
    N(0, 1/fan_in); the token embedding table uses N(0, 1/embed_dim).
    Biases start at zero, layernorm gains at one.
    """
    rng = np.random.default_rng(seed)
    h = cfg.embed_dim
    params: dict[str, np.ndarray] = {
        "embed": rng.normal(0.0, 1.0 / np.sqrt(h), size=(vocab_size, h))
    }

    def dense(name: str, fan_in: int, fan_out: int) -> None:
        params[f"{name}.w"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)

    for i in range(cfg.num_layers):
        prefix = f"layers.{i}"
        params[f"{prefix}.ln1.gain"] = np.ones(h)
        params[f"{prefix}.ln1.bias"] = np.zeros(h)
        dense(f"{prefix}.attn.q", h, h)
        dense(f"{prefix}.attn.k", h, h)
        dense(f"{prefix}.attn.v", h, h)
        dense(f"{prefix}.attn.o", h, h)
        params[f"{prefix}.ln2.gain"] = np.ones(h)
        params[f"{prefix}.ln2.bias"] = np.zeros(h)
        dense(f"{prefix}.ffn.1", h, cfg.ffn_mult * h)
        dense(f"{prefix}.ffn.2", cfg.ffn_mult * h, h)
    return params


# ---------------------------------------------------------------------------
# Layer pieces (forward + backward, cache-passing style)
# ---------------------------------------------------------------------------

def _layernorm_forward(x, gain, bias):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat = centered * inv_std
    return xhat * gain + bias, (xhat, inv_std, gain)


def _layernorm_backward(d_out, cache):
    xhat, inv_std, gain = cache
    width = d_out.shape[-1]
    d_gain = np.einsum(
        "bh,bh->h", d_out.reshape(-1, width), xhat.reshape(-1, width), optimize=False
    )
    d_bias = d_out.reshape(-1, width).sum(axis=0)
    d_xhat = d_out * gain
    mean_d = d_xhat.mean(axis=-1, keepdims=True)
    mean_dx = (d_xhat * xhat).mean(axis=-1, keepdims=True)
    d_x = inv_std * (d_xhat - mean_d - xhat * mean_dx)
    return d_x, d_gain, d_bias


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, l, h = x.shape
    return x.reshape(b, l, num_heads, h // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, nh, l, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, nh * d)


def _attention_forward(x, mask, p, prefix, cfg):
    """Multi-head masked linear attention on (B, L, H); returns (out, cache)."""
    q = x @ p[f"{prefix}.q.w"] + p[f"{prefix}.q.b"]
    k = x @ p[f"{prefix}.k.w"] + p[f"{prefix}.k.b"]
    v = x @ p[f"{prefix}.v.w"] + p[f"{prefix}.v.b"]
    qh, kh, vh = (_split_heads(t, cfg.num_heads) for t in (q, k, v))
    cos, sin = _rotary_angles(np.arange(x.shape[1]), cfg.head_dim)
    q_rot = _rotary_apply(qh, cos, sin)
    k_rot = _rotary_apply(kh, cos, sin)
    a = elu_plus_one(q_rot)
    b = elu_plus_one(k_rot)
    m = mask[:, None, :, None]  # (B, 1, L, 1)
    bm = b * m
    vm = vh * m
    kv_sum = np.einsum("bhld,bhle->bhde", bm, vm, optimize=False)
    k_sum = bm.sum(axis=2)  # (B, nh, d)
    numer = np.einsum("bhld,bhde->bhle", a, kv_sum, optimize=False)
    denom = np.einsum("bhld,bhd->bhl", a, k_sum, optimize=False)
    assert np.all(denom[np.broadcast_to(mask[:, None, :], denom.shape)] > 0.0)
    heads = (numer / denom[..., None]) * m
    merged = _merge_heads(heads)
    out = merged @ p[f"{prefix}.o.w"] + p[f"{prefix}.o.b"]
    cache = (x, mask, q_rot, k_rot, a, bm, vm, kv_sum, k_sum, denom, heads, merged, cos, sin)
    return out, cache


def _attention_backward(d_out, cache, p, prefix, cfg, grads):
    x, mask, q_rot, k_rot, a, bm, vm, kv_sum, k_sum, denom, heads, merged, cos, sin = cache
    m = mask[:, None, :, None]
    grads[f"{prefix}.o.w"] = np.einsum("blh,blo->ho", merged, d_out, optimize=False)
    grads[f"{prefix}.o.b"] = d_out.reshape(-1, d_out.shape[-1]).sum(axis=0)
    d_heads = _split_heads(d_out @ p[f"{prefix}.o.w"].T, cfg.num_heads) * m
    d_numer = d_heads / denom[..., None]
    d_denom = -np.einsum("bhld,bhld->bhl", d_heads, heads, optimize=False) / denom
    d_a = (
        np.einsum("bhle,bhde->bhld", d_numer, kv_sum, optimize=False)
        + d_denom[..., None] * k_sum[:, :, None, :]
    )
    d_kv_sum = np.einsum("bhld,bhle->bhde", a, d_numer, optimize=False)
    d_k_sum = np.einsum("bhl,bhld->bhd", d_denom, a, optimize=False)
    d_bm = np.einsum("bhle,bhde->bhld", vm, d_kv_sum, optimize=False) + d_k_sum[:, :, None, :]
    d_vm = np.einsum("bhld,bhde->bhle", bm, d_kv_sum, optimize=False)
    d_b = d_bm * m
    d_vh = d_vm * m
    d_q_rot = d_a * elu_plus_one_grad(q_rot)
    d_k_rot = d_b * elu_plus_one_grad(k_rot)
    d_qh = _rotary_apply_inverse(d_q_rot, cos, sin)
    d_kh = _rotary_apply_inverse(d_k_rot, cos, sin)
    d_q = _merge_heads(d_qh)
    d_k = _merge_heads(d_kh)
    d_v = _merge_heads(d_vh)
    d_x = np.zeros_like(x)
    for name, d_t in (("q", d_q), ("k", d_k), ("v", d_v)):
        grads[f"{prefix}.{name}.w"] = np.einsum("blh,blo->ho", x, d_t, optimize=False)
        grads[f"{prefix}.{name}.b"] = d_t.reshape(-1, d_t.shape[-1]).sum(axis=0)
        d_x += d_t @ p[f"{prefix}.{name}.w"].T
    return d_x


def _ffn_forward(x, p, prefix):
    pre = x @ p[f"{prefix}.1.w"] + p[f"{prefix}.1.b"]
    hidden = _gelu(pre)
    out = hidden @ p[f"{prefix}.2.w"] + p[f"{prefix}.2.b"]
    return out, (x, pre, hidden)


def _ffn_backward(d_out, cache, p, prefix, grads):
    x, pre, hidden = cache
    grads[f"{prefix}.2.w"] = np.einsum("blh,blo->ho", hidden, d_out, optimize=False)
    grads[f"{prefix}.2.b"] = d_out.reshape(-1, d_out.shape[-1]).sum(axis=0)
    d_hidden = d_out @ p[f"{prefix}.2.w"].T
    d_pre = d_hidden * _gelu_grad(pre)
    grads[f"{prefix}.1.w"] = np.einsum("blh,blo->ho", x, d_pre, optimize=False)
    grads[f"{prefix}.1.b"] = d_pre.reshape(-1, d_pre.shape[-1]).sum(axis=0)
    return d_pre @ p[f"{prefix}.1.w"].T


# ---------------------------------------------------------------------------
# Full encoder
# ---------------------------------------------------------------------------

def encoder_forward(
    params: dict[str, np.ndarray],
    cfg: EncoderConfig,
    ids: np.ndarray,
    mask: np.ndarray,
    with_cache: bool = False,
):
    """Hidden states (B, L, H) for a padded id batch; padding rows zeroed.

    ``ids`` must all be valid rows of the embedding table; ``mask`` marks
    real tokens.  With ``with_cache`` the returned cache feeds
    :func:`encoder_backward`.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise ValueError("ids and mask must be matching (B, L) arrays")
    if ids.shape[1] > cfg.max_len:
        raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= params["embed"].shape[0]:
        raise ValueError("token id out of range for the embedding table")
    h = params["embed"][ids]
    layer_caches = []
    for i in range(cfg.num_layers):
        prefix = f"layers.{i}"
        normed1, ln1_cache = _layernorm_forward(
            h, params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"]
        )
        attn_out, attn_cache = _attention_forward(
            normed1, mask, params, f"{prefix}.attn", cfg
        )
        h = h + attn_out
        normed2, ln2_cache = _layernorm_forward(
            h, params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"]
        )
        ffn_out, ffn_cache = _ffn_forward(normed2, params, f"{prefix}.ffn")
        h = h + ffn_out
        if with_cache:
            layer_caches.append((ln1_cache, attn_cache, ln2_cache, ffn_cache))
    out = h * mask[:, :, None]
    if not with_cache:
        return out
    return out, (ids, mask, layer_caches)


def encoder_backward(
    params: dict[str, np.ndarray],
    cfg: EncoderConfig,
    cache,
    d_out: np.ndarray,
) -> dict[str, np.ndarray]:
    """Parameter gradients for :func:`encoder_forward` outputs."""
    ids, mask, layer_caches = cache
    grads: dict[str, np.ndarray] = {}
    d_h = d_out * mask[:, :, None]
    for i in range(cfg.num_layers - 1, -1, -1):
        prefix = f"layers.{i}"
        ln1_cache, attn_cache, ln2_cache, ffn_cache = layer_caches[i]
        d_ffn_out = d_h
        d_normed2 = _ffn_backward(d_ffn_out, ffn_cache, params, f"{prefix}.ffn", grads)
        d_res2, d_gain2, d_bias2 = _layernorm_backward(d_normed2, ln2_cache)
        grads[f"{prefix}.ln2.gain"] = d_gain2
        grads[f"{prefix}.ln2.bias"] = d_bias2
        d_h = d_h + d_res2
        d_attn_out = d_h
        d_normed1 = _attention_backward(
            d_attn_out, attn_cache, params, f"{prefix}.attn", cfg, grads
        )
        d_res1, d_gain1, d_bias1 = _layernorm_backward(d_normed1, ln1_cache)
        grads[f"{prefix}.ln1.gain"] = d_gain1
        grads[f"{prefix}.ln1.bias"] = d_bias1
        d_h = d_h + d_res1
    d_embed = np.zeros_like(params["embed"])
    np.add.at(d_embed, ids, d_h)
    grads["embed"] = d_embed
    return grads


def pad_sequences(seqs: list[TokenSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences with ``<pad>`` into (B, L) ids plus a mask."""
    if not seqs:
        raise ValueError("empty batch")
    longest = max(len(s) for s in seqs)
    ids = np.full((len(seqs), longest), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), longest), dtype=bool)
    for row, seq in enumerate(seqs):
        ids[row, : len(seq)] = seq.ids
        mask[row, : len(seq)] = True
    return ids, mask


def encode(
    seqs: list[TokenSequence], cfg: EncoderConfig, params: dict[str, np.ndarray]
) -> list[TokenEmbeddings]:
    """Encode a batch of sequences into per-molecule token embeddings.

    The result for each molecule is independent of what else shares its
    batch and of the amount of padding, because masked positions never
    enter the attention sums.
    """
    ids, mask = pad_sequences(seqs)
    hidden = encoder_forward(params, cfg, ids, mask)
    return [
        TokenEmbeddings(hidden[row, : len(seq)].copy(), np.ones(len(seq), dtype=bool))
        for row, seq in enumerate(seqs)
    ]


def load_pretrained_embeddings(path) -> dict[str, TokenEmbeddings]:
    """Load a CEMB file as a SMILES-keyed map of token embeddings."""
    _width, records = cemb.read_embeddings(path)
    return {
        smiles: TokenEmbeddings(
            matrix.astype(np.float64), np.ones(matrix.shape[0], dtype=bool)
        )
        for smiles, matrix in records.items()
    }
