"""Fully connected graph transformer with distance and adjacency attention biases."""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import autodiff as ad
from .errors import ParameterError
from .features import xavier

BIAS_EPS = 1e-8
LN_EPS = 1e-5


def distance_bias(D, eps: float = BIAS_EPS) -> np.ndarray:
    """1 - (D - min D) / (max D - min D + eps), extrema over all entries."""
    D = np.asarray(D, dtype=np.float64)
    lo, hi = D.min(), D.max()
    return 1.0 - (D - lo) / (hi - lo + eps)


def neighbor_mask(neighbor_lists, V) -> np.ndarray:
    m = np.zeros((V, V), dtype=bool)
    for i, nb in enumerate(neighbor_lists):
        m[i, list(nb)] = True
    return m


def adjacency_bias(X, neighbor_lists):
    """(cos(h_i, h_j) + 1) / 2 on the k-NN relation, 0 elsewhere.

    Differentiable in X.  Rows with zero norm get similarity 0.
    """
    X = ad.as_tensor(X)
    V = X.shape[0]
    mask = neighbor_mask(neighbor_lists, V)
    norms = np.sqrt((X.data * X.data).sum(axis=1))
    zero = norms == 0.0
    if zero.any():
        warnings.warn(f"adjacency bias: zero-norm feature rows {np.flatnonzero(zero).tolist()}", stacklevel=2)
        mask = mask & ~zero[:, None] & ~zero[None, :]
    norm = ad.sqrt(ad.sum(ad.mul(X, X), axis=1, keepdims=True))
    norm = ad.add(norm, zero[:, None].astype(np.float64))  # zero rows divide by 1
    unit = ad.div(X, norm)
    cos = ad.matmul(unit, ad.swap_last(unit))
    return ad.mul(ad.mul(ad.add(cos, 1.0), 0.5), mask.astype(np.float64))


def _split_heads(t, V, heads, d):
    return ad.transpose(ad.reshape(t, (V, heads, d)), (1, 0, 2))


def biased_attention(X, B_dist, B_adj, params, heads, prefix="", return_attention=False):
    """softmax(QK^T/sqrt(d) + B_dist + B_adj) V per head, concatenated, output-projected."""
    X = ad.as_tensor(X)
    V, C = X.shape
    if C % heads:
        raise ParameterError(f"dimension {C} not divisible by {heads} heads")
    for name in ("q", "k", "v", "out"):
        w = params[f"{prefix}{name}.weight"]
        if w.shape != (C, C):
            raise ParameterError(f"{prefix}{name}.weight has shape {w.shape}, expected {(C, C)}")
    d = C // heads
    q = _split_heads(ad.linear(X, params[prefix + "q.weight"], params[prefix + "q.bias"]), V, heads, d)
    k = _split_heads(ad.linear(X, params[prefix + "k.weight"], params[prefix + "k.bias"]), V, heads, d)
    v = _split_heads(ad.linear(X, params[prefix + "v.weight"], params[prefix + "v.bias"]), V, heads, d)
    bias = ad.add(B_dist, B_adj)
    if bias.shape != (V, V):
        raise ParameterError(f"bias matrices must be {V}x{V}, got {bias.shape}")
    logits = ad.add(ad.mul(ad.matmul(q, ad.swap_last(k)), 1.0 / math.sqrt(d)), bias)
    attn = ad.softmax(logits, axis=-1)
    z = ad.reshape(ad.transpose(ad.matmul(attn, v), (1, 0, 2)), (V, C))
    out = ad.linear(z, params[prefix + "out.weight"], params[prefix + "out.bias"])
    if return_attention:
        return out, attn.data
    return out


def feed_forward(X, params, prefix):
    h = ad.gelu(ad.linear(X, params[prefix + "fc1.weight"], params[prefix + "fc1.bias"]))
    return ad.linear(h, params[prefix + "fc2.weight"], params[prefix + "fc2.bias"])


def encoder_layer(X, B_dist, B_adj, params, heads, prefix=""):
    """Pre-norm block: X' = X + Attn(LN1 X); X_out = X' + FFN(LN2 X')."""
    X = ad.as_tensor(X)
    h = ad.layer_norm(X, params[prefix + "ln1.weight"], params[prefix + "ln1.bias"], LN_EPS)
    X = ad.add(X, biased_attention(h, B_dist, B_adj, params, heads, prefix + "attn."))
    h = ad.layer_norm(X, params[prefix + "ln2.weight"], params[prefix + "ln2.bias"], LN_EPS)
    return ad.add(X, feed_forward(h, params, prefix + "ffn."))


def graphormer_forward(X, D, neighbor_lists, params, heads, layers=2, prefix="transformer."):
    """Biases are built once from the input features and shared by all layers."""
    X = ad.as_tensor(X)
    B_dist = distance_bias(D)
    B_adj = adjacency_bias(X, neighbor_lists)
    for l in range(layers):
        X = encoder_layer(X, B_dist, B_adj, params, heads, f"{prefix}{l}.")
    return X


def init_transformer(rng, dim, layers=2, expansion=4, prefix="transformer.", out=None):
    out = {} if out is None else out
    for l in range(layers):
        p = f"{prefix}{l}."
        for ln in ("ln1", "ln2"):
            out[f"{p}{ln}.weight"] = np.ones(dim)
            out[f"{p}{ln}.bias"] = np.zeros(dim)
        for name in ("q", "k", "v", "out"):
            out[f"{p}attn.{name}.weight"] = xavier(rng, (dim, dim), dim, dim)
            out[f"{p}attn.{name}.bias"] = np.zeros(dim)
        hidden = expansion * dim
        out[p + "ffn.fc1.weight"] = xavier(rng, (dim, hidden), dim, hidden)
        out[p + "ffn.fc1.bias"] = np.zeros(hidden)
        out[p + "ffn.fc2.weight"] = xavier(rng, (hidden, dim), hidden, dim)
        out[p + "ffn.fc2.bias"] = np.zeros(dim)
    return out
