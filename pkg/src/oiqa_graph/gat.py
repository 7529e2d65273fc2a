"""Multi-head graph attention layers with residual + LayerNorm + ReLU."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ParameterError, StructuralError
from .features import xavier

LEAKY_SLOPE = 0.2
LN_EPS = 1e-5


def _graph_mask(graph, V):
    if graph.num_nodes != V:
        raise StructuralError(f"feature matrix has {V} rows but graph has {graph.num_nodes} nodes")
    if len(set(graph.edges)) != len(graph.edges):
        raise StructuralError("graph edge list contains duplicates")
    mask = graph.in_mask()
    if not mask.any(axis=1).all():
        raise StructuralError("some node has no incoming edge")
    return mask


def gat_attention(X, graph, params, heads, prefix="", return_attention=False):
    """One GATConv: per-head masked softmax over in-neighbours, heads concatenated.

    ``params[prefix + "weight"]`` is (C, C); ``params[prefix + "att"]`` is
    (heads, 2d) where the first d entries score the receiving node and the
    last d the sending node.
    """
    X = ad.as_tensor(X)
    V, C = X.shape
    W, att = params[prefix + "weight"], params[prefix + "att"]
    if C % heads or W.shape != (C, C) or att.shape != (heads, 2 * (C // heads)):
        raise ParameterError(f"GAT parameters do not fit C={C}, heads={heads}")
    d = C // heads
    mask = _graph_mask(graph, V)

    wh = ad.transpose(ad.reshape(ad.matmul(X, W), (V, heads, d)), (1, 0, 2))  # H, V, d
    a_dst = ad.reshape(att[:, :d], (heads, 1, d))
    a_src = ad.reshape(att[:, d:], (heads, 1, d))
    s_dst = ad.sum(ad.mul(wh, a_dst), axis=-1, keepdims=True)  # H, V, 1
    s_src = ad.swap_last(ad.sum(ad.mul(wh, a_src), axis=-1, keepdims=True))  # H, 1, V
    logits = ad.masked_fill(ad.leaky_relu(ad.add(s_dst, s_src), LEAKY_SLOPE), ~mask, -np.inf)
    alpha = ad.softmax(logits, axis=-1)
    out = ad.reshape(ad.transpose(ad.matmul(alpha, wh), (1, 0, 2)), (V, C))
    if return_attention:
        return out, alpha.data
    return out


def gat_layer(X, graph, params, heads, prefix=""):
    """ReLU(LayerNorm(GATConv(X)) + X)."""
    X = ad.as_tensor(X)
    H = gat_attention(X, graph, params, heads, prefix)
    return ad.relu(ad.add(ad.layer_norm(H, params[prefix + "ln.weight"], params[prefix + "ln.bias"], LN_EPS), X))


def gat_forward(X, graph, params, heads, layers=3, prefix="gat."):
    for l in range(layers):
        X = gat_layer(X, graph, params, heads, f"{prefix}{l}.")
    return X


def init_gat(rng, dim, heads, layers=3, prefix="gat.", out=None):
    out = {} if out is None else out
    d = dim // heads
    for l in range(layers):
        p = f"{prefix}{l}."
        out[p + "weight"] = xavier(rng, (dim, dim), dim, dim)
        out[p + "att"] = xavier(rng, (heads, 2 * d), 2 * d, 1)
        out[p + "ln.weight"] = np.ones(dim)
        out[p + "ln.bias"] = np.zeros(dim)
    return out
