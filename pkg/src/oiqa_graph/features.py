"""Multi-stage viewport features and the Feature Context Synthesizer (FCS).

The backbone is pluggable: anything that maps a (V, 3, S, S) viewport stack
to four stage maps with spatial sizes S/8, S/16, S/32, S/32 satisfies the
contract.  :func:`backbone_forward` is a small trainable strided CNN that
stands in for a hierarchical vision transformer; :class:`ExternalFeatures`
feeds precomputed maps from ``OIQF`` files instead.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, ParameterError

# (kernel, stride, padding) per stage; cumulative strides 8, 16, 32, 32
STAGE_LAYOUT = ((8, 8, 0), (2, 2, 0), (2, 2, 0), (3, 1, 1))
OIQF_MAGIC = b"OIQF"
OIQF_VERSION = 1


class StageMapProvider(Protocol):
    def __call__(self, viewports, params) -> list: ...


def stage_shapes(size: int, channels: Sequence[int]) -> list[tuple[int, int, int]]:
    if size % 32:
        raise ConfigError(f"viewport size must be divisible by 32, got {size}")
    return [(c, size // r, size // r) for c, r in zip(channels, (8, 16, 32, 32))]


def backbone_forward(viewports, params, prefix="backbone."):
    """Four GELU conv stages over a (N, 3, S, S) stack; returns [F0, F1, F2, F3]."""
    x = ad.as_tensor(viewports)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ConfigError(f"backbone expects (N, 3, S, S) input, got {x.shape}")
    if x.shape[2] % 32 or x.shape[3] % 32:
        raise ConfigError(f"viewport size must be divisible by 32, got {x.shape[2]}x{x.shape[3]}")
    maps = []
    for i, (k, s, p) in enumerate(STAGE_LAYOUT):
        x = ad.gelu(ad.conv2d(x, params[f"{prefix}stage{i}.weight"], params[f"{prefix}stage{i}.bias"], s, p))
        maps.append(x)
    return maps


def channel_attention(y, params, prefix):
    """Squeeze-excitation gate: GAP -> FC -> ReLU -> FC -> sigmoid, shape (N, C)."""
    pooled = ad.mean(y, axis=(2, 3))
    hidden = ad.relu(ad.linear(pooled, params[prefix + "fc1.weight"], params[prefix + "fc1.bias"]))
    return ad.sigmoid(ad.linear(hidden, params[prefix + "fc2.weight"], params[prefix + "fc2.bias"]))


def spatial_attention(y, params, prefix):
    """Channel mean/max maps -> k x k conv -> sigmoid, shape (N, 1, H, W)."""
    pooled = ad.concat([ad.mean(y, axis=1, keepdims=True), ad.max(y, axis=1)], axis=1)
    k = params[prefix + "weight"].shape[-1]
    return ad.sigmoid(ad.conv2d(pooled, params[prefix + "weight"], params[prefix + "bias"], 1, k // 2))


def fcs_stage(fmap, params, prefix, gates=True, return_gates=False):
    """1x1 projection, channel then spatial attention, global average pool -> (N, C)."""
    w = params[prefix + "proj.weight"]
    if fmap.shape[1] != w.shape[1]:
        raise ParameterError(
            f"{prefix}proj expects {w.shape[1]} input channels, stage map has {fmap.shape[1]}"
        )
    y = ad.conv2d(fmap, w, params[prefix + "proj.bias"])
    ca = sa = None
    if gates:
        ca = channel_attention(y, params, prefix + "ca.")
        y = ad.mul(y, ad.reshape(ca, ca.shape + (1, 1)))
        sa = spatial_attention(y, params, prefix + "sa.")
        y = ad.mul(y, sa)
    pooled = ad.mean(y, axis=(2, 3))
    if return_gates:
        return pooled, ca, sa
    return pooled


def fcs_fuse(maps, params, prefix="fcs.", gates=True):
    """Fuse four stage maps into (N, 4C) node embeddings."""
    if len(maps) != 4:
        raise ParameterError(f"expected 4 stage maps, got {len(maps)}")
    return ad.concat(
        [fcs_stage(ad.as_tensor(m), params, f"{prefix}{i}.", gates) for i, m in enumerate(maps)], axis=1
    )


def init_backbone(rng, channels, out):
    cin = 3
    for i, ((k, _, _), c) in enumerate(zip(STAGE_LAYOUT, channels)):
        out[f"backbone.stage{i}.weight"] = xavier(rng, (c, cin, k, k), cin * k * k, c * k * k)
        out[f"backbone.stage{i}.bias"] = np.zeros(c)
        cin = c
    return out


def init_fcs(rng, channels, dim, reduction=4, sa_kernel=7, out=None):
    out = {} if out is None else out
    hidden = max(1, dim // reduction)
    for i, c in enumerate(channels):
        p = f"fcs.{i}."
        out[p + "proj.weight"] = xavier(rng, (dim, c, 1, 1), c, dim)
        out[p + "proj.bias"] = np.zeros(dim)
        out[p + "ca.fc1.weight"] = xavier(rng, (dim, hidden), dim, hidden)
        out[p + "ca.fc1.bias"] = np.zeros(hidden)
        out[p + "ca.fc2.weight"] = xavier(rng, (hidden, dim), hidden, dim)
        out[p + "ca.fc2.bias"] = np.zeros(dim)
        out[p + "sa.weight"] = xavier(rng, (1, 2, sa_kernel, sa_kernel), 2 * sa_kernel**2, sa_kernel**2)
        out[p + "sa.bias"] = np.zeros(1)
    return out


def xavier(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


# external features


def write_stage_maps(path, maps) -> None:
    """Write one viewport's four (C, h, w) maps as an OIQF file."""
    maps = [np.asarray(m, dtype="<f4") for m in maps]
    if len(maps) != 4 or any(m.ndim != 3 for m in maps):
        raise FormatError("OIQF needs exactly four (C, h, w) maps")
    header = OIQF_MAGIC + struct.pack("<I", OIQF_VERSION)
    for m in maps:
        header += struct.pack("<III", *m.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        for m in maps:
            fh.write(np.ascontiguousarray(m).tobytes())


def read_stage_maps(path) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 56 or data[:4] != OIQF_MAGIC:
        raise FormatError(f"{path}: not an OIQF feature file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != OIQF_VERSION:
        raise FormatError(f"{path}: unsupported OIQF version {version}")
    dims = [struct.unpack_from("<III", data, 8 + 12 * i) for i in range(4)]
    offset = 56
    maps = []
    for c, h, w in dims:
        n = c * h * w
        end = offset + 4 * n
        if end > len(data):
            raise FormatError(f"{path}: truncated OIQF payload")
        maps.append(np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(c, h, w).astype(np.float64))
        offset = end
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes after OIQF payload")
    return maps


class ExternalFeatures:
    """Stage-map provider backed by one OIQF file per viewport."""

    def __init__(self, paths):
        self.paths = [Path(p) for p in paths]

    def load(self) -> list[np.ndarray]:
        per_vp = [read_stage_maps(p) for p in self.paths]
        return [np.stack([vp[i] for vp in per_vp]) for i in range(4)]

    def __call__(self, viewports=None, params=None):
        return [ad.Tensor(m) for m in self.load()]
