"""Sinusoidal encoding of viewport centres on the unit sphere."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError


def frequencies(n: int) -> np.ndarray:
    """Inverse wavelengths 10000^(-i/(n-1)), i = 0..n-1."""
    return 10000.0 ** (-np.arange(n, dtype=np.float64) / (n - 1))


def encode_position(xyz, n: int) -> np.ndarray:
    """6n-dimensional code: x, y, z blocks, each interleaved (sin_0, cos_0, sin_1, ...)."""
    if n < 2:
        raise DomainError(f"need at least 2 frequencies per axis, got {n}")
    v = np.asarray(xyz, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise DomainError(f"position must be a unit vector, |xyz| = {np.linalg.norm(v)!r}")
    return _encode(v[None, :], n)[0]


def encode_positions(xyz, n: int) -> np.ndarray:
    """Vectorised :func:`encode_position` over a (V, 3) array."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    if n < 2:
        raise DomainError(f"need at least 2 frequencies per axis, got {n}")
    if np.any(np.abs(np.linalg.norm(xyz, axis=1) - 1.0) > 1e-9):
        raise DomainError("positions must be unit vectors")
    return _encode(xyz, n)


def _encode(xyz, n):
    arg = xyz[:, :, None] * frequencies(n)[None, None, :]
    out = np.empty(arg.shape + (2,))
    out[..., 0] = np.sin(arg)
    out[..., 1] = np.cos(arg)
    return out.reshape(xyz.shape[0], 6 * n)


def add_position(h, p):
    h = np.asarray(h, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if h.shape[-1] != p.shape[-1]:
        raise ConfigError(f"position code has dimension {p.shape[-1]}, embedding has {h.shape[-1]}")
    return h + p
