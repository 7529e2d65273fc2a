"""Pure-numpy versions of the compiled kernels (same arithmetic order)."""

import numpy as np


def haversine_matrix(lat, lon):
    lat = np.ascontiguousarray(lat, dtype=np.float64)
    lon = np.ascontiguousarray(lon, dtype=np.float64)
    n = lat.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    i, j = np.triu_indices(n, k=1)
    sdp = np.sin((lat[j] - lat[i]) / 2.0)
    sdl = np.sin((lon[j] - lon[i]) / 2.0)
    a = np.clip(sdp * sdp + np.cos(lat[i]) * np.cos(lat[j]) * sdl * sdl, 0.0, 1.0)
    d = 2.0 * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))
    out[i, j] = d
    out[j, i] = d
    return out


def sample_gnomonic(erp, lat0, lon0, fov, size, nearest=False):
    erp = np.ascontiguousarray(erp, dtype=np.float64)
    H, W, _ = erp.shape
    half = np.tan(fov / 2.0)
    sl, cl, so, co = np.sin(lat0), np.cos(lat0), np.sin(lon0), np.cos(lon0)
    fx, fy, fz = cl * co, cl * so, sl
    ex, ey = -so, co
    nx, ny, nz = -sl * co, -sl * so, cl

    idx = np.arange(size, dtype=np.float64)
    y = ((1.0 - 2.0 * (idx + 0.5) / size) * half)[:, None]
    x = ((2.0 * (idx + 0.5) / size - 1.0) * half)[None, :]
    dx = fx + x * ex + y * nx
    dy = fy + x * ey + y * ny
    dz = np.broadcast_to(fz + y * nz, dx.shape)
    norm = np.sqrt(1.0 + x * x + y * y)
    lat = np.arcsin(np.clip(dz / norm, -1.0, 1.0))
    lon = np.arctan2(dy, dx)
    col = (lon + np.pi) / (2.0 * np.pi) * W - 0.5
    row = (np.pi / 2.0 - lat) / np.pi * H - 0.5

    if nearest:
        r0 = np.clip(np.floor(row + 0.5).astype(np.intp), 0, H - 1)
        c0 = np.floor(col + 0.5).astype(np.intp) % W
        return erp[r0, c0]

    r0 = np.floor(row)
    ty = (row - r0)[..., None]
    r0 = r0.astype(np.intp)
    r1 = np.clip(r0 + 1, 0, H - 1)
    r0 = np.clip(r0, 0, H - 1)
    c0 = np.floor(col)
    tx = (col - c0)[..., None]
    c0 = c0.astype(np.intp) % W
    c1 = (c0 + 1) % W
    a, b = erp[r0, c0], erp[r0, c1]
    top = a + tx * (b - a)
    a, b = erp[r1, c0], erp[r1, c1]
    bot = a + tx * (b - a)
    return top + ty * (bot - top)
