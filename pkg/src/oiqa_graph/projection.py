"""Gnomonic viewport extraction from equirectangular (ERP) panoramas.

ERP layout: row 0 is latitude +90 degrees, column 0 is longitude -180
degrees, pixel centres at half-integer offsets.  Longitude wraps, latitude
clamps.  Viewport pixel ``(r, c)`` looks through the tangent-plane point
``x = (2(c + .5)/S - 1) tan(fov/2)`` (east) and
``y = (1 - 2(r + .5)/S) tan(fov/2)`` (north).
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, InputError


@dataclass
class Viewport:
    size: int
    fov: float
    center: tuple[float, float]
    pixels: np.ndarray


def as_erp(image) -> np.ndarray:
    """Validate and convert to a contiguous float64 (H, W, 3) array in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InputError(f"ERP image must be a non-empty (H, W, 3) array, got shape {arr.shape}")
    if arr.shape[2] != 3:
        raise InputError(f"ERP image must have 3 channels, got {arr.shape[2]}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError("ERP pixel values must be finite and lie in [0, 1]")
    if arr.shape[1] != 2 * arr.shape[0]:
        warnings.warn(f"ERP image is {arr.shape[1]}x{arr.shape[0]}, expected a 2:1 aspect", stacklevel=2)
    return arr


def load_erp(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return as_erp(arr)


def save_png(pixels: np.ndarray, path) -> None:
    from PIL import Image

    data = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def _check_fov(fov: float) -> None:
    if not (0.0 < fov <= 120.0):
        raise ConfigError(f"fov must lie in (0, 120] degrees, got {fov}")


def pixel_to_sphere(center, fov: float, size: int, row, col):
    """Inverse gnomonic map of (fractional) viewport pixel coordinates.

    ``center`` is (lat, lon) in degrees; returns (lat, lon) in radians.
    """
    lat0, lon0 = math.radians(center[0]), math.radians(center[1])
    half = math.tan(math.radians(fov) / 2.0)
    row = np.asarray(row, dtype=np.float64)
    col = np.asarray(col, dtype=np.float64)
    x = (2.0 * (col + 0.5) / size - 1.0) * half
    y = (1.0 - 2.0 * (row + 0.5) / size) * half
    sl, cl, so, co = math.sin(lat0), math.cos(lat0), math.sin(lon0), math.cos(lon0)
    dx = cl * co + x * -so + y * (-sl * co)
    dy = cl * so + x * co + y * (-sl * so)
    dz = sl + y * cl
    norm = np.sqrt(1.0 + x * x + y * y)
    return np.arcsin(np.clip(dz / norm, -1.0, 1.0)), np.arctan2(dy, dx)


def sphere_to_pixel(center, fov: float, size: int, lat, lon):
    """Forward gnomonic map of (lat, lon) radians into viewport (row, col)."""
    lat0, lon0 = math.radians(center[0]), math.radians(center[1])
    half = math.tan(math.radians(fov) / 2.0)
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    cosc = math.sin(lat0) * np.sin(lat) + math.cos(lat0) * np.cos(lat) * np.cos(lon - lon0)
    x = np.cos(lat) * np.sin(lon - lon0) / cosc
    y = (math.cos(lat0) * np.sin(lat) - math.sin(lat0) * np.cos(lat) * np.cos(lon - lon0)) / cosc
    col = (x / half + 1.0) * size / 2.0 - 0.5
    row = (1.0 - y / half) * size / 2.0 - 0.5
    return row, col


def erp_pixel_center(shape, row: int, col: int) -> tuple[float, float]:
    """(lat, lon) in degrees of the centre of ERP pixel (row, col)."""
    H, W = shape[0], shape[1]
    lat = 90.0 - (row + 0.5) * 180.0 / H
    lon = (col + 0.5) * 360.0 / W - 180.0
    return lat, lon


def gnomonic_extract(erp, center, fov: float = 90.0, size: int = 224, nearest: bool = False) -> Viewport:
    """Render a ``size`` x ``size`` rectilinear viewport centred at (lat, lon) degrees."""
    _check_fov(fov)
    if size < 1:
        raise ConfigError(f"viewport size must be positive, got {size}")
    erp = erp if _is_clean(erp) else as_erp(erp)
    pixels = kernels.sample_gnomonic(
        erp, math.radians(center[0]), math.radians(center[1]), math.radians(fov), int(size), bool(nearest)
    )
    np.clip(pixels, 0.0, 1.0, out=pixels)
    return Viewport(size=int(size), fov=float(fov), center=(float(center[0]), float(center[1])), pixels=pixels)


def _is_clean(a) -> bool:
    return (
        isinstance(a, np.ndarray)
        and a.dtype == np.float64
        and a.ndim == 3
        and a.shape[2] == 3
        and a.shape[0] > 0
        and a.shape[1] > 0
        and a.flags.c_contiguous
    )


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("OIQA_THREADS", "1")))
    except ValueError:
        return 1


def extract_all(erp, points, fov: float = 90.0, size: int = 224, nearest: bool = False) -> list[Viewport]:
    points = list(points)
    if not points:
        return []
    _check_fov(fov)
    erp = as_erp(erp)

    def one(p):
        return gnomonic_extract(erp, (p.lat, p.lon), fov, size, nearest)

    workers = min(_workers(), len(points))
    if workers == 1:
        return [one(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, points))


def viewport_stack(viewports) -> np.ndarray:
    """(V, 3, S, S) channel-first stack for the backbone."""
    return np.stack([v.pixels.transpose(2, 0, 1) for v in viewports]).astype(np.float64)


def write_viewports(viewports, points, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for p, vp in zip(points, viewports):
        name = f"vp_{p.index}.png"
        save_png(vp.pixels, outdir / name)
        entries.append({"k": p.index, "file": name, "lat": vp.center[0], "lon": vp.center[1]})
    manifest = {
        "fov": viewports[0].fov if viewports else None,
        "size": viewports[0].size if viewports else None,
        "viewports": entries,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
