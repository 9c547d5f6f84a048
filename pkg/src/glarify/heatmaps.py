"""Gaze heatmap rendering and patch grid construction.

A heatmap is the sum of isotropic Gaussian kernels centered at each trace
point's pixel position, divided by its maximum (an all-zero map stays
zero), so the peak is exactly 1.0 whenever any point exists. Patchify
splits a T x C x H x W field into non-overlapping p x p patches without
padding; non-divisible shapes are rejected rather than silently resized.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .canonical import atomic_write_bytes
from .data_model import TracePoint
from .errors import DataError

GLHM_MAGIC = b"GLHM"
GLHM_VERSION = 1


@dataclass(frozen=True)
class GazeHeatmap:
    """Per-keyframe attention density grid, values in [0, 1]."""

    keyframe_index: int
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        if grid.ndim != 2:
            raise DataError(f"heatmap grid must be 2-D, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise DataError("heatmap grid contains non-finite values")
        if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
            raise DataError("heatmap grid values outside [0, 1]")


@dataclass(frozen=True)
class PatchGrid:
    """T x C x H' x W' x p x p view of a field split into square patches."""

    frames: int
    channels: int
    grid_h: int
    grid_w: int
    patch_side: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        expected = (self.frames, self.channels, self.grid_h, self.grid_w, self.patch_side, self.patch_side)
        if data.shape != expected:
            raise DataError(f"patch data shape {data.shape} does not match {expected}")
        if not np.all(np.isfinite(data)):
            raise DataError("patch data contains non-finite values")


def default_sigma(width: int, height: int) -> float:
    """Kernel std used when none is configured: 2% of the image diagonal."""
    return 0.02 * math.hypot(width, height)


def render_heatmap(
    points: Sequence[TracePoint],
    width: int,
    height: int,
    sigma: float,
    keyframe_index: int | None = None,
) -> GazeHeatmap:
    """Render one keyframe's points into a max-normalized Gaussian density.

    Kernels are centered at (x * width, y * height) and evaluated at integer
    pixel coordinates. All points must share one keyframe index; pass
    `keyframe_index` explicitly for an empty point list.
    """
    if width <= 0 or height <= 0:
        raise DataError(f"heatmap size must be positive, got {width}x{height}")
    if sigma <= 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    indices = {p.keyframe_index for p in points}
    if len(indices) > 1:
        raise DataError(f"points span multiple keyframes: {sorted(indices)}")
    if keyframe_index is None:
        if not indices:
            raise DataError("keyframe_index required when rendering zero points")
        keyframe_index = indices.pop()
    elif indices and indices != {keyframe_index}:
        raise DataError(f"points belong to keyframe {indices.pop()}, not {keyframe_index}")

    grid = np.zeros((height, width), dtype=np.float64)
    if points:
        cols = np.arange(width, dtype=np.float64)
        rows = np.arange(height, dtype=np.float64)
        inv = 1.0 / (2.0 * sigma * sigma)
        # Accumulate in a canonical order so the result is bit-identical
        # under any permutation of the input list.
        for p in sorted(points, key=lambda q: (q.y, q.x, q.time_ms)):
            cx = p.x * width
            cy = p.y * height
            gx = np.exp(-((cols - cx) ** 2) * inv)
            gy = np.exp(-((rows - cy) ** 2) * inv)
            grid += np.outer(gy, gx)
        peak = grid.max()
        if peak > 0.0:
            grid /= peak
    return GazeHeatmap(keyframe_index=keyframe_index, grid=grid)


def patchify(field: np.ndarray, patch_side: int) -> PatchGrid:
    """Split a T x C x H x W field into p x p patches.

    data[t, c, i, j, a, b] == field[t, c, i*p + a, j*p + b]; H and W must be
    divisible by p, otherwise the shape is rejected by name.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 4:
        raise DataError(f"field must be T x C x H x W, got shape {field.shape}")
    t, c, h, w = field.shape
    p = int(patch_side)
    if p <= 0:
        raise DataError(f"patch side must be positive, got {p}")
    if h % p != 0 or w % p != 0:
        raise DataError(f"field H={h}, W={w} not divisible by patch side p={p}")
    gh, gw = h // p, w // p
    data = field.reshape(t, c, gh, p, gw, p).transpose(0, 1, 2, 4, 3, 5)
    return PatchGrid(frames=t, channels=c, grid_h=gh, grid_w=gw, patch_side=p, data=np.ascontiguousarray(data))


def unpatchify(patches: PatchGrid) -> np.ndarray:
    """Exact inverse of :func:`patchify`."""
    d = patches.data
    field = d.transpose(0, 1, 2, 4, 3, 5).reshape(
        patches.frames,
        patches.channels,
        patches.grid_h * patches.patch_side,
        patches.grid_w * patches.patch_side,
    )
    return np.ascontiguousarray(field)


def write_heatmap_glhm(heatmap: GazeHeatmap, path: str | Path) -> None:
    """Store a heatmap as raw little-endian float32 with a 16-byte header."""
    h, w = heatmap.grid.shape
    header = GLHM_MAGIC + struct.pack("<III", GLHM_VERSION, h, w)
    body = heatmap.grid.astype("<f4").tobytes(order="C")
    atomic_write_bytes(path, header + body)


def read_heatmap_glhm(path: str | Path, keyframe_index: int = 0) -> GazeHeatmap:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != GLHM_MAGIC:
        raise DataError(f"not a GLHM file: {path}")
    version, h, w = struct.unpack("<III", raw[4:16])
    if version != GLHM_VERSION:
        raise DataError(f"unsupported GLHM version {version}")
    body = raw[16:]
    if len(body) != 4 * h * w:
        raise DataError(f"GLHM payload truncated: expected {4 * h * w} bytes, found {len(body)}")
    grid = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    return GazeHeatmap(keyframe_index=keyframe_index, grid=grid)


def export_heatmap_png(heatmap: GazeHeatmap, path: str | Path) -> None:
    """Debug export as 8-bit grayscale PNG."""
    from PIL import Image

    levels = np.round(heatmap.grid * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(levels, mode="L").save(str(path), format="PNG")
