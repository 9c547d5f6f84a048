"""Render gaze heatmaps and patchify them alongside frames.

Shows the max-normalized Gaussian density, its binary storage format, the
PNG debug export, and the exact patchify/unpatchify round trip.
"""
from pathlib import Path

import numpy as np

from glarify import TracePoint, patchify, render_heatmap, unpatchify
from glarify.heatmaps import default_sigma, export_heatmap_png, read_heatmap_glhm, write_heatmap_glhm

out_dir = Path(__file__).parent / "_output"
out_dir.mkdir(exist_ok=True)

# Two fixations on one 64x48 keyframe.
points = [
    TracePoint(x=0.25, y=0.30, keyframe_index=0, time_ms=0),
    TracePoint(x=0.70, y=0.60, keyframe_index=0, time_ms=150),
]
sigma = default_sigma(64, 48)
hm = render_heatmap(points, width=64, height=48, sigma=sigma)
print(f"sigma = {sigma:.2f}px; grid {hm.grid.shape}; peak = {hm.grid.max()} (always 1.0 with points)")
r, c = np.unravel_index(np.argmax(hm.grid), hm.grid.shape)
print(f"peak pixel = (row {r}, col {c}); first fixation was at pixel ({0.30 * 48:.0f}, {0.25 * 64:.0f})")

# Canonical storage (raw float32 + 16-byte header) and debug PNG.
write_heatmap_glhm(hm, out_dir / "demo.glhm")
export_heatmap_png(hm, out_dir / "demo.png")
back = read_heatmap_glhm(out_dir / "demo.glhm")
print(f"stored and re-read: max abs diff = {np.max(np.abs(back.grid - hm.grid)):.2e} (float32 storage)")

# Patchify a stack of frames: T x C x H x W -> T x C x H' x W' x p x p.
frames = np.stack([hm.grid[None, :, :], np.zeros((1, 48, 64))])  # 2 frames, 1 channel
patches = patchify(frames, 16)
print(f"\npatchified {frames.shape} with p=16 -> grid {patches.grid_h}x{patches.grid_w}, data {patches.data.shape}")
restored = unpatchify(patches)
print(f"unpatchify(patchify(x)) bit-exact: {np.array_equal(restored, frames)}")
