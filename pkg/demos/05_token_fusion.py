"""Gaze-token projection and additive fusion with the visual tokens.

The projection starts at exact zeros, so the fused output is bit-identical
to the gaze-free encoder output until training moves it; the share of new
parameters it adds is tiny.
"""
import numpy as np

from glarify import EncoderConfig, GazeProjection, encode_frames, fuse, param_ratio, patchify, project_gaze
from glarify.fusion import init_encoder_params

rng = np.random.default_rng(0)

# One keyframe, 32x32, patch side 8 -> a 4x4 token grid.
cfg = EncoderConfig(patch_side=8, dim=32, depth=1, head_count=4, seed=0)
frames = rng.normal(size=(1, 1, 32, 32))
heatmap = rng.uniform(size=(1, 1, 32, 32))

x = patchify(frames, 8)
g = patchify(heatmap, 8)
params = init_encoder_params(cfg, frames=1, grid_h=4, grid_w=4, channels=1)

visual = encode_frames(x, cfg, params)
print(f"visual tokens: {visual.data.shape}")

proj = GazeProjection.zeros(patch_side=8, dim=32)
gaze = project_gaze(g, proj)
fused = fuse(visual, gaze)
print(f"zero-init projection -> fused == visual bit-exactly: {fused.data.tobytes() == visual.data.tobytes()}")

# After any training step the projection is nonzero and fusion shifts tokens
# toward gazed patches.
proj_trained = GazeProjection.random(8, 32, rng, scale=0.1)
fused2 = fuse(visual, project_gaze(g, proj_trained))
delta = np.abs(fused2.data - visual.data).mean()
print(f"random projection -> mean |token shift| = {delta:.4f}")

# Parameter accounting: p*p*D + D new parameters.
print(f"\nprojection parameters at p=8,  D=32:   {proj.param_count}")
probe = GazeProjection.zeros(14, 1280)
print(f"projection parameters at p=14, D=1280: {probe.param_count}")
for base in (3e9, 7e8):
    print(f"  share of a {base:.0e}-parameter base model: {param_ratio(probe, int(base)):.3e}")
