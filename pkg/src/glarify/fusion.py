"""Gaze token projection, a desk-scale vision encoder, and additive fusion.

The projection is a single linear map from a flattened p x p gaze patch to
the token dimension D. It initializes to exact zeros by default, which
makes the fused pipeline bit-identical to the gaze-free encoder until
training moves it; gradients w.r.t. the weights stay nonzero because they
scale with the gaze patches themselves.

The encoder is a small pre-norm transformer over the full T*H'*W' token
sequence with additive row/column/time position embeddings. It stands in
for a production vision tower at test scale; all math is float64 and
deterministic given its parameter dict.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import json
import numpy as np
from scipy.special import erf

from .canonical import atomic_write_bytes
from .errors import DataError, SchemaError
from .heatmaps import PatchGrid

CKPT_SCHEMA = "glarify-ckpt/1"
CKPT_MAGIC = b"GLCK"
CKPT_VERSION = 1

LAYERNORM_EPS = 1e-6


@dataclass(frozen=True)
class TokenGrid:
    """T x H' x W' x D token tensor."""

    frames: int
    grid_h: int
    grid_w: int
    dim: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        expected = (self.frames, self.grid_h, self.grid_w, self.dim)
        if data.shape != expected:
            raise DataError(f"token data shape {data.shape} does not match {expected}")
        if not np.all(np.isfinite(data)):
            raise DataError("token data contains non-finite values")


@dataclass
class GazeProjection:
    """Linear map from a flattened p x p gaze patch to a D-dim token."""

    weights: np.ndarray
    bias: np.ndarray
    patch_side: int
    dim: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        p2 = self.patch_side * self.patch_side
        if self.weights.shape != (p2, self.dim):
            raise DataError(f"projection weights must be ({p2}, {self.dim}), got {self.weights.shape}")
        if self.bias.shape != (self.dim,):
            raise DataError(f"projection bias must be ({self.dim},), got {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("projection parameters contain non-finite values")

    @property
    def param_count(self) -> int:
        return self.patch_side * self.patch_side * self.dim + self.dim

    @classmethod
    def zeros(cls, patch_side: int, dim: int) -> "GazeProjection":
        p2 = patch_side * patch_side
        return cls(np.zeros((p2, dim)), np.zeros(dim), patch_side, dim)

    @classmethod
    def random(cls, patch_side: int, dim: int, rng: np.random.Generator, scale: float = 0.02) -> "GazeProjection":
        p2 = patch_side * patch_side
        return cls(rng.normal(0.0, scale, (p2, dim)), rng.normal(0.0, scale, dim), patch_side, dim)


@dataclass(frozen=True)
class EncoderConfig:
    patch_side: int
    dim: int
    depth: int
    head_count: int
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.head_count != 0:
            raise DataError(f"dim {self.dim} not divisible by head count {self.head_count}")
        if self.depth < 0:
            raise DataError("depth must be >= 0")


def project_gaze(gaze_patches: PatchGrid, proj: GazeProjection) -> TokenGrid:
    """Z[t, i, j] = flatten(G[t, 0, i, j]) @ weights + bias (row-major flatten)."""
    if gaze_patches.channels != 1:
        raise DataError(f"gaze patches must be single-channel, got C={gaze_patches.channels}")
    if gaze_patches.patch_side != proj.patch_side:
        raise DataError(
            f"patch size mismatch: grid p={gaze_patches.patch_side}, projection p={proj.patch_side}"
        )
    t, gh, gw, p = gaze_patches.frames, gaze_patches.grid_h, gaze_patches.grid_w, gaze_patches.patch_side
    flat = gaze_patches.data.reshape(t, gh, gw, p * p)
    tokens = flat @ proj.weights + proj.bias
    return TokenGrid(frames=t, grid_h=gh, grid_w=gw, dim=proj.dim, data=tokens)


def fuse(visual: TokenGrid, gaze: TokenGrid) -> TokenGrid:
    """Elementwise sum of visual and gaze tokens; shapes must match exactly."""
    if visual.data.shape != gaze.data.shape:
        raise DataError(f"token shape mismatch: {visual.data.shape} vs {gaze.data.shape}")
    return TokenGrid(visual.frames, visual.grid_h, visual.grid_w, visual.dim, visual.data + gaze.data)


def param_ratio(proj: GazeProjection, base_param_count: int) -> float:
    """Fraction of a base model's parameters the projection adds."""
    if base_param_count <= 0:
        raise DataError("base_param_count must be positive")
    return proj.param_count / base_param_count


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LAYERNORM_EPS) * gamma + beta


def init_encoder_params(
    cfg: EncoderConfig,
    frames: int,
    grid_h: int,
    grid_w: int,
    channels: int = 1,
    rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Seeded parameter dict for :func:`encode_frames` at a fixed geometry."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    in_features = channels * cfg.patch_side * cfg.patch_side
    params: dict[str, np.ndarray] = {
        "embed.w": rng.normal(0.0, in_features**-0.5, (in_features, d)),
        "embed.b": np.zeros(d),
        "pos.row": rng.normal(0.0, 0.5, (grid_h, d)),
        "pos.col": rng.normal(0.0, 0.5, (grid_w, d)),
        "pos.time": rng.normal(0.0, 0.5, (frames, d)),
    }
    for layer in range(cfg.depth):
        pre = f"block{layer}."
        params[pre + "ln1.g"] = np.ones(d)
        params[pre + "ln1.b"] = np.zeros(d)
        params[pre + "attn.wq"] = rng.normal(0.0, d**-0.5, (d, d))
        params[pre + "attn.wk"] = rng.normal(0.0, d**-0.5, (d, d))
        params[pre + "attn.wv"] = rng.normal(0.0, d**-0.5, (d, d))
        params[pre + "attn.wo"] = rng.normal(0.0, d**-0.5, (d, d))
        params[pre + "ln2.g"] = np.ones(d)
        params[pre + "ln2.b"] = np.zeros(d)
        params[pre + "mlp.w1"] = rng.normal(0.0, d**-0.5, (d, 4 * d))
        params[pre + "mlp.b1"] = np.zeros(4 * d)
        params[pre + "mlp.w2"] = rng.normal(0.0, (4 * d) ** -0.5, (4 * d, d))
        params[pre + "mlp.b2"] = np.zeros(d)
    return params


def _attention(x: np.ndarray, params: dict[str, np.ndarray], prefix: str, heads: int) -> np.ndarray:
    s, d = x.shape
    dh = d // heads
    q = (x @ params[prefix + "attn.wq"]).reshape(s, heads, dh)
    k = (x @ params[prefix + "attn.wk"]).reshape(s, heads, dh)
    v = (x @ params[prefix + "attn.wv"]).reshape(s, heads, dh)
    scores = np.einsum("qhd,khd->hqk", q, k) / np.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    pooled = np.einsum("hqk,khd->qhd", weights, v).reshape(s, d)
    return pooled @ params[prefix + "attn.wo"]


def encode_frames(patches: PatchGrid, cfg: EncoderConfig, params: dict[str, np.ndarray]) -> TokenGrid:
    """Desk-scale stand-in for a vision tower over patchified keyframes.

    Per-patch linear embedding to D (flatten order: channel, then row-major
    within the patch), additive row/column/time position embeddings, then
    `cfg.depth` pre-norm attention + feedforward blocks over the full token
    sequence.
    """
    if patches.patch_side != cfg.patch_side:
        raise DataError(f"patch size mismatch: grid p={patches.patch_side}, config p={cfg.patch_side}")
    t, c, gh, gw, p = patches.frames, patches.channels, patches.grid_h, patches.grid_w, patches.patch_side
    in_features = c * p * p
    if params["embed.w"].shape != (in_features, cfg.dim):
        raise DataError(
            f"embedding expects {params['embed.w'].shape[0]} features, patches provide {in_features}"
        )
    for name, want in (("pos.row", gh), ("pos.col", gw), ("pos.time", t)):
        if params[name].shape != (want, cfg.dim):
            raise DataError(f"{name} shaped {params[name].shape}, expected ({want}, {cfg.dim})")

    flat = patches.data.transpose(0, 2, 3, 1, 4, 5).reshape(t, gh, gw, in_features)
    x = flat @ params["embed.w"] + params["embed.b"]
    x = (
        x
        + params["pos.time"][:, None, None, :]
        + params["pos.row"][None, :, None, :]
        + params["pos.col"][None, None, :, :]
    )
    seq = x.reshape(t * gh * gw, cfg.dim)
    for layer in range(cfg.depth):
        pre = f"block{layer}."
        normed = _layernorm(seq, params[pre + "ln1.g"], params[pre + "ln1.b"])
        seq = seq + _attention(normed, params, pre, cfg.head_count)
        normed = _layernorm(seq, params[pre + "ln2.g"], params[pre + "ln2.b"])
        hidden = _gelu(normed @ params[pre + "mlp.w1"] + params[pre + "mlp.b1"])
        seq = seq + hidden @ params[pre + "mlp.w2"] + params[pre + "mlp.b2"]
    return TokenGrid(frames=t, grid_h=gh, grid_w=gw, dim=cfg.dim, data=seq.reshape(t, gh, gw, cfg.dim))


def save_checkpoint(tensors: dict[str, np.ndarray], path: str | Path) -> None:
    """Write named tensors as ``glarify-ckpt/1``: manifest + little-endian float32 blobs."""
    names = sorted(tensors)
    manifest = {
        "schema": CKPT_SCHEMA,
        "tensors": [
            {"name": n, "shape": list(np.asarray(tensors[n]).shape), "dtype": "float32"} for n in names
        ],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.asarray(tensors[n], dtype=np.float64).astype("<f4").tobytes(order="C") for n in names)
    header = CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(manifest_bytes))
    atomic_write_bytes(path, header + manifest_bytes + blob)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise DataError(f"not a checkpoint file: {path}")
    version, manifest_len = struct.unpack("<II", raw[4:12])
    if version != CKPT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    manifest = json.loads(raw[12 : 12 + manifest_len].decode("utf-8"))
    if manifest.get("schema") != CKPT_SCHEMA:
        raise SchemaError(CKPT_SCHEMA, str(manifest.get("schema")))
    tensors: dict[str, np.ndarray] = {}
    offset = 12 + manifest_len
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"checkpoint truncated while reading tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise DataError("checkpoint has trailing bytes beyond manifest contents")
    return tensors
