"""Two-stage training validation on a synthetic gaze-pointing task.

The toy model is the smallest structure that exercises the real parameter
partition: a frozen vision encoder, the trainable gaze projection, and a
"thinker" readout (one cross-attention with a learned query over the fused
tokens, then a linear head over patch classes). Stage 1 trains the
projection alone; stage 2 trains projection + thinker; the encoder stays
bit-frozen throughout, which is verified by hashing its tensors.

Because the encoder is frozen in both stages, gradients are only ever
needed through projection -> fuse -> thinker, and that path is
backpropagated by hand in float64 so it can be validated against central
differences.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data_model import TracePoint
from .errors import DataError
from .fusion import EncoderConfig, GazeProjection, encode_frames, init_encoder_params
from .heatmaps import PatchGrid, patchify, render_heatmap

DEFAULT_LEARNING_RATE = 1e-4


@dataclass(frozen=True)
class TaskConfig:
    """Geometry and noise level of the synthetic gaze-pointing task."""

    frames: int = 1
    channels: int = 1
    height: int = 16
    width: int = 16
    patch_side: int = 4
    frame_noise: float = 0.25

    def __post_init__(self):
        if self.height % self.patch_side or self.width % self.patch_side:
            raise DataError("task height/width must be divisible by patch_side")
        if self.patch_side < 2:
            raise DataError("patch_side must be >= 2 so blob centers can be strictly interior")

    @property
    def grid_h(self) -> int:
        return self.height // self.patch_side

    @property
    def grid_w(self) -> int:
        return self.width // self.patch_side

    @property
    def n_classes(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class ToyBatch:
    """One sample: frames, per-frame heatmaps, and the gazed patch index."""

    frames: np.ndarray
    heatmaps: np.ndarray
    target: int


@dataclass
class ToyModel:
    enc_cfg: EncoderConfig
    task_cfg: TaskConfig
    encoder: dict[str, np.ndarray]
    projection: GazeProjection
    thinker: dict[str, np.ndarray]

    def parameter_groups(self) -> dict[str, dict[str, np.ndarray]]:
        """Exhaustive, disjoint partition of every parameter tensor."""
        return {
            "encoder": dict(self.encoder),
            "projection": {"weights": self.projection.weights, "bias": self.projection.bias},
            "thinker": dict(self.thinker),
        }

    def to_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for group, tensors in self.parameter_groups().items():
            for name, arr in tensors.items():
                out[f"{group}.{name}"] = arr
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Overwrite parameters in place from a checkpoint tensor dict."""
        for group, own in self.parameter_groups().items():
            for name, arr in own.items():
                key = f"{group}.{name}"
                if key not in tensors:
                    raise DataError(f"checkpoint missing tensor {key!r}")
                src = np.asarray(tensors[key], dtype=np.float64)
                if src.shape != arr.shape:
                    raise DataError(f"tensor {key!r} shaped {src.shape}, expected {arr.shape}")
                arr[...] = src


def build_toy_model(
    enc_cfg: EncoderConfig,
    task_cfg: TaskConfig,
    seed: int = 0,
    projection_init: str = "zeros",
) -> ToyModel:
    rng = np.random.default_rng(seed)
    encoder = init_encoder_params(
        enc_cfg, task_cfg.frames, task_cfg.grid_h, task_cfg.grid_w, task_cfg.channels, rng
    )
    if projection_init == "zeros":
        proj = GazeProjection.zeros(enc_cfg.patch_side, enc_cfg.dim)
    elif projection_init == "random":
        proj = GazeProjection.random(enc_cfg.patch_side, enc_cfg.dim, rng)
    else:
        raise DataError(f"unknown projection_init {projection_init!r}")
    d, k = enc_cfg.dim, task_cfg.n_classes
    # Query at 0.3 keeps the initial attention close to uniform; a strong
    # random query can mis-route attention badly enough that plain gradient
    # descent never recovers.
    thinker = {
        "query": rng.normal(0.0, 0.3, d),
        "wk": rng.normal(0.0, d**-0.5, (d, d)),
        "wv": rng.normal(0.0, d**-0.5, (d, d)),
        "wo": rng.normal(0.0, d**-0.5, (d, k)),
        "bo": np.zeros(k),
    }
    return ToyModel(enc_cfg, task_cfg, encoder, proj, thinker)


def make_toy_task(seed: int, n: int, task_cfg: TaskConfig) -> list[ToyBatch]:
    """Random frames plus one Gaussian gaze blob centered strictly inside a
    uniformly chosen patch; target = that patch's index."""
    if n <= 0:
        raise DataError("n must be positive")
    rng = np.random.default_rng(seed)
    p = task_cfg.patch_side
    sigma = p / 2.0
    batches: list[ToyBatch] = []
    for _ in range(n):
        frames = rng.normal(0.0, task_cfg.frame_noise, (task_cfg.frames, task_cfg.channels, task_cfg.height, task_cfg.width))
        target = int(rng.integers(task_cfg.n_classes))
        gi, gj = divmod(target, task_cfg.grid_w)
        cy = gi * p + rng.uniform(1.0, p - 1.0)
        cx = gj * p + rng.uniform(1.0, p - 1.0)
        maps = np.empty((task_cfg.frames, 1, task_cfg.height, task_cfg.width))
        for t in range(task_cfg.frames):
            point = TracePoint(x=cx / task_cfg.width, y=cy / task_cfg.height, keyframe_index=t, time_ms=0)
            maps[t, 0] = render_heatmap([point], task_cfg.width, task_cfg.height, sigma).grid
        batches.append(ToyBatch(frames=frames, heatmaps=maps, target=target))
    return batches


def _flatten_gaze(heatmaps: np.ndarray, p: int) -> np.ndarray:
    patches = patchify(heatmaps, p)
    s = patches.frames * patches.grid_h * patches.grid_w
    return patches.data.reshape(s, p * p)


def encode_visual(model: ToyModel, batch: ToyBatch) -> np.ndarray:
    """Frozen-encoder token sequence for one sample, flattened to (S, D)."""
    grid = encode_frames(patchify(batch.frames, model.enc_cfg.patch_side), model.enc_cfg, model.encoder)
    return grid.data.reshape(-1, model.enc_cfg.dim)


def _forward(model: ToyModel, visual_seq: np.ndarray, gaze_flat: np.ndarray, target: int):
    th = model.thinker
    d = model.enc_cfg.dim
    z = gaze_flat @ model.projection.weights + model.projection.bias
    fused = visual_seq + z
    keys = fused @ th["wk"]
    values = fused @ th["wv"]
    scores = keys @ th["query"] / np.sqrt(d)
    scores = scores - scores.max()
    attn = np.exp(scores)
    attn = attn / attn.sum()
    pooled = attn @ values
    logits = pooled @ th["wo"] + th["bo"]
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    loss = -log_probs[target]
    cache = (fused, keys, values, attn, pooled, log_probs)
    return loss, logits, cache


def toy_loss(model: ToyModel, batch: ToyBatch, visual_seq: np.ndarray | None = None) -> float:
    if visual_seq is None:
        visual_seq = encode_visual(model, batch)
    gaze_flat = _flatten_gaze(batch.heatmaps, model.enc_cfg.patch_side)
    loss, _, _ = _forward(model, visual_seq, gaze_flat, batch.target)
    if not np.isfinite(loss):
        raise DataError("non-finite loss")
    return float(loss)


def toy_logits(model: ToyModel, batch: ToyBatch, visual_seq: np.ndarray | None = None) -> np.ndarray:
    if visual_seq is None:
        visual_seq = encode_visual(model, batch)
    gaze_flat = _flatten_gaze(batch.heatmaps, model.enc_cfg.patch_side)
    _, logits, _ = _forward(model, visual_seq, gaze_flat, batch.target)
    return logits


def analytic_grads(
    model: ToyModel, batch: ToyBatch, visual_seq: np.ndarray | None = None
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients w.r.t. projection and thinker parameters."""
    if visual_seq is None:
        visual_seq = encode_visual(model, batch)
    gaze_flat = _flatten_gaze(batch.heatmaps, model.enc_cfg.patch_side)
    th = model.thinker
    d = model.enc_cfg.dim
    loss, _, cache = _forward(model, visual_seq, gaze_flat, batch.target)
    fused, keys, values, attn, pooled, log_probs = cache

    dlogits = np.exp(log_probs)
    dlogits[batch.target] -= 1.0

    d_wo = np.outer(pooled, dlogits)
    d_bo = dlogits.copy()
    d_pooled = th["wo"] @ dlogits

    d_attn = values @ d_pooled
    d_values = np.outer(attn, d_pooled)
    d_scores = attn * (d_attn - attn @ d_attn)
    d_query = keys.T @ d_scores / np.sqrt(d)
    d_keys = np.outer(d_scores, th["query"]) / np.sqrt(d)

    d_fused = d_keys @ th["wk"].T + d_values @ th["wv"].T
    d_wk = fused.T @ d_keys
    d_wv = fused.T @ d_values

    d_weights = gaze_flat.T @ d_fused
    d_bias = d_fused.sum(axis=0)

    grads = {
        "projection.weights": d_weights,
        "projection.bias": d_bias,
        "thinker.query": d_query,
        "thinker.wk": d_wk,
        "thinker.wv": d_wv,
        "thinker.wo": d_wo,
        "thinker.bo": d_bo,
    }
    if not np.isfinite(loss):
        raise DataError("non-finite loss")
    return float(loss), grads


def _trainable_tensors(model: ToyModel, groups: tuple[str, ...]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    all_groups = model.parameter_groups()
    for group in groups:
        for name, arr in all_groups[group].items():
            out[f"{group}.{name}"] = arr
    return out


def numeric_grads(model: ToyModel, batch: ToyBatch, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradients over projection and thinker parameters."""
    if eps <= 0:
        raise DataError("eps must be positive")
    visual_seq = encode_visual(model, batch)
    tensors = _trainable_tensors(model, ("projection", "thinker"))
    grads: dict[str, np.ndarray] = {}
    for name, arr in tensors.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = toy_loss(model, batch, visual_seq)
            flat[i] = orig - eps
            lo = toy_loss(model, batch, visual_seq)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def grad_check(model: ToyModel, batch: ToyBatch, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    _, analytic = analytic_grads(model, batch)
    numeric = numeric_grads(model, batch, eps)
    return max(relative_error(analytic[name], numeric[name]) for name in analytic)


def tensor_digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def group_digests(model: ToyModel, groups: tuple[str, ...]) -> dict[str, str]:
    return {name: tensor_digest(arr) for name, arr in _trainable_tensors(model, groups).items()}


@dataclass(frozen=True)
class TrainConfig:
    """Plain momentum-free gradient descent with optional inverse-time decay.

    The step-t learning rate is ``learning_rate / (1 + lr_decay * t)``; decay
    0 keeps it constant. ``batch_size * grad_accum_steps`` consecutive
    samples are averaged per update.
    """

    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = 1
    batch_size: int = 1
    grad_accum_steps: int = 1
    lr_decay: float = 0.0
    max_steps: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0 or self.grad_accum_steps <= 0:
            raise DataError("training config values must be positive")
        if self.lr_decay < 0:
            raise DataError("lr_decay must be >= 0")


@dataclass(frozen=True)
class StepRecord:
    stage: int
    step: int
    loss: float
    accuracy: float | None = None  # evaluated on held-out data at epoch ends


@dataclass(frozen=True)
class StageResult:
    stage: int
    steps: tuple[StepRecord, ...]
    initial_loss: float
    final_loss: float
    accuracy: float | None
    frozen_digests_before: dict[str, str] = field(repr=False, default_factory=dict)
    frozen_digests_after: dict[str, str] = field(repr=False, default_factory=dict)

    @property
    def frozen_intact(self) -> bool:
        return self.frozen_digests_before == self.frozen_digests_after


def mean_loss(model: ToyModel, data: list[ToyBatch], visual_cache: list[np.ndarray] | None = None) -> float:
    if visual_cache is None:
        visual_cache = [encode_visual(model, b) for b in data]
    return float(np.mean([toy_loss(model, b, v) for b, v in zip(data, visual_cache)]))


def evaluate_accuracy(model: ToyModel, data: list[ToyBatch]) -> float:
    """Fraction of samples whose argmax logit (lowest index on ties) hits the target."""
    hits = 0
    for batch in data:
        pred = int(np.argmax(toy_logits(model, batch)))
        hits += pred == batch.target
    return hits / len(data)


def _run_stage(
    model: ToyModel,
    data: list[ToyBatch],
    cfg: TrainConfig,
    stage: int,
    trainable_groups: tuple[str, ...],
    frozen_groups: tuple[str, ...],
    eval_data: list[ToyBatch] | None = None,
) -> StageResult:
    digests_before = group_digests(model, frozen_groups)
    trainable = _trainable_tensors(model, trainable_groups)
    # Encoder tensors never receive gradients, so visual tokens are computed once.
    visual_cache = [encode_visual(model, b) for b in data]
    initial = mean_loss(model, data, visual_cache)

    effective_batch = cfg.batch_size * cfg.grad_accum_steps
    records: list[StepRecord] = []
    step = 0
    done = False
    for _ in range(cfg.epochs):
        last_start = ((len(data) - 1) // effective_batch) * effective_batch
        for start in range(0, len(data), effective_batch):
            chunk = list(range(start, min(start + effective_batch, len(data))))
            accum: dict[str, np.ndarray] = {name: np.zeros_like(arr) for name, arr in trainable.items()}
            losses = []
            for i in chunk:
                loss, grads = analytic_grads(model, data[i], visual_cache[i])
                if not np.isfinite(loss):
                    raise DataError(f"non-finite loss at step {step}")
                losses.append(loss)
                for name in accum:
                    accum[name] += grads[name]
            lr = cfg.learning_rate / (1.0 + cfg.lr_decay * step)
            scale = lr / len(chunk)
            for name, arr in trainable.items():
                arr -= scale * accum[name]
            step += 1
            epoch_end = start == last_start
            step_accuracy = (
                evaluate_accuracy(model, eval_data) if (epoch_end and eval_data is not None) else None
            )
            records.append(StepRecord(stage=stage, step=step, loss=float(np.mean(losses)), accuracy=step_accuracy))
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
        if done:
            break

    final = mean_loss(model, data, visual_cache)
    digests_after = group_digests(model, frozen_groups)
    if digests_before != digests_after:
        raise DataError(f"frozen parameters changed during stage {stage}")
    accuracy = evaluate_accuracy(model, eval_data) if eval_data is not None else None
    return StageResult(
        stage=stage,
        steps=tuple(records),
        initial_loss=initial,
        final_loss=final,
        accuracy=accuracy,
        frozen_digests_before=digests_before,
        frozen_digests_after=digests_after,
    )


def train_stage1(model: ToyModel, data: list[ToyBatch], cfg: TrainConfig) -> StageResult:
    """Stage 1: only the gaze projection learns; encoder and thinker stay bit-frozen."""
    return _run_stage(model, data, cfg, stage=1, trainable_groups=("projection",), frozen_groups=("encoder", "thinker"))


def train_stage2(
    model: ToyModel, data: list[ToyBatch], cfg: TrainConfig, eval_data: list[ToyBatch] | None = None
) -> StageResult:
    """Stage 2: thinker and projection train jointly from a stage-1 model; encoder stays bit-frozen."""
    return _run_stage(
        model,
        data,
        cfg,
        stage=2,
        trainable_groups=("projection", "thinker"),
        frozen_groups=("encoder",),
        eval_data=eval_data,
    )


def compare_two_stage_vs_scratch(
    seeds: list[int],
    enc_cfg: EncoderConfig,
    task_cfg: TaskConfig,
    stage1_cfg: TrainConfig,
    stage2_cfg: TrainConfig,
    n_train: int = 512,
    n_eval: int = 256,
) -> list[dict]:
    """Seeded A/B: full two-stage protocol vs stage 2 alone at the same stage-2 budget.

    Returns one record per seed with both held-out accuracies; callers log
    the comparison, nothing here asserts an ordering.
    """
    results = []
    for seed in seeds:
        train = make_toy_task(seed, n_train, task_cfg)
        held = make_toy_task(seed + 10_000, n_eval, task_cfg)

        staged = build_toy_model(enc_cfg, task_cfg, seed=seed, projection_init="zeros")
        train_stage1(staged, train, stage1_cfg)
        staged_result = train_stage2(staged, train, stage2_cfg, eval_data=held)

        scratch = build_toy_model(enc_cfg, task_cfg, seed=seed, projection_init="zeros")
        scratch_result = train_stage2(scratch, train, stage2_cfg, eval_data=held)

        results.append(
            {
                "seed": seed,
                "two_stage_accuracy": staged_result.accuracy,
                "scratch_accuracy": scratch_result.accuracy,
                "two_stage_final_loss": staged_result.final_loss,
                "scratch_final_loss": scratch_result.final_loss,
            }
        )
    return results
