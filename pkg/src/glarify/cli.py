"""Batch command-line interface.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 external-service error. Human-readable output goes to stdout,
diagnostics to stderr, machine-readable artifacts only to files, and all
randomness flows from --seed (default 0, never wall clock).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, fusion, heatmaps, pipeline, training
from .data_model import DatasetSplit, parse_annotations, read_dataset, write_dataset
from .errors import DataError, ExternalServiceError, GlarifyError
from .llm_client import HttpChatClient, ReplayChatClient
from .perturbation import perturb_sample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SERVICE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="glarify", description="Gaze-ambiguity QA dataset toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        return p

    p = add("ingest", "validate an annotation stream and print diagnostics")
    p.add_argument("--in", dest="input", required=True)

    p = add("synthesize", "run the full synthesis pipeline")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.add_argument("--config")
    p.add_argument("--transcript")
    p.add_argument("--split", choices=["training", "test"])
    p.add_argument("--model")

    p = add("perturb", "apply trace perturbation to a pre-perturbation dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = add("render", "render per-keyframe gaze heatmaps for a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--png", action="store_true")

    p = add("fuse", "emit visual, gaze, and fused tokens for one sample")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--sigma", type=float)
    p.add_argument("--proj-init", choices=["zeros", "random"], default="zeros")

    p = add("train", "run one stage of the two-stage toy protocol")
    p.add_argument("--stage", type=int, choices=[1, 2], required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--in", dest="input", help="stage-1 checkpoint (required for --stage 2)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-train", type=int, default=512)
    p.add_argument("--n-eval", type=int, default=256)

    p = add("analyze", "compute the irrelevant-gaze ratio curve")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--bins", type=int, default=20)

    p = add("sample", "draw a seeded evaluation subset from a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--n", type=int, required=True)

    p = add("judge", "judge responses against references (GPT-Accuracy)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--transcript")
    p.add_argument("--model", default="gpt-4o")

    p = add("stats", "render a stats file as a survival table")
    p.add_argument("--in", dest="input", required=True)

    return parser


def _client(transcript: str | None, model: str | None):
    if transcript:
        return ReplayChatClient(transcript)
    return HttpChatClient(model_name=model)


def _cmd_ingest(args) -> int:
    result = parse_annotations(args.input)
    for diag in result.diagnostics:
        print(f"line {diag.line_no}: {diag.message}", file=sys.stderr)
    n_actors = sum(len(a.actors) for a in result.annotations)
    n_points = sum(len(actor.trace) for a in result.annotations for actor in a.actors)
    print(
        f"parsed {len(result.annotations)} videos, {n_actors} actors, {n_points} trace points; "
        f"{len(result.diagnostics)} invalid lines"
    )
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    values: dict = {}
    if args.config:
        values.update(pipeline.parse_config_file(args.config))
    for key, flag in (
        ("input", args.input),
        ("output_dir", args.output),
        ("transcript", args.transcript),
        ("split", args.split),
        ("model", args.model),
    ):
        if flag is not None:
            values[key] = flag
    values.setdefault("seed", args.seed)
    values.setdefault("jobs", args.jobs)
    if "input" not in values or "output_dir" not in values:
        raise UsageError("synthesize requires --in and --out (or a config providing them)")
    config = pipeline.PipelineConfig.from_mapping(values)
    result = pipeline.run_pipeline(config)
    for diag in result.diagnostics:
        print(f"line {diag.line_no}: {diag.message}", file=sys.stderr)
    for err in result.client_errors:
        print(f"client error: {err}", file=sys.stderr)
    print(pipeline.render_stats_table(result.stats))
    print(f"dataset: {result.dataset_path}")
    print(f"stats:   {result.stats_path}")
    print(f"drops:   {result.drops_path}")
    return EXIT_OK


def _cmd_perturb(args) -> int:
    split = read_dataset(args.input)
    ann_by_id = {a.video_id: a for a in parse_annotations(args.ann).annotations}
    kept = []
    dropped = 0
    for sample in split.samples:
        ann = ann_by_id.get(sample.video_id)
        if ann is None:
            print(f"drop {sample.key()}: annotation missing", file=sys.stderr)
            dropped += 1
            continue
        try:
            kept.append(perturb_sample(sample, ann, args.seed))
        except DataError as exc:
            print(f"drop {sample.key()}: {exc}", file=sys.stderr)
            dropped += 1
    write_dataset(DatasetSplit(split.split_name, tuple(kept)), args.output)
    print(f"perturbed {len(kept)} samples, dropped {dropped}")
    return EXIT_OK


def _cmd_render(args) -> int:
    split = read_dataset(args.input)
    ann_by_id = {a.video_id: a for a in parse_annotations(args.ann).annotations}
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for i, sample in enumerate(split.samples):
        ann = ann_by_id.get(sample.video_id)
        if ann is None:
            raise DataError(f"annotation missing for video {sample.video_id!r}")
        for k in sample.keyframe_indices:
            frame = ann.keyframes[k]
            sigma = args.sigma if args.sigma else heatmaps.default_sigma(frame.width, frame.height)
            hm = heatmaps.render_heatmap(sample.trace[k], frame.width, frame.height, sigma, keyframe_index=k)
            stem = f"sample{i:05d}_k{k}"
            heatmaps.write_heatmap_glhm(hm, out_dir / f"{stem}.glhm")
            if args.png:
                heatmaps.export_heatmap_png(hm, out_dir / f"{stem}.png")
            written += 1
    print(f"rendered {written} heatmaps for {len(split.samples)} samples into {out_dir}")
    return EXIT_OK


def _load_frames(ann, sample, ann_dir: Path) -> np.ndarray:
    from PIL import Image

    frames = []
    for k in sample.keyframe_indices:
        ref = ann.keyframes[k]
        path = Path(ref.path)
        if not path.is_absolute():
            path = ann_dir / path
        if not path.exists():
            raise DataError(f"keyframe image not found: {path}")
        img = Image.open(path).convert("L")
        if img.size != (ref.width, ref.height):
            raise DataError(f"keyframe {path} is {img.size}, annotation says {(ref.width, ref.height)}")
        frames.append(np.asarray(img, dtype=np.float64)[None, :, :] / 255.0)
    return np.stack(frames, axis=0)


def _cmd_fuse(args) -> int:
    split = read_dataset(args.input)
    if not (0 <= args.index < len(split.samples)):
        raise DataError(f"sample index {args.index} outside dataset of {len(split.samples)}")
    sample = split.samples[args.index]
    ann_by_id = {a.video_id: a for a in parse_annotations(args.ann).annotations}
    ann = ann_by_id.get(sample.video_id)
    if ann is None:
        raise DataError(f"annotation missing for video {sample.video_id!r}")

    frames = _load_frames(ann, sample, Path(args.ann).parent)
    t, _, h, w = frames.shape
    sigma = args.sigma if args.sigma else heatmaps.default_sigma(w, h)
    maps = np.stack(
        [
            heatmaps.render_heatmap(sample.trace[k], w, h, sigma, keyframe_index=k).grid[None, :, :]
            for k in sample.keyframe_indices
        ],
        axis=0,
    )

    cfg = fusion.EncoderConfig(patch_side=args.patch, dim=args.dim, depth=args.depth, head_count=args.heads, seed=args.seed)
    x = heatmaps.patchify(frames, args.patch)
    g = heatmaps.patchify(maps, args.patch)
    params = fusion.init_encoder_params(cfg, t, x.grid_h, x.grid_w, channels=1)
    if args.proj_init == "zeros":
        proj = fusion.GazeProjection.zeros(args.patch, args.dim)
    else:
        proj = fusion.GazeProjection.random(args.patch, args.dim, np.random.default_rng(args.seed))

    visual = fusion.encode_frames(x, cfg, params)
    gaze = fusion.project_gaze(g, proj)
    fused = fusion.fuse(visual, gaze)
    fusion.save_checkpoint({"visual": visual.data, "gaze": gaze.data, "fused": fused.data}, args.output)
    preserved = bool(np.array_equal(fused.data, visual.data))
    print(
        f"sample {args.index}: {t} frames -> tokens {visual.data.shape}; "
        f"zero-gaze preservation: {preserved}"
    )
    print(f"tokens written to {args.output}")
    return EXIT_OK


def _cmd_train(args) -> int:
    task_cfg = training.TaskConfig()
    enc_cfg = fusion.EncoderConfig(patch_side=task_cfg.patch_side, dim=16, depth=1, head_count=2, seed=args.seed)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = training.make_toy_task(args.seed, args.n_train, task_cfg)

    if args.stage == 1:
        cfg = training.TrainConfig(learning_rate=args.lr or 0.05, epochs=args.epochs or 1, batch_size=2)
        model = training.build_toy_model(enc_cfg, task_cfg, seed=args.seed, projection_init="zeros")
        result = training.train_stage1(model, data, cfg)
    else:
        if not args.input:
            raise UsageError("--stage 2 requires --in pointing at a stage-1 checkpoint")
        cfg = training.TrainConfig(
            learning_rate=args.lr or 0.1, epochs=args.epochs or 2, batch_size=2, lr_decay=0.002
        )
        model = training.build_toy_model(enc_cfg, task_cfg, seed=args.seed, projection_init="zeros")
        model.load_tensors(fusion.load_checkpoint(args.input))
        eval_data = training.make_toy_task(args.seed + 10_000, args.n_eval, task_cfg)
        result = training.train_stage2(model, data, cfg, eval_data=eval_data)

    from .canonical import atomic_write_text, canonical_json, quantize

    metrics_path = out_dir / f"stage{args.stage}_metrics.jsonl"
    lines = [
        canonical_json(
            {
                "stage": r.stage,
                "step": r.step,
                "loss": quantize(r.loss),
                "accuracy": None if r.accuracy is None else quantize(r.accuracy),
            }
        )
        for r in result.steps
    ]
    atomic_write_text(metrics_path, "".join(line + "\n" for line in lines))
    ckpt_path = out_dir / f"stage{args.stage}.ckpt"
    fusion.save_checkpoint(model.to_tensors(), ckpt_path)

    print(f"stage {args.stage}: loss {result.initial_loss:.4f} -> {result.final_loss:.4f} over {len(result.steps)} steps")
    if result.accuracy is not None:
        print(f"held-out accuracy: {result.accuracy:.4f}")
    print(f"frozen parameters intact: {result.frozen_intact}")
    print(f"metrics: {metrics_path}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    fixations = analysis.read_fixations(args.input)
    curve = analysis.irrelevant_ratio(fixations, args.bins)
    analysis.write_ratio_curve(curve, args.output)
    print(analysis.curve_table(curve))
    print(f"curve written to {args.output}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    split = read_dataset(args.input)
    subset = analysis.sample_eval_set(split, args.n, args.seed)
    write_dataset(subset, args.output)
    print(f"sampled {len(subset.samples)} of {len(split.samples)} samples into {args.output}")
    return EXIT_OK


def _cmd_judge(args) -> int:
    items = analysis.read_judge_items(args.input)
    client = _client(args.transcript, args.model)
    report = analysis.judge_accuracy(items, client, args.model)
    from .canonical import atomic_write_text, canonical_json

    lines = [
        canonical_json({"index": i, "verdict": verdict}) for i, verdict in enumerate(report.verdicts)
    ]
    atomic_write_text(args.output, "".join(line + "\n" for line in lines))
    if report.errors:
        print(f"{report.errors} items excluded after judge parse failures", file=sys.stderr)
    if report.aggregate is None:
        print("no judged items")
    else:
        print(f"aligned {report.aligned}/{report.judged} ({report.aggregate * 100:.2f}%)")
    print(f"verdicts written to {args.output}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    stats = pipeline.read_stats(args.input)
    print(pipeline.render_stats_table(stats))
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synthesize": _cmd_synthesize,
    "perturb": _cmd_perturb,
    "render": _cmd_render,
    "fuse": _cmd_fuse,
    "train": _cmd_train,
    "analyze": _cmd_analyze,
    "sample": _cmd_sample,
    "judge": _cmd_judge,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ExternalServiceError as exc:
        print(f"external service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except GlarifyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
