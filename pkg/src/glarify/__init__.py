"""Desk-scale toolkit for gaze-ambiguity QA synthesis and fusion validation."""

__version__ = "0.1.0"

from .data_model import (
    ActorNarration,
    DatasetSplit,
    Keyframe,
    QaSample,
    TracePoint,
    VideoAnnotation,
    WordSpan,
    parse_annotations,
    read_dataset,
    trace_for_span,
    write_dataset,
)
from .heatmaps import GazeHeatmap, PatchGrid, patchify, render_heatmap, unpatchify
from .perturbation import classify_reasoning_type, inject_spatial_noise, propagate_temporal
from .fusion import EncoderConfig, GazeProjection, TokenGrid, encode_frames, fuse, param_ratio, project_gaze
from .analysis import LabeledFixation, RatioCurve, irrelevant_ratio, judge_accuracy, sample_eval_set
from .pipeline import PipelineConfig, compute_survival_rate, run_pipeline
from .llm_client import ChatRequest, ChatResponse, ReplayChatClient, extract_json_block

__all__ = [
    "ActorNarration",
    "ChatRequest",
    "ChatResponse",
    "DatasetSplit",
    "EncoderConfig",
    "GazeHeatmap",
    "GazeProjection",
    "Keyframe",
    "LabeledFixation",
    "PatchGrid",
    "PipelineConfig",
    "QaSample",
    "RatioCurve",
    "ReplayChatClient",
    "TokenGrid",
    "TracePoint",
    "VideoAnnotation",
    "WordSpan",
    "classify_reasoning_type",
    "compute_survival_rate",
    "encode_frames",
    "extract_json_block",
    "fuse",
    "inject_spatial_noise",
    "irrelevant_ratio",
    "judge_accuracy",
    "param_ratio",
    "parse_annotations",
    "patchify",
    "project_gaze",
    "propagate_temporal",
    "read_dataset",
    "render_heatmap",
    "run_pipeline",
    "sample_eval_set",
    "trace_for_span",
    "unpatchify",
    "write_dataset",
]
