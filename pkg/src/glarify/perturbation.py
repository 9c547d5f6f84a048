"""Trace perturbation: spatial noise injection and temporal propagation.

Spatial samples (points on every keyframe) get exactly one keyframe's
trace replaced with points taken from another actor's or the background's
narration, chosen among word spans sharing no content word with the
sample's refer tag. Temporal samples (gaps present) get each empty
keyframe filled by copying the nearest occupied keyframe, earlier frame
winning ties. Ground truth is recorded both as per-point labels and as a
provenance record on the sample.

Both operations are deterministic functions of (sample, annotation, seed);
callers running data-parallel derive per-sample seeds as
``derive_seed(global_seed, video_id, actor_id, refer_tag)``.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .canonical import derive_seed
from .data_model import (
    BACKGROUND_ACTOR,
    LABEL_INJECTED,
    LABEL_PROPAGATED,
    LABEL_RELEVANT,
    REASONING_SPATIAL,
    REASONING_TEMPORAL,
    PerturbationRecord,
    QaSample,
    TracePoint,
    VideoAnnotation,
    WordSpan,
)
from .errors import DataError, PerturbationError
from .text import content_words


def classify_reasoning_type(sample: QaSample) -> str:
    """``spatial`` iff every keyframe of the sample has at least one point."""
    if not sample.keyframe_indices:
        raise DataError("sample has no keyframe_indices to classify")
    full = all(len(sample.trace[k]) > 0 for k in sample.keyframe_indices)
    return REASONING_SPATIAL if full else REASONING_TEMPORAL


def _eligible_sources(
    ann: VideoAnnotation, subject_actor_id: str, refer_tag: str
) -> list[tuple[str, WordSpan]]:
    """Word spans usable as irrelevant noise, in deterministic actor/span order.

    A span qualifies when it belongs to a different actor (background
    included), references at least one trace point, and its word shares no
    content word with the refer tag.
    """
    tag_words = content_words(refer_tag)
    out: list[tuple[str, WordSpan]] = []
    for actor in ann.actors:
        if actor.actor_id == subject_actor_id:
            continue
        for span in actor.word_spans:
            if not span.trace_point_indices:
                continue
            phrase = actor.narration[span.char_start:span.char_end]
            if content_words(phrase) & tag_words:
                continue
            out.append((actor.actor_id, span))
    return out


def _rescale_times(source_times: list[int], lo: int, hi: int) -> list[int]:
    """Map source timestamps linearly onto [lo, hi]; degenerate ranges collapse to lo."""
    smin, smax = min(source_times), max(source_times)
    if smax == smin or hi == lo:
        return [lo for _ in source_times]
    scale = (hi - lo) / (smax - smin)
    return [int(round(lo + (t - smin) * scale)) for t in source_times]


def inject_spatial_noise(sample: QaSample, ann: VideoAnnotation, seed: int) -> QaSample:
    """Replace one seeded-uniformly chosen keyframe's points with irrelevant ones.

    The replacement points take the source span's (x, y), are re-assigned to
    the corrupted keyframe, and are re-timestamped into that frame's
    original time range. Replaced points move into the provenance record.
    """
    if classify_reasoning_type(sample) != REASONING_SPATIAL:
        raise DataError("inject_spatial_noise requires a spatial sample")
    candidates = _eligible_sources(ann, sample.actor_id, sample.refer_tag)
    if not candidates:
        raise PerturbationError("no irrelevant source")

    rng = np.random.default_rng(seed)
    frame = int(sample.keyframe_indices[int(rng.integers(len(sample.keyframe_indices)))])
    source_actor_id, span = candidates[int(rng.integers(len(candidates)))]
    source_actor = ann.actor(source_actor_id)
    source_points = [source_actor.trace[i] for i in span.trace_point_indices]

    original = sample.trace[frame]
    times = _rescale_times(
        [p.time_ms for p in source_points],
        min(p.time_ms for p in original),
        max(p.time_ms for p in original),
    )
    injected = tuple(
        TracePoint(x=p.x, y=p.y, keyframe_index=frame, time_ms=t)
        for p, t in zip(source_points, times)
    )

    trace = dict(sample.trace)
    labels = dict(sample.trace_labels)
    trace[frame] = injected
    labels[frame] = tuple(LABEL_INJECTED for _ in injected)
    for k in sample.keyframe_indices:
        if k != frame:
            labels[k] = tuple(LABEL_RELEVANT for _ in trace[k])

    record = PerturbationRecord(
        kind=REASONING_SPATIAL,
        corrupted_keyframe=frame,
        source_actor_id=source_actor_id,
        source_char_start=span.char_start,
        source_char_end=span.char_end,
        original_points=original,
    )
    return replace(
        sample,
        trace=trace,
        trace_labels=labels,
        reasoning_type=REASONING_SPATIAL,
        perturbation=record,
    )


def nearest_occupied_frame(target: int, occupied: list[int]) -> int:
    """Occupied frame closest to target by index; ties prefer the earlier frame."""
    return min(occupied, key=lambda k: (abs(k - target), k))


def propagate_temporal(sample: QaSample, ann: VideoAnnotation) -> QaSample:
    """Fill each empty keyframe with a copy of the nearest occupied frame's points."""
    if classify_reasoning_type(sample) != REASONING_TEMPORAL:
        raise DataError("propagate_temporal requires a temporal sample")
    occupied = [k for k in sample.keyframe_indices if sample.trace[k]]
    if not occupied:
        raise PerturbationError("subject has no trace")

    trace = dict(sample.trace)
    labels = dict(sample.trace_labels)
    copied_from: dict[int, int] = {}
    for k in sample.keyframe_indices:
        if trace[k]:
            labels[k] = tuple(LABEL_RELEVANT for _ in trace[k])
            continue
        src = nearest_occupied_frame(k, occupied)
        copied_from[k] = src
        trace[k] = tuple(
            TracePoint(x=p.x, y=p.y, keyframe_index=k, time_ms=p.time_ms)
            for p in sample.trace[src]
        )
        labels[k] = tuple(LABEL_PROPAGATED for _ in trace[k])

    record = PerturbationRecord(kind=REASONING_TEMPORAL, copied_from=copied_from)
    return replace(
        sample,
        trace=trace,
        trace_labels=labels,
        reasoning_type=REASONING_TEMPORAL,
        perturbation=record,
    )


def perturb_sample(sample: QaSample, ann: VideoAnnotation, global_seed: int) -> QaSample:
    """Classify and apply the matching perturbation with a content-derived seed."""
    kind = classify_reasoning_type(sample)
    if kind == REASONING_SPATIAL:
        seed = derive_seed(global_seed, sample.video_id, sample.actor_id, sample.refer_tag)
        return inject_spatial_noise(sample, ann, seed)
    return propagate_temporal(sample, ann)
