"""Domain types and artifact serialization.

Two line-delimited JSON artifact families live here:

* annotation input, schema ``glarify-ann/1`` — one video per line: keyframe
  references plus per-actor narrations whose words are aligned to
  normalized trace points;
* dataset output, schema ``glarify-ds/1`` — one QA sample per line,
  carrying the perturbed per-keyframe traces, ground-truth point labels,
  perturbation provenance, and the optional rationale text.

All coordinates are normalized to [0, 1] with origin at the top-left and
are quantized to 6 decimal digits at construction, which is exactly the
precision of the canonical wire format; ``read(write(x)) == x`` therefore
holds for every constructible value. Types are immutable after
construction and safe to share across workers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, TextIO

from .canonical import atomic_write_text, canonical_json, quantize
from .errors import DataError, SchemaError

ANN_SCHEMA = "glarify-ann/1"
DS_SCHEMA = "glarify-ds/1"

LABEL_RELEVANT = "relevant"
LABEL_INJECTED = "injected_irrelevant"
LABEL_PROPAGATED = "propagated"
TRACE_LABELS = (LABEL_RELEVANT, LABEL_INJECTED, LABEL_PROPAGATED)

REASONING_SPATIAL = "spatial"
REASONING_TEMPORAL = "temporal"

SPLIT_NAMES = ("training", "test")

BACKGROUND_ACTOR = "background"


@dataclass(frozen=True)
class TracePoint:
    """One attention sample: where the pointer was, on which keyframe, when."""

    x: float
    y: float
    keyframe_index: int
    time_ms: int

    def __post_init__(self):
        object.__setattr__(self, "x", quantize(self.x))
        object.__setattr__(self, "y", quantize(self.y))
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise DataError(f"coordinate out of range: ({self.x}, {self.y})")
        if not isinstance(self.keyframe_index, int) or self.keyframe_index < 0:
            raise DataError(f"keyframe_index must be a non-negative int, got {self.keyframe_index!r}")
        if not isinstance(self.time_ms, int) or self.time_ms < 0:
            raise DataError(f"time_ms must be a non-negative int, got {self.time_ms!r}")

    def to_record(self) -> dict:
        return {"x": self.x, "y": self.y, "keyframe_index": self.keyframe_index, "time_ms": self.time_ms}

    @staticmethod
    def from_record(rec: Mapping) -> "TracePoint":
        try:
            return TracePoint(
                x=float(rec["x"]),
                y=float(rec["y"]),
                keyframe_index=int(rec["keyframe_index"]),
                time_ms=int(rec["time_ms"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad trace point record: {exc}") from exc


@dataclass(frozen=True)
class WordSpan:
    """Half-open character range of one narration word and the trace points aligned to it."""

    char_start: int
    char_end: int
    trace_point_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "trace_point_indices", tuple(int(i) for i in self.trace_point_indices))
        if not (0 <= self.char_start < self.char_end):
            raise DataError(f"word span range invalid: [{self.char_start}, {self.char_end})")
        idx = self.trace_point_indices
        if any(i < 0 for i in idx):
            raise DataError("trace point index negative")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("trace point indices must be strictly increasing")

    def to_record(self) -> dict:
        return {
            "char_start": self.char_start,
            "char_end": self.char_end,
            "trace_point_indices": list(self.trace_point_indices),
        }

    @staticmethod
    def from_record(rec: Mapping) -> "WordSpan":
        try:
            return WordSpan(
                char_start=int(rec["char_start"]),
                char_end=int(rec["char_end"]),
                trace_point_indices=tuple(int(i) for i in rec["trace_point_indices"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad word span record: {exc}") from exc


@dataclass(frozen=True)
class ActorNarration:
    """One actor's narration text, word-level spans, and full trace.

    The reserved actor_id ``background`` marks the background narration;
    it uses the same alignment schema as every other actor.
    """

    actor_id: str
    narration: str
    word_spans: tuple[WordSpan, ...]
    trace: tuple[TracePoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "word_spans", tuple(self.word_spans))
        object.__setattr__(self, "trace", tuple(self.trace))
        if not self.actor_id:
            raise DataError("actor_id must be non-empty")
        prev_end = -1
        for span in self.word_spans:
            if span.char_start < prev_end:
                raise DataError(f"word spans overlap or are out of order near offset {span.char_start}")
            prev_end = span.char_end
            if span.char_end > len(self.narration):
                raise DataError(f"word span [{span.char_start}, {span.char_end}) exceeds narration length")
            for idx in span.trace_point_indices:
                if idx >= len(self.trace):
                    raise DataError(f"word span references missing trace point {idx}")

    def to_record(self) -> dict:
        return {
            "actor_id": self.actor_id,
            "narration": self.narration,
            "word_spans": [s.to_record() for s in self.word_spans],
            "trace": [p.to_record() for p in self.trace],
        }

    @staticmethod
    def from_record(rec: Mapping) -> "ActorNarration":
        try:
            return ActorNarration(
                actor_id=str(rec["actor_id"]),
                narration=str(rec["narration"]),
                word_spans=tuple(WordSpan.from_record(s) for s in rec["word_spans"]),
                trace=tuple(TracePoint.from_record(p) for p in rec["trace"]),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad actor record: {exc}") from exc


@dataclass(frozen=True)
class Keyframe:
    """Reference to one extracted frame image; pixels are never loaded here."""

    path: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"keyframe size must be positive, got {self.width}x{self.height}")

    def to_record(self) -> dict:
        return {"path": self.path, "width": self.width, "height": self.height}

    @staticmethod
    def from_record(rec: Mapping) -> "Keyframe":
        try:
            return Keyframe(path=str(rec["path"]), width=int(rec["width"]), height=int(rec["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad keyframe record: {exc}") from exc


@dataclass(frozen=True)
class VideoAnnotation:
    """A video's keyframes plus its per-actor narrations and traces."""

    video_id: str
    keyframes: tuple[Keyframe, ...]
    actors: tuple[ActorNarration, ...]

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        object.__setattr__(self, "actors", tuple(self.actors))
        if not self.video_id:
            raise DataError("video_id must be non-empty")
        if not self.keyframes:
            raise DataError("video must have at least one keyframe")
        ids = [a.actor_id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate actor_id in video {self.video_id!r}")
        if ids.count(BACKGROUND_ACTOR) > 1:
            raise DataError("at most one background narration allowed")
        n_frames = len(self.keyframes)
        for actor in self.actors:
            for pt in actor.trace:
                if pt.keyframe_index >= n_frames:
                    raise DataError(
                        f"trace point keyframe_index {pt.keyframe_index} out of range "
                        f"for video {self.video_id!r} with {n_frames} keyframes"
                    )

    def actor(self, actor_id: str) -> ActorNarration:
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        raise DataError(f"actor not found: {actor_id!r}")

    def to_record(self) -> dict:
        return {
            "schema": ANN_SCHEMA,
            "video_id": self.video_id,
            "keyframes": [k.to_record() for k in self.keyframes],
            "actors": [a.to_record() for a in self.actors],
        }

    @staticmethod
    def from_record(rec: Mapping) -> "VideoAnnotation":
        schema = rec.get("schema")
        if schema != ANN_SCHEMA:
            raise SchemaError(ANN_SCHEMA, str(schema))
        try:
            return VideoAnnotation(
                video_id=str(rec["video_id"]),
                keyframes=tuple(Keyframe.from_record(k) for k in rec["keyframes"]),
                actors=tuple(ActorNarration.from_record(a) for a in rec["actors"]),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad annotation record: {exc}") from exc


@dataclass(frozen=True)
class PerturbationRecord:
    """Ground-truth provenance of what a perturbation changed."""

    kind: str
    corrupted_keyframe: int | None = None
    source_actor_id: str | None = None
    source_char_start: int | None = None
    source_char_end: int | None = None
    original_points: tuple[TracePoint, ...] = ()
    copied_from: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "original_points", tuple(self.original_points))
        object.__setattr__(self, "copied_from", {int(k): int(v) for k, v in dict(self.copied_from).items()})
        if self.kind == REASONING_SPATIAL:
            if self.corrupted_keyframe is None or self.source_actor_id is None:
                raise DataError("spatial perturbation record needs corrupted_keyframe and source_actor_id")
        elif self.kind == REASONING_TEMPORAL:
            if not self.copied_from:
                raise DataError("temporal perturbation record needs copied_from entries")
        else:
            raise DataError(f"unknown perturbation kind: {self.kind!r}")

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "corrupted_keyframe": self.corrupted_keyframe,
            "source_actor_id": self.source_actor_id,
            "source_char_start": self.source_char_start,
            "source_char_end": self.source_char_end,
            "original_points": [p.to_record() for p in self.original_points],
            "copied_from": [[k, v] for k, v in sorted(self.copied_from.items())],
        }

    @staticmethod
    def from_record(rec: Mapping) -> "PerturbationRecord":
        try:
            return PerturbationRecord(
                kind=str(rec["kind"]),
                corrupted_keyframe=None if rec["corrupted_keyframe"] is None else int(rec["corrupted_keyframe"]),
                source_actor_id=rec["source_actor_id"],
                source_char_start=None if rec["source_char_start"] is None else int(rec["source_char_start"]),
                source_char_end=None if rec["source_char_end"] is None else int(rec["source_char_end"]),
                original_points=tuple(TracePoint.from_record(p) for p in rec["original_points"]),
                copied_from={int(k): int(v) for k, v in rec["copied_from"]},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad perturbation record: {exc}") from exc


@dataclass(frozen=True)
class QaSample:
    """One dataset entry: a QA pair plus its per-keyframe labeled trace.

    `trace` and `trace_labels` are parallel mappings keyed by keyframe
    index; every index listed in `keyframe_indices` has an entry, possibly
    empty before perturbation. Label invariants only bind once a
    `perturbation` record is present.
    """

    video_id: str
    actor_id: str
    refer_tag: str
    direct_question: str
    indirect_question: str
    answer: str
    keyframe_indices: tuple[int, ...]
    trace: Mapping[int, tuple[TracePoint, ...]]
    trace_labels: Mapping[int, tuple[str, ...]]
    reasoning_type: str | None = None
    cot: str | None = None
    perturbation: PerturbationRecord | None = None
    eval_use_indirect: bool = False

    def __post_init__(self):
        object.__setattr__(self, "keyframe_indices", tuple(int(k) for k in self.keyframe_indices))
        object.__setattr__(self, "trace", {int(k): tuple(v) for k, v in dict(self.trace).items()})
        object.__setattr__(self, "trace_labels", {int(k): tuple(v) for k, v in dict(self.trace_labels).items()})
        self._validate()

    def _validate(self):
        ks = self.keyframe_indices
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise DataError("keyframe_indices must be strictly increasing")
        if set(self.trace) != set(ks) or set(self.trace_labels) != set(ks):
            raise DataError("trace and trace_labels must cover exactly the sample's keyframe_indices")
        for k in ks:
            pts, labels = self.trace[k], self.trace_labels[k]
            if len(pts) != len(labels):
                raise DataError(f"trace and trace_labels length mismatch on keyframe {k}")
            for pt in pts:
                if pt.keyframe_index != k:
                    raise DataError(f"point assigned to keyframe {pt.keyframe_index} stored under {k}")
            for lab in labels:
                if lab not in TRACE_LABELS:
                    raise DataError(f"unknown trace label: {lab!r}")
        if self.reasoning_type not in (None, REASONING_SPATIAL, REASONING_TEMPORAL):
            raise DataError(f"unknown reasoning_type: {self.reasoning_type!r}")
        if self.perturbation is not None:
            injected_frames = {
                k for k in ks if any(lab == LABEL_INJECTED for lab in self.trace_labels[k])
            }
            has_propagated = any(LABEL_PROPAGATED in self.trace_labels[k] for k in ks)
            if self.reasoning_type == REASONING_SPATIAL:
                if len(injected_frames) != 1:
                    raise DataError("spatial sample must have exactly one injected keyframe after perturbation")
                (frame,) = injected_frames
                if any(lab != LABEL_INJECTED for lab in self.trace_labels[frame]):
                    raise DataError("injected keyframe must carry only injected_irrelevant labels")
            elif self.reasoning_type == REASONING_TEMPORAL:
                if injected_frames:
                    raise DataError("temporal sample must not carry injected_irrelevant labels")
                if not has_propagated:
                    raise DataError("perturbed temporal sample must carry at least one propagated point")

    def key(self) -> tuple[str, str, str]:
        return (self.video_id, self.actor_id, self.refer_tag)

    def points(self) -> Iterator[TracePoint]:
        for k in self.keyframe_indices:
            yield from self.trace[k]

    def to_record(self, split_name: str) -> dict:
        return {
            "schema": DS_SCHEMA,
            "split": split_name,
            "video_id": self.video_id,
            "actor_id": self.actor_id,
            "refer_tag": self.refer_tag,
            "direct_question": self.direct_question,
            "indirect_question": self.indirect_question,
            "answer": self.answer,
            "reasoning_type": self.reasoning_type,
            "keyframe_indices": list(self.keyframe_indices),
            "trace": [[p.to_record() for p in self.trace[k]] for k in self.keyframe_indices],
            "trace_labels": [list(self.trace_labels[k]) for k in self.keyframe_indices],
            "cot": self.cot,
            "perturbation": None if self.perturbation is None else self.perturbation.to_record(),
            "eval_use_indirect": self.eval_use_indirect,
        }

    @staticmethod
    def from_record(rec: Mapping) -> "QaSample":
        schema = rec.get("schema")
        if schema != DS_SCHEMA:
            raise SchemaError(DS_SCHEMA, str(schema))
        try:
            ks = tuple(int(k) for k in rec["keyframe_indices"])
            trace = {
                k: tuple(TracePoint.from_record(p) for p in pts)
                for k, pts in zip(ks, rec["trace"])
            }
            labels = {k: tuple(str(lab) for lab in labs) for k, labs in zip(ks, rec["trace_labels"])}
            if len(rec["trace"]) != len(ks) or len(rec["trace_labels"]) != len(ks):
                raise DataError("trace arrays not parallel to keyframe_indices")
            return QaSample(
                video_id=str(rec["video_id"]),
                actor_id=str(rec["actor_id"]),
                refer_tag=str(rec["refer_tag"]),
                direct_question=str(rec["direct_question"]),
                indirect_question=str(rec["indirect_question"]),
                answer=str(rec["answer"]),
                keyframe_indices=ks,
                trace=trace,
                trace_labels=labels,
                reasoning_type=rec["reasoning_type"],
                cot=rec["cot"],
                perturbation=None if rec["perturbation"] is None else PerturbationRecord.from_record(rec["perturbation"]),
                eval_use_indirect=bool(rec.get("eval_use_indirect", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad QA sample record: {exc}") from exc


@dataclass(frozen=True)
class DatasetSplit:
    """A named split of QA samples, unique by (video_id, actor_id, refer_tag)."""

    split_name: str
    samples: tuple[QaSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.split_name not in SPLIT_NAMES:
            raise DataError(f"split_name must be one of {SPLIT_NAMES}, got {self.split_name!r}")
        seen = set()
        for s in self.samples:
            k = s.key()
            if k in seen:
                raise DataError(f"duplicate sample key {k}")
            seen.add(k)


@dataclass(frozen=True)
class Diagnostic:
    """One non-fatal parse problem, attached to its input line."""

    line_no: int
    message: str


@dataclass(frozen=True)
class ParseResult:
    annotations: tuple[VideoAnnotation, ...]
    diagnostics: tuple[Diagnostic, ...]


def _iter_lines(stream) -> Iterator[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from stream


def parse_annotations(stream: Iterable[str] | str | Path) -> ParseResult:
    """Parse line-delimited ``glarify-ann/1`` records in input order.

    Invalid lines never abort the stream: each one yields a Diagnostic with
    its 1-based line number and cause, and the record is skipped. A
    duplicate video_id skips the later record.
    """
    annotations: list[VideoAnnotation] = []
    diagnostics: list[Diagnostic] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            diagnostics.append(Diagnostic(line_no, f"invalid JSON: {exc.msg} at column {exc.colno}"))
            continue
        if not isinstance(rec, dict):
            diagnostics.append(Diagnostic(line_no, "record is not an object"))
            continue
        try:
            ann = VideoAnnotation.from_record(rec)
        except DataError as exc:
            diagnostics.append(Diagnostic(line_no, str(exc)))
            continue
        if ann.video_id in seen_ids:
            diagnostics.append(Diagnostic(line_no, f"duplicate video_id {ann.video_id!r}"))
            continue
        seen_ids.add(ann.video_id)
        annotations.append(ann)
    return ParseResult(tuple(annotations), tuple(diagnostics))


def trace_for_span(
    ann: VideoAnnotation, actor_id: str, char_start: int, char_end: int
) -> dict[int, tuple[TracePoint, ...]]:
    """Trace points of every word span overlapping [char_start, char_end).

    Returns one group per video keyframe (empty tuples included), each
    group ordered by time. A range overlapping no span yields all-empty
    groups; an unknown actor is an error.
    """
    actor = ann.actor(actor_id)
    picked: set[int] = set()
    for span in actor.word_spans:
        if span.char_start < char_end and char_start < span.char_end:
            picked.update(span.trace_point_indices)
    groups: dict[int, list[TracePoint]] = {k: [] for k in range(len(ann.keyframes))}
    for idx in sorted(picked):
        pt = actor.trace[idx]
        groups[pt.keyframe_index].append(pt)
    for k in groups:
        groups[k].sort(key=lambda p: p.time_ms)
    return {k: tuple(v) for k, v in groups.items()}


def dataset_lines(split: DatasetSplit) -> list[str]:
    """Canonical serialized lines for a split (no trailing newline per entry)."""
    return [canonical_json(s.to_record(split.split_name)) for s in split.samples]


def write_dataset(split: DatasetSplit, sink: str | Path | TextIO) -> None:
    """Write a split as canonical ``glarify-ds/1`` JSON Lines.

    The full payload is serialized (and therefore validated) before any
    byte is emitted; path sinks are written atomically.
    """
    DatasetSplit(split.split_name, split.samples)  # re-check invariants defensively
    payload = "".join(line + "\n" for line in dataset_lines(split))
    if isinstance(sink, (str, Path)):
        atomic_write_text(sink, payload)
    else:
        sink.write(payload)


def read_dataset(
    source: Iterable[str] | str | Path, *, split_name_if_empty: str | None = None
) -> DatasetSplit:
    """Read a ``glarify-ds/1`` JSON Lines split; schema mismatches raise.

    Every line carries the split name, so a zero-line stream is readable
    only when the caller supplies `split_name_if_empty`.
    """
    samples: list[QaSample] = []
    split_name: str | None = None
    for line_no, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
        sample = QaSample.from_record(rec)
        line_split = str(rec.get("split"))
        if split_name is None:
            split_name = line_split
        elif split_name != line_split:
            raise DataError(f"line {line_no}: split changed from {split_name!r} to {line_split!r}")
        samples.append(sample)
    if split_name is None:
        if split_name_if_empty is None:
            raise DataError("dataset stream is empty: no split to read")
        split_name = split_name_if_empty
    return DatasetSplit(split_name, tuple(samples))
