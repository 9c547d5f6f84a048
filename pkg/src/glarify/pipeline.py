"""End-to-end QA synthesis: generation, trace attachment, perturbation,
rationale generation, and per-stage survival accounting.

Stage accounting follows the three-stage ledger the dataset ships with:
``generate_qa`` (raw = 3 contracted questions per completed model call,
kept = questions that validate and attach to a trace), ``modify_trace``
(kept = samples a perturbation succeeded on, now typed spatial/temporal),
and ``generate_cot`` (kept = samples with a non-empty rationale). Every
dropped sample is persisted with an enumerated reason.

All model calls go through the pluggable chat client, so a replay
transcript plus a fixed seed makes the whole run a pure function of its
inputs; actor-level tasks may run in parallel and are reduced in input
order, which keeps outputs byte-identical across worker counts.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .canonical import atomic_write_text, canonical_json, quantize
from .data_model import (
    BACKGROUND_ACTOR,
    LABEL_RELEVANT,
    REASONING_SPATIAL,
    DatasetSplit,
    Diagnostic,
    QaSample,
    VideoAnnotation,
    dataset_lines,
    parse_annotations,
    trace_for_span,
)
from .errors import DataError, ExternalServiceError, StructuredOutputError
from .llm_client import (
    DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
    ChatClient,
    ChatRequest,
    extract_json_block,
)
from .perturbation import perturb_sample
from .prompts import load_template, render_template
from .text import content_words, tokenize

STATS_SCHEMA = "glarify-stats/1"

STAGE_GENERATE_QA = "generate_qa"
STAGE_MODIFY_TRACE = "modify_trace"
STAGE_GENERATE_COT = "generate_cot"

STAGE_TITLES = {
    STAGE_GENERATE_QA: "Generate QA pairs",
    STAGE_MODIFY_TRACE: "Modify Trace Data",
    STAGE_GENERATE_COT: "Generate CoT",
}

QUESTIONS_PER_ACTOR = 3

_TAG_RE = re.compile(r"</?Q(\d+)>")


@dataclass(frozen=True)
class QaQuestion:
    number: int
    refer_tag_raw: str
    direct_question: str
    indirect_question: str
    answer: str

    @property
    def refer_tag(self) -> str:
        return _TAG_RE.sub("", self.refer_tag_raw)


@dataclass(frozen=True)
class QaDraft:
    """One parsed model response: the tagged narration and its questions."""

    refer_content: str
    questions: tuple[QaQuestion, ...]


@dataclass(frozen=True)
class DropRecord:
    stage: str
    video_id: str
    actor_id: str
    refer_tag: str
    reason: str

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "video_id": self.video_id,
            "actor_id": self.actor_id,
            "refer_tag": self.refer_tag,
            "reason": self.reason,
        }


def strip_question_tags(refer_content: str) -> tuple[str, dict[int, tuple[int, int]]]:
    """Remove <Q#></Q#> tags, returning the plain text and each tag's
    half-open character range in plain-text coordinates.

    Raises DataError when any tag number opens or closes more than once,
    closes before opening, or never closes.
    """
    opened: dict[int, int] = {}
    ranges: dict[int, tuple[int, int]] = {}
    plain: list[str] = []
    cursor = 0
    plain_len = 0
    for match in _TAG_RE.finditer(refer_content):
        chunk = refer_content[cursor : match.start()]
        plain.append(chunk)
        plain_len += len(chunk)
        cursor = match.end()
        number = int(match.group(1))
        closing = match.group(0).startswith("</")
        if closing:
            if number in ranges:
                raise DataError(f"tag Q{number} closed twice")
            if number not in opened:
                raise DataError(f"tag Q{number} closed before opening")
            ranges[number] = (opened.pop(number), plain_len)
        else:
            if number in opened or number in ranges:
                raise DataError(f"tag Q{number} opened twice")
            opened[number] = plain_len
    if opened:
        raise DataError(f"tag Q{sorted(opened)[0]} never closed")
    plain.append(refer_content[cursor:])
    return "".join(plain), ranges


def parse_qa_response(text: str) -> QaDraft:
    """Parse a structured QA completion into a draft; shape errors raise."""
    value = extract_json_block(text)
    if not isinstance(value, dict):
        raise DataError("QA response is not an object")
    try:
        refer_content = str(value["refer_content"])
        pairs = value["qa_pairs"]
        if not isinstance(pairs, list):
            raise DataError("qa_pairs is not a list")
        questions = tuple(
            QaQuestion(
                number=i + 1,
                refer_tag_raw=str(pair["refer_tag"]),
                direct_question=str(pair["direct_question"]),
                indirect_question=str(pair["indirect_question"]),
                answer=str(pair["answer"]),
            )
            for i, pair in enumerate(pairs)
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"QA response missing field: {exc}") from exc
    return QaDraft(refer_content=refer_content, questions=questions)


def validate_qa_draft(draft: QaDraft, narration: str) -> str | None:
    """None when the draft passes every filter, else the drop reason."""
    if len(draft.questions) != QUESTIONS_PER_ACTOR:
        return "question count"
    try:
        stripped, ranges = strip_question_tags(draft.refer_content)
    except DataError:
        return "tag structure"
    if set(ranges) != {1, 2, 3}:
        return "tag structure"
    if stripped != narration:
        return "tag reconstruction mismatch"
    for q in draft.questions:
        if not (q.refer_tag.strip() and q.direct_question.strip() and q.indirect_question.strip() and q.answer.strip()):
            return "empty field"
    for q in draft.questions:
        tag_words = content_words(q.refer_tag, min_length=3)
        if tag_words & set(tokenize(q.indirect_question)):
            return "not ambiguous"
    return None


def qa_request(
    ann: VideoAnnotation,
    actor_id: str,
    model_name: str = "gpt-4o",
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ChatRequest:
    background = " ".join(a.narration for a in ann.actors)
    return ChatRequest(
        system_prompt=load_template("qa_system"),
        user_content=render_template(
            "qa_user", background_info=background, referable_sentence=ann.actor(actor_id).narration
        ),
        image_refs=tuple(k.path for k in ann.keyframes),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        model_name=model_name,
    )


@dataclass(frozen=True)
class QaGenResult:
    drafts: tuple[QaDraft, ...]
    raw_questions: int
    drops: tuple[DropRecord, ...]
    client_error: str | None = None


def generate_qa(
    ann: VideoAnnotation,
    actor_id: str,
    client: ChatClient,
    model_name: str = "gpt-4o",
    temperature: float = DEFAULT_TEMPERATURE,
) -> QaGenResult:
    """Request, parse, and validate QA drafts for one non-background actor.

    Raw question accounting is 3 per completed call (the contracted count);
    a client failure contributes nothing raw and is reported separately.
    """
    if actor_id == BACKGROUND_ACTOR:
        raise DataError("QA pairs are not generated for the background narration")
    narration = ann.actor(actor_id).narration
    try:
        response = client.complete(qa_request(ann, actor_id, model_name, temperature))
    except ExternalServiceError as exc:
        return QaGenResult(drafts=(), raw_questions=0, drops=(), client_error=str(exc))
    raw = QUESTIONS_PER_ACTOR
    try:
        draft = parse_qa_response(response.text)
    except (StructuredOutputError, DataError) as exc:
        reason = "no structured block" if isinstance(exc, StructuredOutputError) else f"response shape: {exc}"
        drop = DropRecord(STAGE_GENERATE_QA, ann.video_id, actor_id, "", reason)
        return QaGenResult(drafts=(), raw_questions=raw, drops=(drop,))
    reason = validate_qa_draft(draft, narration)
    if reason is not None:
        drop = DropRecord(STAGE_GENERATE_QA, ann.video_id, actor_id, "", reason)
        return QaGenResult(drafts=(), raw_questions=raw, drops=(drop,))
    return QaGenResult(drafts=(draft,), raw_questions=raw, drops=())


def attach_trace(
    draft: QaDraft, ann: VideoAnnotation, actor_id: str
) -> tuple[list[QaSample], list[DropRecord]]:
    """Turn each validated question into a pre-perturbation sample.

    The sample's keyframes are all frames touched by the actor's full
    narration trace; its per-keyframe points come from the word spans the
    refer tag overlaps, labeled relevant.
    """
    actor = ann.actor(actor_id)
    _, ranges = strip_question_tags(draft.refer_content)
    frame_set = sorted({p.keyframe_index for p in actor.trace})
    samples: list[QaSample] = []
    drops: list[DropRecord] = []
    for q in draft.questions:
        start, end = ranges[q.number]
        if actor.narration[start:end] != q.refer_tag:
            drops.append(DropRecord(STAGE_GENERATE_QA, ann.video_id, actor_id, q.refer_tag, "tag offset"))
            continue
        groups = trace_for_span(ann, actor_id, start, end)
        trace = {k: groups[k] for k in frame_set}
        labels = {k: tuple(LABEL_RELEVANT for _ in trace[k]) for k in frame_set}
        samples.append(
            QaSample(
                video_id=ann.video_id,
                actor_id=actor_id,
                refer_tag=q.refer_tag,
                direct_question=q.direct_question,
                indirect_question=q.indirect_question,
                answer=q.answer,
                keyframe_indices=tuple(frame_set),
                trace=trace,
                trace_labels=labels,
            )
        )
    return samples, drops


def trace_summary(sample: QaSample) -> str:
    """Deterministic per-keyframe description fed to the rationale prompt,
    including the ground-truth perturbation labels."""
    lines = []
    for k in sample.keyframe_indices:
        pts = sample.trace[k]
        labels = Counter(sample.trace_labels[k])
        if not pts:
            lines.append(f"frame {k}: no points")
            continue
        parts = ", ".join(f"{n} {label}" for label, n in sorted(labels.items()))
        coords = "; ".join(f"({p.x:.3f}, {p.y:.3f})" for p in pts)
        lines.append(f"frame {k}: {parts} at {coords}")
    record = sample.perturbation
    if record is not None and record.kind == REASONING_SPATIAL:
        lines.append(
            f"ground truth: frame {record.corrupted_keyframe} points are injected irrelevant "
            f"noise taken from actor '{record.source_actor_id}'"
        )
    elif record is not None:
        frames = ", ".join(str(k) for k in sorted(record.copied_from))
        lines.append(f"ground truth: frames {frames} carry propagated copies of neighboring frames' points")
    return "\n".join(lines)


def cot_request(
    sample: QaSample,
    ann: VideoAnnotation,
    model_name: str = "gpt-4o",
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ChatRequest:
    if sample.reasoning_type is None:
        raise DataError("sample must be classified before rationale generation")
    guidance = load_template(
        "cot_guidance_spatial" if sample.reasoning_type == REASONING_SPATIAL else "cot_guidance_temporal"
    ).strip()
    background = " ".join(a.narration for a in ann.actors)
    return ChatRequest(
        system_prompt=render_template("cot_system", reasoning_guidance=guidance),
        user_content=render_template(
            "cot_user",
            background_info=background,
            referable_sentence=ann.actor(sample.actor_id).narration,
            refer_tag=sample.refer_tag,
            direct_question=sample.direct_question,
            indirect_question=sample.indirect_question,
            answer=sample.answer,
            reasoning_type=sample.reasoning_type,
            trace_summary=trace_summary(sample),
        ),
        image_refs=tuple(ann.keyframes[k].path for k in sample.keyframe_indices),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        model_name=model_name,
    )


def generate_cot(
    sample: QaSample,
    ann: VideoAnnotation,
    client: ChatClient,
    model_name: str = "gpt-4o",
    temperature: float = DEFAULT_TEMPERATURE,
) -> str | None:
    """Rationale text for a perturbed sample, or None when the completion
    fails to parse into a non-empty ``{"reasoning": ...}``."""
    response = client.complete(cot_request(sample, ann, model_name, temperature))
    try:
        value = extract_json_block(response.text)
    except StructuredOutputError:
        return None
    if not isinstance(value, dict):
        return None
    reasoning = value.get("reasoning")
    if not isinstance(reasoning, str) or not reasoning.strip():
        return None
    return reasoning


def compute_survival_rate(raw_in: int, kept: int) -> float:
    """kept / raw_in to 4 decimal places; raw_in must be positive."""
    if raw_in <= 0:
        raise DataError("raw_in must be positive")
    if not (0 <= kept <= raw_in):
        raise DataError(f"kept must be within [0, raw_in], got kept={kept}, raw_in={raw_in}")
    return round(kept / raw_in, 4)


@dataclass(frozen=True)
class StageStats:
    split: str
    stage: str
    videos: int
    actors: int
    questions_spatial: int | None
    questions_temporal: int | None
    questions_total: int
    raw_in: int
    kept: int
    survival_rate: float

    def __post_init__(self):
        if self.kept > self.raw_in:
            raise DataError("kept exceeds raw_in")
        if self.raw_in > 0 and self.survival_rate != compute_survival_rate(self.raw_in, self.kept):
            raise DataError("survival_rate inconsistent with raw_in/kept")
        if self.questions_spatial is not None and self.questions_temporal is not None:
            if self.questions_total != self.questions_spatial + self.questions_temporal:
                raise DataError("typed question counts do not sum to total")

    def to_record(self) -> dict:
        return {
            "schema": STATS_SCHEMA,
            "split": self.split,
            "stage": self.stage,
            "videos": self.videos,
            "actors": self.actors,
            "questions_spatial": self.questions_spatial,
            "questions_temporal": self.questions_temporal,
            "questions_total": self.questions_total,
            "raw_in": self.raw_in,
            "kept": self.kept,
            "survival_rate": quantize(self.survival_rate),
        }

    @staticmethod
    def from_record(rec: dict) -> "StageStats":
        if rec.get("schema") != STATS_SCHEMA:
            raise DataError(f"stats record schema {rec.get('schema')!r} != {STATS_SCHEMA!r}")
        return StageStats(
            split=rec["split"],
            stage=rec["stage"],
            videos=int(rec["videos"]),
            actors=int(rec["actors"]),
            questions_spatial=None if rec["questions_spatial"] is None else int(rec["questions_spatial"]),
            questions_temporal=None if rec["questions_temporal"] is None else int(rec["questions_temporal"]),
            questions_total=int(rec["questions_total"]),
            raw_in=int(rec["raw_in"]),
            kept=int(rec["kept"]),
            survival_rate=float(rec["survival_rate"]),
        )


@dataclass(frozen=True)
class PipelineStats:
    stages: tuple[StageStats, ...]

    def stage(self, name: str) -> StageStats:
        for s in self.stages:
            if s.stage == name:
                return s
        raise DataError(f"no stage named {name!r}")


def write_stats(stats: PipelineStats, path: str | Path) -> None:
    lines = [canonical_json(s.to_record()) for s in stats.stages]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_stats(source: str | Path) -> PipelineStats:
    stages = []
    for line in Path(source).read_text(encoding="utf-8").splitlines():
        if line.strip():
            stages.append(StageStats.from_record(json.loads(line)))
    return PipelineStats(tuple(stages))


def render_stats_table(stats: PipelineStats) -> str:
    """Human-readable table with the dataset ledger's columns."""
    header = ("Split", "Stage", "Videos", "Actors", "Spatial", "Temporal", "Questions", "SR")
    rows = [header]
    for s in stats.stages:
        rows.append(
            (
                s.split,
                STAGE_TITLES.get(s.stage, s.stage),
                str(s.videos),
                str(s.actors),
                "-" if s.questions_spatial is None else str(s.questions_spatial),
                "-" if s.questions_temporal is None else str(s.questions_temporal),
                str(s.questions_total),
                f"{s.survival_rate * 100:.2f}%",
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    out_lines = []
    for r in rows:
        out_lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip())
    return "\n".join(out_lines)


def write_drops(drops: list[DropRecord], path: str | Path) -> None:
    lines = [canonical_json(d.to_record()) for d in drops]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str
    output_dir: str
    split_name: str = "training"
    seed: int = 0
    jobs: int = 1
    transcript: str | None = None
    model_name: str = "gpt-4o"
    temperature: float = DEFAULT_TEMPERATURE
    sigma: float | None = None
    patch_side: int | None = None

    @staticmethod
    def from_mapping(values: dict) -> "PipelineConfig":
        known = {
            "input": "input_path",
            "output_dir": "output_dir",
            "split": "split_name",
            "seed": "seed",
            "jobs": "jobs",
            "transcript": "transcript",
            "model": "model_name",
            "temperature": "temperature",
            "sigma": "sigma",
            "patch": "patch_side",
        }
        kwargs: dict = {}
        for key, value in values.items():
            if key not in known:
                raise DataError(f"unknown config key {key!r}")
            kwargs[known[key]] = value
        for int_key in ("seed", "jobs", "patch_side"):
            if int_key in kwargs and kwargs[int_key] is not None:
                kwargs[int_key] = int(kwargs[int_key])
        for float_key in ("temperature", "sigma"):
            if float_key in kwargs and kwargs[float_key] is not None:
                kwargs[float_key] = float(kwargs[float_key])
        if "input_path" not in kwargs or "output_dir" not in kwargs:
            raise DataError("config requires 'input' and 'output_dir'")
        return PipelineConfig(**kwargs)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class PipelineResult:
    stats: PipelineStats
    split: DatasetSplit
    drops: tuple[DropRecord, ...]
    diagnostics: tuple[Diagnostic, ...]
    dataset_path: str
    stats_path: str
    drops_path: str
    client_errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class _ActorTask:
    ann: VideoAnnotation
    actor_id: str


def _stage1_actor(task: _ActorTask, client: ChatClient, cfg: PipelineConfig):
    gen = generate_qa(task.ann, task.actor_id, client, cfg.model_name, cfg.temperature)
    samples: list[QaSample] = []
    drops = list(gen.drops)
    for draft in gen.drafts:
        attached, attach_drops = attach_trace(draft, task.ann, task.actor_id)
        drops.extend(attach_drops)
        seen = {s.refer_tag for s in samples}
        for s in attached:
            if s.refer_tag in seen:
                drops.append(
                    DropRecord(STAGE_GENERATE_QA, s.video_id, s.actor_id, s.refer_tag, "duplicate refer_tag")
                )
                continue
            seen.add(s.refer_tag)
            samples.append(s)
    return gen.raw_questions, samples, drops, gen.client_error


def _count_scope(samples: list[QaSample]) -> tuple[int, int]:
    videos = len({s.video_id for s in samples})
    actors = len({(s.video_id, s.actor_id) for s in samples})
    return videos, actors


def _survival(raw: int, kept: int) -> float:
    return compute_survival_rate(raw, kept) if raw > 0 else 0.0


def run_pipeline(config: PipelineConfig, client: ChatClient | None = None) -> PipelineResult:
    """Execute generate -> attach -> perturb -> rationale over every actor of
    every video, writing the dataset, stats, and drop ledger atomically.

    Per-sample failures are counted, never fatal; only an unreadable input
    aborts. With a replay client and a fixed seed the emitted files are
    byte-identical across runs and across worker counts.
    """
    if client is None:
        client = _default_client(config)
    parse_result = parse_annotations(config.input_path)
    annotations = parse_result.annotations

    tasks = [
        _ActorTask(ann, actor.actor_id)
        for ann in annotations
        for actor in ann.actors
        if actor.actor_id != BACKGROUND_ACTOR
    ]

    if config.jobs > 1 and tasks:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            stage1_results = list(pool.map(lambda t: _stage1_actor(t, client, config), tasks))
    else:
        stage1_results = [_stage1_actor(t, client, config) for t in tasks]

    raw_total = sum(r[0] for r in stage1_results)
    pre_samples: list[QaSample] = [s for r in stage1_results for s in r[1]]
    drops: list[DropRecord] = [d for r in stage1_results for d in r[2]]
    client_errors = [f"{t.ann.video_id}/{t.actor_id}: {r[3]}" for t, r in zip(tasks, stage1_results) if r[3]]

    ann_by_id = {ann.video_id: ann for ann in annotations}
    videos1, actors1 = _count_scope(pre_samples)
    stage1 = StageStats(
        split=config.split_name,
        stage=STAGE_GENERATE_QA,
        videos=videos1,
        actors=actors1,
        questions_spatial=None,
        questions_temporal=None,
        questions_total=len(pre_samples),
        raw_in=raw_total,
        kept=len(pre_samples),
        survival_rate=_survival(raw_total, len(pre_samples)),
    )

    perturbed: list[QaSample] = []
    for sample in pre_samples:
        ann = ann_by_id[sample.video_id]
        if not sample.keyframe_indices:
            drops.append(DropRecord(STAGE_MODIFY_TRACE, sample.video_id, sample.actor_id, sample.refer_tag, "no keyframes"))
            continue
        try:
            perturbed.append(perturb_sample(sample, ann, config.seed))
        except DataError as exc:
            drops.append(DropRecord(STAGE_MODIFY_TRACE, sample.video_id, sample.actor_id, sample.refer_tag, str(exc)))

    spatial2 = sum(s.reasoning_type == REASONING_SPATIAL for s in perturbed)
    videos2, actors2 = _count_scope(perturbed)
    stage2 = StageStats(
        split=config.split_name,
        stage=STAGE_MODIFY_TRACE,
        videos=videos2,
        actors=actors2,
        questions_spatial=spatial2,
        questions_temporal=len(perturbed) - spatial2,
        questions_total=len(perturbed),
        raw_in=len(pre_samples),
        kept=len(perturbed),
        survival_rate=_survival(len(pre_samples), len(perturbed)),
    )

    def cot_task(sample: QaSample) -> tuple[QaSample | None, DropRecord | None]:
        ann = ann_by_id[sample.video_id]
        try:
            reasoning = generate_cot(sample, ann, client, config.model_name, config.temperature)
        except ExternalServiceError:
            return None, DropRecord(STAGE_GENERATE_COT, sample.video_id, sample.actor_id, sample.refer_tag, "client error")
        if reasoning is None:
            return None, DropRecord(STAGE_GENERATE_COT, sample.video_id, sample.actor_id, sample.refer_tag, "cot")
        return replace(sample, cot=reasoning), None

    if config.jobs > 1 and perturbed:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            cot_results = list(pool.map(cot_task, perturbed))
    else:
        cot_results = [cot_task(s) for s in perturbed]

    final_samples = [s for s, _ in cot_results if s is not None]
    drops.extend(d for _, d in cot_results if d is not None)

    spatial3 = sum(s.reasoning_type == REASONING_SPATIAL for s in final_samples)
    videos3, actors3 = _count_scope(final_samples)
    stage3 = StageStats(
        split=config.split_name,
        stage=STAGE_GENERATE_COT,
        videos=videos3,
        actors=actors3,
        questions_spatial=spatial3,
        questions_temporal=len(final_samples) - spatial3,
        questions_total=len(final_samples),
        raw_in=len(perturbed),
        kept=len(final_samples),
        survival_rate=_survival(len(perturbed), len(final_samples)),
    )

    stats = PipelineStats((stage1, stage2, stage3))
    split = DatasetSplit(config.split_name, tuple(final_samples))

    out_dir = Path(config.output_dir)
    dataset_path = out_dir / "dataset.jsonl"
    stats_path = out_dir / "stats.jsonl"
    drops_path = out_dir / "drops.jsonl"
    atomic_write_text(dataset_path, "".join(line + "\n" for line in dataset_lines(split)))
    write_stats(stats, stats_path)
    write_drops(drops, drops_path)

    return PipelineResult(
        stats=stats,
        split=split,
        drops=tuple(drops),
        diagnostics=parse_result.diagnostics,
        dataset_path=str(dataset_path),
        stats_path=str(stats_path),
        drops_path=str(drops_path),
        client_errors=tuple(client_errors),
    )


def _default_client(config: PipelineConfig) -> ChatClient:
    from .llm_client import HttpChatClient, ReplayChatClient

    if config.transcript:
        return ReplayChatClient(config.transcript)
    return HttpChatClient(model_name=config.model_name)
