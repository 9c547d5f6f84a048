"""Deterministic fixture corpus and transcripts for pipeline runs.

Real corpus synthesis needs a paid model endpoint, so tests, demos, and
CI run the pipeline against this miniature stand-in: ten videos with
word-aligned traces, plus a replay transcript containing every completion
the pipeline will request at seed 0. A handful of responses are flawed on
purpose (wrong question count, tag tampering, non-ambiguous question,
prose instead of JSON, inconsistent refer_tag, empty rationale) and two
videos are shaped to trip the perturbation error paths, so each stage's
survival accounting is exercised end to end.

The construction plan is written next to the artifacts as ``plan.json``;
its expected per-stage counts were enumerated by hand from the flaw
assignments below and are what the audit tests assert against.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .canonical import atomic_write_text, canonical_json, quantize
from .data_model import (
    ActorNarration,
    Keyframe,
    TracePoint,
    VideoAnnotation,
    WordSpan,
)
from .llm_client import request_hash, write_transcript
from .perturbation import perturb_sample
from .pipeline import attach_trace, cot_request, parse_qa_response, qa_request, validate_qa_draft

FIXTURE_SEED = 0
N_FRAMES = 3
FRAME_W = 64
FRAME_H = 48

# word -> keyframes carrying a point for it
ACTOR_A_WORDS = [
    ("The", []),
    ("tall", [0, 1, 2]),
    ("chef", [0]),
    ("stirs", [0]),
    ("golden", [0]),
    ("soup", []),
    ("then", []),
    ("lifts", [1]),
    ("the", []),
    ("heavy", [0, 2]),
    ("tray", [1, 2]),
    ("happily.", []),
]
ACTOR_B_WORDS = [
    ("A", []),
    ("small", [0]),
    ("dog", [1, 2]),
    ("chases", [0]),
    ("birds", [0]),
    ("across", []),
    ("wet", []),
    ("grass", []),
    ("quickly.", [0, 1, 2]),
]
BACKGROUND_WORDS = [
    ("Sunlight", [0]),
    ("brightens", [1]),
    ("rusty", [2]),
    ("fences", [0]),
    ("outside.", [1]),
]

# question number -> (word range, direct question, indirect question, answer)
ACTOR_A_QUESTIONS = {
    1: ((1, 3), "Who is standing ahead of us?", "Who is that ahead of us?", "A tall chef is ahead of us."),
    2: ((3, 6), "What is the chef preparing?", "What is he doing?", "He is stirring golden soup."),
    3: ((7, 11), "What does the chef carry afterwards?", "What did he pick up?", "He lifts a heavy tray after stirring."),
}
ACTOR_B_QUESTIONS = {
    1: ((1, 3), "What animal is ahead of us?", "What is that?", "A small dog is running ahead of us."),
    2: ((3, 5), "What is the dog chasing?", "What is it doing?", "It chases birds around the yard."),
    3: ((8, 9), "How does the dog move?", "How did it move?", "It moves quickly the whole time."),
}
# vid006 actor_b asks about words that carry no trace points at all
ACTOR_B_Q2_NO_TRACE = (
    (5, 8),
    "Where does the chase happen?",
    "Where did it run?",
    "It runs across the wet grass.",
)


def _build_actor(actor_id: str, words: list[tuple[str, list[int]]]) -> ActorNarration:
    narration = " ".join(w for w, _ in words)
    spans: list[WordSpan] = []
    trace: list[TracePoint] = []
    offset = 0
    time_ms = 0
    for word, frames in words:
        indices = []
        for frame in frames:
            indices.append(len(trace))
            trace.append(
                TracePoint(
                    x=quantize(0.1 + 0.04 * (len(trace) % 18)),
                    y=quantize(0.15 + 0.05 * (frame + len(trace) % 11)),
                    keyframe_index=frame,
                    time_ms=time_ms,
                )
            )
            time_ms += 100
        spans.append(WordSpan(char_start=offset, char_end=offset + len(word), trace_point_indices=tuple(indices)))
        offset += len(word) + 1
    return ActorNarration(actor_id=actor_id, narration=narration, word_spans=spans, trace=trace)


def _word_char_range(actor: ActorNarration, word_range: tuple[int, int]) -> tuple[int, int]:
    lo, hi = word_range
    return actor.word_spans[lo].char_start, actor.word_spans[hi - 1].char_end


def _tagged_content(narration: str, ranges: dict[int, tuple[int, int]]) -> str:
    inserts: list[tuple[int, str]] = []
    for number, (start, end) in ranges.items():
        inserts.append((start, f"<Q{number}>"))
        inserts.append((end, f"</Q{number}>"))
    out = narration
    for pos, tag in sorted(inserts, key=lambda item: item[0], reverse=True):
        out = out[:pos] + tag + out[pos:]
    return out


def _video(index: int) -> VideoAnnotation:
    vid = f"vid{index:03d}"
    keyframes = tuple(
        Keyframe(path=f"frames/{vid}_k{j}.png", width=FRAME_W, height=FRAME_H) for j in range(N_FRAMES)
    )
    actors = [_build_actor("actor_a", ACTOR_A_WORDS)]
    if index % 2 == 0 and index != 9:
        actors.append(_build_actor("actor_b", ACTOR_B_WORDS))
    if index != 9:
        actors.append(_build_actor("background", BACKGROUND_WORDS))
    return VideoAnnotation(video_id=vid, keyframes=keyframes, actors=tuple(actors))


def _qa_response_obj(actor: ActorNarration, questions: dict[int, tuple], narration_override: str | None = None):
    narration = narration_override if narration_override is not None else actor.narration
    ranges = {}
    pairs = []
    for number, (word_range, direct, indirect, answer) in sorted(questions.items()):
        start, end = _word_char_range(actor, word_range)
        ranges[number] = (start, end)
        pairs.append(
            {
                "refer_tag": f"<Q{number}>{actor.narration[start:end]}</Q{number}>",
                "direct_question": direct,
                "indirect_question": indirect,
                "answer": answer,
            }
        )
    return {"refer_content": _tagged_content(narration, ranges), "qa_pairs": pairs}


def _fenced(obj) -> str:
    return "Here is the structured output.\n```json\n" + json.dumps(obj, indent=2) + "\n```\nDone."


def _qa_response_text(video_index: int, actor_id: str, ann: VideoAnnotation) -> str | None:
    """Scripted completion per the flaw plan; None = no transcript entry."""
    actor = ann.actor(actor_id)
    if actor_id == "actor_b":
        if video_index == 0:
            return None  # replay miss: client error path
        questions = dict(ACTOR_B_QUESTIONS)
        if video_index == 6:
            questions[2] = ACTOR_B_Q2_NO_TRACE  # empty trace -> temporal propagation failure
        return _fenced(_qa_response_obj(actor, questions))

    if video_index == 1:
        obj = _qa_response_obj(actor, {k: ACTOR_A_QUESTIONS[k] for k in (1, 2)})
        return _fenced(obj)  # only two questions
    if video_index == 3:
        tampered = actor.narration.replace("golden", "silver")
        return _fenced(_qa_response_obj(actor, ACTOR_A_QUESTIONS, narration_override=tampered))
    if video_index == 5:
        questions = dict(ACTOR_A_QUESTIONS)
        rng, direct, _, answer = questions[2]
        questions[2] = (rng, direct, "What soup is he stirring?", answer)  # repeats tag noun
        return _fenced(_qa_response_obj(actor, questions))
    if video_index == 7:
        return "The chef seems busy stirring; I could not produce structured output."
    if video_index == 9:
        obj = _qa_response_obj(actor, ACTOR_A_QUESTIONS)
        obj["qa_pairs"][2]["refer_tag"] = "<Q3>carries the giant box</Q3>"  # inconsistent with tags
        return _fenced(obj)
    return _fenced(_qa_response_obj(actor, ACTOR_A_QUESTIONS))


def _cot_response_text(video_index: int, actor_id: str, question_number: int, refer_tag: str) -> str:
    if video_index == 4 and actor_id == "actor_a" and question_number == 1:
        return _fenced({"reasoning": ""})  # dropped at the rationale stage
    reasoning = (
        f"The gaze concentrates on '{refer_tag}' across the keyframes; after discounting the "
        f"labeled noise, the attended entity answers the question directly."
    )
    if actor_id == "actor_b":
        return json.dumps({"reasoning": reasoning})  # bare JSON, no fence
    return _fenced({"reasoning": reasoning})


EXPECTED_STAGE_COUNTS = {
    # enumerated by hand from the flaw plan above
    "generate_qa": {"raw_in": 42, "kept": 29, "videos": 6, "actors": 10, "survival_rate": 0.6905},
    "modify_trace": {
        "raw_in": 29,
        "kept": 27,
        "videos": 6,
        "actors": 10,
        "questions_spatial": 18,
        "questions_temporal": 9,
        "survival_rate": 0.931,
    },
    "generate_cot": {
        "raw_in": 27,
        "kept": 26,
        "videos": 6,
        "actors": 10,
        "questions_spatial": 17,
        "questions_temporal": 9,
        "survival_rate": 0.963,
    },
}


@dataclass(frozen=True)
class FixtureCorpus:
    annotations_path: str
    transcript_path: str
    plan_path: str
    annotations: tuple[VideoAnnotation, ...]


def build_fixture_corpus(out_dir: str | Path, n_videos: int = 10, write_images: bool = False) -> FixtureCorpus:
    """Write annotations, a complete replay transcript for seed 0, and the plan."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    videos = [_video(i) for i in range(n_videos)]

    ann_lines = [canonical_json(v.to_record()) for v in videos]
    annotations_path = out_dir / "annotations.jsonl"
    atomic_write_text(annotations_path, "".join(line + "\n" for line in ann_lines))

    transcript: dict[str, str] = {}
    question_numbers: dict[tuple[str, str, str], int] = {}
    pre_samples = []
    for index, ann in enumerate(videos):
        for actor in ann.actors:
            if actor.actor_id == "background":
                continue
            text = _qa_response_text(index, actor.actor_id, ann)
            if text is None:
                continue
            transcript[request_hash(qa_request(ann, actor.actor_id))] = text
            draft = None
            try:
                draft = parse_qa_response(text)
            except Exception:
                continue
            if validate_qa_draft(draft, actor.narration) is not None:
                continue
            samples, _ = attach_trace(draft, ann, actor.actor_id)
            for q in draft.questions:
                question_numbers[(ann.video_id, actor.actor_id, q.refer_tag)] = q.number
            for sample in samples:
                pre_samples.append((index, ann, sample))

    for index, ann, sample in pre_samples:
        try:
            perturbed = perturb_sample(sample, ann, FIXTURE_SEED)
        except Exception:
            continue  # planned perturbation failure; no rationale request happens
        number = question_numbers[perturbed.key()]
        text = _cot_response_text(index, perturbed.actor_id, number, perturbed.refer_tag)
        transcript[request_hash(cot_request(perturbed, ann))] = text

    transcript_path = out_dir / "transcript.jsonl"
    write_transcript(sorted(transcript.items()), transcript_path)

    plan_path = out_dir / "plan.json"
    plan = {
        "seed": FIXTURE_SEED,
        "n_videos": n_videos,
        "flaws": {
            "vid000/actor_b": "missing transcript entry (client error)",
            "vid001/actor_a": "question count",
            "vid003/actor_a": "tag reconstruction mismatch",
            "vid005/actor_a": "not ambiguous",
            "vid007/actor_a": "no structured block",
            "vid009/actor_a": "tag offset on Q3; Q1 has no irrelevant source",
            "vid006/actor_b": "Q2 subject has no trace",
            "vid004/actor_a": "Q1 empty rationale",
        },
        "expected_stage_counts": EXPECTED_STAGE_COUNTS,
    }
    atomic_write_text(plan_path, json.dumps(plan, indent=2, sort_keys=True) + "\n")

    if write_images:
        _write_frame_images(out_dir, videos)

    return FixtureCorpus(
        annotations_path=str(annotations_path),
        transcript_path=str(transcript_path),
        plan_path=str(plan_path),
        annotations=tuple(videos),
    )


def _write_frame_images(out_dir: Path, videos: list[VideoAnnotation]) -> None:
    import numpy as np
    from PIL import Image

    rng = np.random.default_rng(FIXTURE_SEED)
    for video in videos:
        for frame in video.keyframes:
            path = out_dir / frame.path
            path.parent.mkdir(parents=True, exist_ok=True)
            pixels = rng.integers(0, 256, size=(frame.height, frame.width, 3), dtype=np.uint8)
            Image.fromarray(pixels, mode="RGB").save(str(path), format="PNG")


JUDGE_FIXTURE_SIZE = 50
JUDGE_ERROR_INDICES = (12, 37)


def _judge_plan(index: int) -> str:
    if index in JUDGE_ERROR_INDICES:
        return "judge_error"
    return "not_aligned" if index % 3 == 1 else "aligned"


def build_judge_fixture(out_dir: str | Path) -> tuple[str, str, dict[str, int]]:
    """50 judged items with a hand-planned verdict per index.

    Verdicts: indices 12 and 37 get unparseable judge output, every other
    index with ``i % 3 == 1`` is not_aligned, the rest are aligned. That is
    32 aligned, 16 not_aligned, 2 judge errors.
    """
    from .analysis import JudgeItem, judge_request

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    transcript: dict[str, str] = {}
    expected = {"aligned": 0, "not_aligned": 0, "judge_error": 0}
    for i in range(JUDGE_FIXTURE_SIZE):
        item = JudgeItem(
            question=f"What is object {i} doing ahead of us?",
            reference_answer=f"Object {i} is spinning slowly near the bench.",
            response=f"Object {i} keeps spinning by the bench." if i % 3 != 2 else f"Object {i} is painted red.",
        )
        items.append(item)
        verdict = _judge_plan(i)
        expected[verdict] += 1
        if verdict == "judge_error":
            text = "I believe the response is broadly reasonable."
        else:
            text = _fenced({"verdict": verdict})
        transcript[request_hash(judge_request(item))] = text

    items_path = out_dir / "judge_items.jsonl"
    atomic_write_text(
        items_path,
        "".join(
            canonical_json(
                {"question": it.question, "reference_answer": it.reference_answer, "response": it.response}
            )
            + "\n"
            for it in items
        ),
    )
    transcript_path = out_dir / "judge_transcript.jsonl"
    write_transcript(sorted(transcript.items()), transcript_path)
    return str(items_path), str(transcript_path), expected
