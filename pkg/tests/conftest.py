import numpy as np
import pytest

from glarify.data_model import (
    ActorNarration,
    DatasetSplit,
    Keyframe,
    PerturbationRecord,
    QaSample,
    TracePoint,
    VideoAnnotation,
    WordSpan,
)
from glarify.fixtures import build_fixture_corpus, build_judge_fixture


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    return build_fixture_corpus(tmp_path_factory.mktemp("corpus"), write_images=True)


@pytest.fixture(scope="session")
def judge_fixture(tmp_path_factory):
    items_path, transcript_path, expected = build_judge_fixture(tmp_path_factory.mktemp("judge"))
    return items_path, transcript_path, expected


def random_word_annotation(rng: np.random.Generator, n_words: int = 50, n_frames: int = 4) -> VideoAnnotation:
    """An actor whose words are randomly aligned to random trace points."""
    words = [f"w{idx}" for idx in range(n_words)]
    narration = " ".join(words)
    trace = []
    spans = []
    offset = 0
    for w in words:
        indices = []
        for _ in range(int(rng.integers(0, 3))):
            indices.append(len(trace))
            trace.append(
                TracePoint(
                    x=float(rng.uniform()),
                    y=float(rng.uniform()),
                    keyframe_index=int(rng.integers(n_frames)),
                    time_ms=len(trace) * 10,
                )
            )
        spans.append(WordSpan(offset, offset + len(w), tuple(indices)))
        offset += len(w) + 1
    actor = ActorNarration("actor_a", narration, tuple(spans), tuple(trace))
    frames = tuple(Keyframe(f"frames/k{j}.png", 64, 48) for j in range(n_frames))
    return VideoAnnotation("vid_rand", frames, (actor,))


def random_sample(rng: np.random.Generator, video_id: str = "vid", actor_id: str = "actor_a") -> QaSample:
    """A structurally valid random QaSample, optionally perturbed."""
    n_frames = int(rng.integers(1, 5))
    frame_ids = tuple(range(n_frames))
    trace = {}
    labels = {}
    for k in frame_ids:
        pts = tuple(
            TracePoint(float(rng.uniform()), float(rng.uniform()), k, int(rng.integers(0, 5000)))
            for _ in range(int(rng.integers(0, 4)))
        )
        trace[k] = pts
        labels[k] = tuple("relevant" for _ in pts)
    refer = f"tag {rng.integers(1_000_000)}"
    perturbation = None
    reasoning = None
    if rng.uniform() < 0.5 and any(trace.values()):
        occupied = [k for k in frame_ids if trace[k]]
        src = occupied[0]
        copied = {}
        for k in frame_ids:
            if not trace[k]:
                copied[k] = src
                trace[k] = tuple(
                    TracePoint(p.x, p.y, k, p.time_ms) for p in trace[src]
                )
                labels[k] = tuple("propagated" for _ in trace[k])
        if copied:
            perturbation = PerturbationRecord(kind="temporal", copied_from=copied)
            reasoning = "temporal"
    return QaSample(
        video_id=video_id,
        actor_id=actor_id,
        refer_tag=refer,
        direct_question="What is happening?",
        indirect_question="What is that?",
        answer="Something clearly described.",
        keyframe_indices=frame_ids,
        trace=trace,
        trace_labels=labels,
        reasoning_type=reasoning,
        cot="Reasoning text." if rng.uniform() < 0.5 else None,
        perturbation=perturbation,
        eval_use_indirect=bool(rng.uniform() < 0.2),
    )


def random_split(rng: np.random.Generator, n: int, split_name: str = "training") -> DatasetSplit:
    samples = [random_sample(rng, video_id=f"vid{idx:04d}") for idx in range(n)]
    return DatasetSplit(split_name, tuple(samples))
