"""The two trace perturbations, with their ground-truth labels.

A sample whose trace covers every keyframe is a spatial-reasoning case:
one frame's points get replaced with a semantically unrelated phrase's
points from another narration. A sample with gaps is a temporal case: the
gaps are filled by copying the nearest occupied frame.
"""
from glarify import classify_reasoning_type, inject_spatial_noise, propagate_temporal
from glarify.fixtures import build_fixture_corpus
from glarify.data_model import QaSample, TracePoint

import tempfile

corpus = build_fixture_corpus(tempfile.mkdtemp())
video = corpus.annotations[0]
print(f"video {video.video_id}: actors = {[a.actor_id for a in video.actors]}")


def show(sample):
    for k in sample.keyframe_indices:
        labels = list(sample.trace_labels[k])
        print(f"  frame {k}: {len(sample.trace[k])} points {labels}")


# A spatial sample: points on all three keyframes.
full = {
    k: (TracePoint(0.2 + 0.1 * k, 0.4, k, 100 * k), TracePoint(0.3 + 0.1 * k, 0.5, k, 100 * k + 40))
    for k in range(3)
}
spatial = QaSample(
    video_id=video.video_id,
    actor_id="actor_a",
    refer_tag="tall chef",
    direct_question="Who is standing ahead of us?",
    indirect_question="Who is that?",
    answer="A tall chef.",
    keyframe_indices=(0, 1, 2),
    trace=full,
    trace_labels={k: ("relevant", "relevant") for k in range(3)},
)
print(f"\nclassification: {classify_reasoning_type(spatial)}")
perturbed = inject_spatial_noise(spatial, video, seed=0)
rec = perturbed.perturbation
print(f"injected noise into frame {rec.corrupted_keyframe} from actor '{rec.source_actor_id}' "
      f"(phrase chars {rec.source_char_start}..{rec.source_char_end})")
show(perturbed)
print(f"original points preserved in provenance: {len(rec.original_points)}")

# A temporal sample: only frame 0 has points.
gappy = dict(full)
gappy[1] = ()
gappy[2] = ()
temporal = QaSample(
    video_id=video.video_id,
    actor_id="actor_a",
    refer_tag="stirs golden soup",
    direct_question="What is the chef preparing?",
    indirect_question="What is he doing?",
    answer="Golden soup.",
    keyframe_indices=(0, 1, 2),
    trace=gappy,
    trace_labels={0: ("relevant", "relevant"), 1: (), 2: ()},
)
print(f"\nclassification: {classify_reasoning_type(temporal)}")
filled = propagate_temporal(temporal, video)
print(f"gap fills (frame <- source): {filled.perturbation.copied_from}")
show(filled)

# Same inputs and seed always give the same output.
again = inject_spatial_noise(spatial, video, seed=0)
print(f"\ndeterministic under fixed seed: {again == perturbed}")
