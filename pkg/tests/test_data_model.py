import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_split, random_word_annotation
from glarify.canonical import canonical_json
from glarify.data_model import (
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
from glarify.errors import DataError, SchemaError


def minimal_annotation_record():
    return {
        "schema": "glarify-ann/1",
        "video_id": "vid1",
        "keyframes": [{"path": "frames/k0.png", "width": 64, "height": 48}],
        "actors": [
            {
                "actor_id": "actor_a",
                "narration": "hello world",
                "word_spans": [
                    {"char_start": 0, "char_end": 5, "trace_point_indices": [0]},
                    {"char_start": 6, "char_end": 11, "trace_point_indices": []},
                ],
                "trace": [{"x": 0.5, "y": 0.5, "keyframe_index": 0, "time_ms": 0}],
            },
            {
                "actor_id": "background",
                "narration": "sky",
                "word_spans": [{"char_start": 0, "char_end": 3, "trace_point_indices": []}],
                "trace": [],
            },
        ],
    }


class TestTracePoint:
    def test_coordinate_out_of_range(self):
        with pytest.raises(DataError, match="coordinate out of range"):
            TracePoint(1.3, 0.5, 0, 0)
        with pytest.raises(DataError, match="coordinate out of range"):
            TracePoint(0.5, -0.1, 0, 0)

    def test_quantized_on_construction(self):
        assert TracePoint(0.12345678, 0.5, 0, 0).x == 0.123457

    def test_negative_time_rejected(self):
        with pytest.raises(DataError):
            TracePoint(0.5, 0.5, 0, -1)


class TestInvariants:
    def test_word_span_range(self):
        with pytest.raises(DataError):
            WordSpan(5, 5, ())

    def test_word_span_indices_increasing(self):
        with pytest.raises(DataError):
            WordSpan(0, 3, (2, 1))

    def test_actor_span_overlap_rejected(self):
        with pytest.raises(DataError, match="overlap"):
            ActorNarration("a", "abcdef", (WordSpan(0, 4, ()), WordSpan(2, 6, ())), ())

    def test_actor_missing_point_rejected(self):
        with pytest.raises(DataError, match="missing trace point"):
            ActorNarration("a", "abc", (WordSpan(0, 3, (0,)),), ())

    def test_video_needs_keyframe(self):
        with pytest.raises(DataError):
            VideoAnnotation("v", (), ())

    def test_video_duplicate_actor(self):
        a = ActorNarration("x", "hi", (), ())
        with pytest.raises(DataError, match="duplicate actor_id"):
            VideoAnnotation("v", (Keyframe("k", 1, 1),), (a, a))

    def test_trace_point_frame_bound(self):
        actor = ActorNarration("x", "hi", (), (TracePoint(0.5, 0.5, 3, 0),))
        with pytest.raises(DataError, match="out of range"):
            VideoAnnotation("v", (Keyframe("k", 1, 1),), (actor,))


class TestParseAnnotations:
    def test_single_valid_line_two_actors(self):
        line = json.dumps(minimal_annotation_record())
        result = parse_annotations(io.StringIO(line + "\n"))
        assert len(result.annotations) == 1
        assert len(result.annotations[0].actors) == 2
        assert result.diagnostics == ()

    def test_empty_stream(self):
        result = parse_annotations(io.StringIO(""))
        assert result.annotations == ()
        assert result.diagnostics == ()

    def test_out_of_range_coordinate_skips_record(self):
        rec = minimal_annotation_record()
        rec["actors"][0]["trace"][0]["x"] = 1.3
        result = parse_annotations(io.StringIO(json.dumps(rec) + "\n"))
        assert result.annotations == ()
        assert len(result.diagnostics) == 1
        assert result.diagnostics[0].line_no == 1
        assert "coordinate out of range" in result.diagnostics[0].message

    def test_bad_json_line_number(self):
        good = json.dumps(minimal_annotation_record())
        result = parse_annotations(io.StringIO(good + "\n{broken\n"))
        assert len(result.annotations) == 1
        assert result.diagnostics[0].line_no == 2
        assert "invalid JSON" in result.diagnostics[0].message

    def test_duplicate_video_id_keeps_first(self):
        line = json.dumps(minimal_annotation_record())
        result = parse_annotations(io.StringIO(line + "\n" + line + "\n"))
        assert len(result.annotations) == 1
        assert "duplicate video_id" in result.diagnostics[0].message

    def test_stream_never_aborts(self):
        lines = ["not json", json.dumps(minimal_annotation_record()), "{}", ""]
        result = parse_annotations(io.StringIO("\n".join(lines)))
        assert len(result.annotations) == 1
        assert len(result.diagnostics) == 2


class TestTraceForSpan:
    def build(self):
        # words: "aa bb cc" with spans referencing points {0,1}, {2}, {}
        trace = (
            TracePoint(0.1, 0.1, 0, 0),
            TracePoint(0.2, 0.2, 1, 10),
            TracePoint(0.3, 0.3, 0, 20),
        )
        spans = (WordSpan(0, 2, (0, 1)), WordSpan(3, 5, (2,)), WordSpan(6, 8, ()))
        actor = ActorNarration("actor_a", "aa bb cc", spans, trace)
        return VideoAnnotation("v", (Keyframe("k0", 8, 8), Keyframe("k1", 8, 8)), (actor,))

    def test_union_of_overlapping_spans(self):
        ann = self.build()
        groups = trace_for_span(ann, "actor_a", 0, 5)
        got = {k: [p.time_ms for p in v] for k, v in groups.items()}
        assert got == {0: [0, 20], 1: [10]}

    def test_empty_range(self):
        ann = self.build()
        groups = trace_for_span(ann, "actor_a", 0, 0)
        assert all(v == () for v in groups.values())
        assert set(groups) == {0, 1}

    def test_unknown_actor(self):
        with pytest.raises(DataError, match="actor not found"):
            trace_for_span(self.build(), "nobody", 0, 1)

    def test_matches_brute_force_overlap_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            ann = random_word_annotation(rng)
            actor = ann.actors[0]
            length = len(actor.narration)
            start = int(rng.integers(0, length))
            end = int(rng.integers(start, length + 1))
            groups = trace_for_span(ann, "actor_a", start, end)

            expected_indices = set()
            for span in actor.word_spans:
                if span.char_start < end and start < span.char_end:
                    expected_indices.update(span.trace_point_indices)
            expected = {k: [] for k in range(len(ann.keyframes))}
            for idx in sorted(expected_indices):
                expected[actor.trace[idx].keyframe_index].append(actor.trace[idx])
            for k in expected:
                expected[k].sort(key=lambda p: p.time_ms)
                assert tuple(expected[k]) == groups[k]

    def test_subset_of_actor_trace(self):
        rng = np.random.default_rng(11)
        ann = random_word_annotation(rng)
        groups = trace_for_span(ann, "actor_a", 0, len(ann.actors[0].narration))
        flat = [p for pts in groups.values() for p in pts]
        assert len(flat) <= len(ann.actors[0].trace)
        assert set(flat) <= set(ann.actors[0].trace)


class TestDatasetRoundTrip:
    def test_single_sample_round_trip(self):
        rng = np.random.default_rng(0)
        split = random_split(rng, 1)
        buf = io.StringIO()
        write_dataset(split, buf)
        assert read_dataset(io.StringIO(buf.getvalue())) == split

    def test_duplicate_triple_refused(self):
        rng = np.random.default_rng(1)
        sample = random_split(rng, 1).samples[0]
        with pytest.raises(DataError, match="duplicate sample key"):
            DatasetSplit("training", (sample, sample))

    def test_200_randomized_samples_round_trip_and_stable_bytes(self):
        rng = np.random.default_rng(2)
        split = random_split(rng, 200)
        first, second = io.StringIO(), io.StringIO()
        write_dataset(split, first)
        write_dataset(split, second)
        assert first.getvalue() == second.getvalue()
        assert read_dataset(io.StringIO(first.getvalue())) == split

    def test_schema_mismatch_names_versions(self):
        rng = np.random.default_rng(3)
        split = random_split(rng, 1)
        buf = io.StringIO()
        write_dataset(split, buf)
        rec = json.loads(buf.getvalue())
        rec["schema"] = "glarify-ds/99"
        with pytest.raises(SchemaError) as err:
            read_dataset(io.StringIO(canonical_json(rec) + "\n"))
        assert "glarify-ds/1" in str(err.value)
        assert "glarify-ds/99" in str(err.value)

    def test_empty_read_requires_hint(self):
        with pytest.raises(DataError):
            read_dataset(io.StringIO(""))
        split = read_dataset(io.StringIO(""), split_name_if_empty="test")
        assert split.split_name == "test"
        assert split.samples == ()

    def test_mixed_split_rejected(self):
        rng = np.random.default_rng(4)
        a, b = io.StringIO(), io.StringIO()
        write_dataset(random_split(rng, 1, "training"), a)
        write_dataset(random_split(rng, 1, "test"), b)
        with pytest.raises(DataError, match="split changed"):
            read_dataset(io.StringIO(a.getvalue() + b.getvalue()))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=8))
    def test_round_trip_property(self, seed, n):
        rng = np.random.default_rng(seed)
        split = random_split(rng, n)
        buf = io.StringIO()
        write_dataset(split, buf)
        assert read_dataset(io.StringIO(buf.getvalue())) == split


def test_annotation_record_round_trip():
    rec = minimal_annotation_record()
    ann = VideoAnnotation.from_record(rec)
    assert VideoAnnotation.from_record(ann.to_record()) == ann


def test_qa_sample_label_invariants():
    pt = TracePoint(0.5, 0.5, 0, 0)
    with pytest.raises(DataError, match="unknown trace label"):
        QaSample(
            video_id="v",
            actor_id="a",
            refer_tag="t",
            direct_question="q",
            indirect_question="i",
            answer="ans",
            keyframe_indices=(0,),
            trace={0: (pt,)},
            trace_labels={0: ("bogus",)},
        )
