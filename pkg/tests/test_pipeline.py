import hashlib
import io
import json
from pathlib import Path

import numpy as np
import pytest

from conftest import random_word_annotation
from glarify.data_model import read_dataset, trace_for_span
from glarify.errors import DataError, ReplayMissError
from glarify.fixtures import EXPECTED_STAGE_COUNTS, build_fixture_corpus
from glarify.llm_client import ReplayChatClient, request_hash
from glarify.pipeline import (
    PipelineConfig,
    QaDraft,
    QaQuestion,
    attach_trace,
    compute_survival_rate,
    cot_request,
    generate_cot,
    generate_qa,
    parse_config_file,
    parse_qa_response,
    qa_request,
    read_stats,
    render_stats_table,
    run_pipeline,
    strip_question_tags,
    validate_qa_draft,
    write_stats,
)


class TestStripQuestionTags:
    def test_flat_tags(self):
        text, ranges = strip_question_tags("<Q1>A man</Q1> walks <Q2>away</Q2>.")
        assert text == "A man walks away."
        assert ranges == {1: (0, 5), 2: (12, 16)}

    def test_nested_tags(self):
        text, ranges = strip_question_tags("<Q1>A man <Q2>wearing shorts</Q2></Q1> runs.")
        assert text == "A man wearing shorts runs."
        assert ranges[1] == (0, 20)
        assert ranges[2] == (6, 20)

    def test_unclosed_tag(self):
        with pytest.raises(DataError, match="never closed"):
            strip_question_tags("<Q1>abc")

    def test_duplicate_open(self):
        with pytest.raises(DataError, match="opened twice"):
            strip_question_tags("<Q1>a<Q1>b</Q1></Q1>")

    def test_close_before_open(self):
        with pytest.raises(DataError, match="closed before opening"):
            strip_question_tags("a</Q1>b<Q1>")


def draft_for(narration, tags, questions):
    """tags: {number: (start, end)} in narration coordinates."""
    inserts = []
    for n, (s, e) in tags.items():
        inserts.append((s, f"<Q{n}>"))
        inserts.append((e, f"</Q{n}>"))
    content = narration
    for pos, tag in sorted(inserts, reverse=True):
        content = content[:pos] + tag + content[pos:]
    qs = tuple(
        QaQuestion(
            number=n,
            refer_tag_raw=f"<Q{n}>{narration[s:e]}</Q{n}>",
            direct_question=questions[n][0],
            indirect_question=questions[n][1],
            answer=questions[n][2],
        )
        for n, (s, e) in sorted(tags.items())
    )
    return QaDraft(refer_content=content, questions=qs)


NARRATION = "The tall chef stirs golden soup happily."
TAGS = {1: (4, 13), 2: (14, 31), 3: (32, 39)}
QUESTIONS = {
    1: ("Who is cooking?", "Who is that?", "A tall chef."),
    2: ("What is being stirred?", "What is he doing?", "Golden soup."),
    3: ("How does he stir?", "How does he feel?", "Happily."),
}


class TestValidateQaDraft:
    def test_well_formed_ok(self):
        assert validate_qa_draft(draft_for(NARRATION, TAGS, QUESTIONS), NARRATION) is None

    def test_two_questions_dropped(self):
        draft = draft_for(NARRATION, {1: (4, 13), 2: (14, 31)}, QUESTIONS)
        assert validate_qa_draft(draft, NARRATION) == "question count"

    def test_reconstruction_mismatch(self):
        tampered = NARRATION.replace("golden", "silver")
        draft = draft_for(tampered, TAGS, QUESTIONS)
        assert validate_qa_draft(draft, NARRATION) == "tag reconstruction mismatch"

    def test_ambiguity_rule_against_hand_labeled_fixtures(self):
        # 20 indirect-question variants for the refer tag "stirs golden soup",
        # labeled by hand: ambiguous questions pass, ones restating a content
        # word longer than 3 characters fail.
        cases = [
            ("What is he doing?", True),
            ("What is he stirring?", True),  # 'stirring' != token 'stirs'
            ("What is in the pot?", True),
            ("Is it warm?", True),
            ("What soup is that?", False),
            ("Is the soup ready?", False),
            ("Why golden?", False),
            ("Does he like golden colors?", False),
            ("What does he make?", True),
            ("Who stirs soup?", False),
            ("Can we taste it?", True),
            ("What is that ahead of us?", True),
            ("Is he making soup now?", False),
            ("Golden what?", False),
            ("Soup?", False),
            ("What is he preparing there?", True),
            ("Is that food?", True),
            ("What did he stir?", True),  # 'stir' != token 'stirs'
            ("Is the golden thing edible?", False),
            ("What is it?", True),
        ]
        for indirect, expect_ok in cases:
            questions = dict(QUESTIONS)
            questions[2] = ("What is being stirred?", indirect, "Golden soup.")
            draft = draft_for(NARRATION, TAGS, questions)
            verdict = validate_qa_draft(draft, NARRATION)
            if expect_ok:
                assert verdict is None, indirect
            else:
                assert verdict == "not ambiguous", indirect

    def test_empty_answer_dropped(self):
        questions = dict(QUESTIONS)
        questions[3] = ("How?", "How?", "  ")
        draft = draft_for(NARRATION, TAGS, questions)
        assert validate_qa_draft(draft, NARRATION) == "empty field"


class TestComputeSurvivalRate:
    def test_published_training_modify_rate(self):
        assert compute_survival_rate(72912, 72738) == 0.9976

    def test_published_training_cot_rate(self):
        assert compute_survival_rate(72738, 72260) == 0.9934

    def test_published_test_modify_rate(self):
        assert compute_survival_rate(15013, 14954) == 0.9961

    def test_published_test_cot_rate(self):
        assert compute_survival_rate(14954, 14860) == 0.9937

    def test_zero_raw_rejected(self):
        with pytest.raises(DataError):
            compute_survival_rate(0, 0)

    def test_kept_bounds(self):
        with pytest.raises(DataError):
            compute_survival_rate(10, 11)


class TestAttachTrace:
    def test_randomized_tags_match_span_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            ann = random_word_annotation(rng, n_words=12)
            actor = ann.actors[0]
            spans = actor.word_spans
            lo = int(rng.integers(0, len(spans) - 2))
            tags = {
                1: (spans[lo].char_start, spans[lo].char_end),
                2: (spans[lo + 1].char_start, spans[lo + 1].char_end),
                3: (spans[lo + 2].char_start, spans[lo + 2].char_end),
            }
            questions = {n: ("d?", "i?", "a.") for n in (1, 2, 3)}
            draft = draft_for(actor.narration, tags, questions)
            samples, drops = attach_trace(draft, ann, "actor_a")
            assert not drops
            frame_set = sorted({p.keyframe_index for p in actor.trace})
            for sample, n in zip(samples, (1, 2, 3)):
                assert list(sample.keyframe_indices) == frame_set
                start, end = tags[n]
                oracle = trace_for_span(ann, "actor_a", start, end)
                for k in frame_set:
                    assert sample.trace[k] == oracle[k]
                    assert set(sample.trace_labels[k]) <= {"relevant"}

    def test_inconsistent_refer_tag_dropped(self):
        draft = draft_for(NARRATION, TAGS, QUESTIONS)
        bad = draft.questions[2]
        questions = draft.questions[:2] + (
            QaQuestion(3, "<Q3>something else</Q3>", bad.direct_question, bad.indirect_question, bad.answer),
        )
        draft = QaDraft(draft.refer_content, questions)
        rng = np.random.default_rng(0)
        ann = random_word_annotation(rng, n_words=7)
        # rebuild annotation narration to match the draft narration
        from glarify.data_model import ActorNarration, Keyframe, VideoAnnotation, WordSpan

        words = NARRATION.split(" ")
        spans, offset = [], 0
        for w in words:
            spans.append(WordSpan(offset, offset + len(w), ()))
            offset += len(w) + 1
        actor = ActorNarration("actor_a", NARRATION, tuple(spans), ())
        ann = VideoAnnotation("v", (Keyframe("k", 4, 4),), (actor,))
        samples, drops = attach_trace(draft, ann, "actor_a")
        assert len(samples) == 2
        assert len(drops) == 1
        assert drops[0].reason == "tag offset"


class TestGenerateStages:
    def test_generate_qa_fixture_pass_through(self, fixture_corpus):
        client = ReplayChatClient(fixture_corpus.transcript_path)
        ann = fixture_corpus.annotations[0]
        result = generate_qa(ann, "actor_a", client)
        assert result.raw_questions == 3
        assert len(result.drafts) == 1
        assert len(result.drafts[0].questions) == 3
        assert result.drops == ()

    def test_generate_qa_reconstruction_mismatch_dropped(self, fixture_corpus):
        client = ReplayChatClient(fixture_corpus.transcript_path)
        ann = fixture_corpus.annotations[3]
        result = generate_qa(ann, "actor_a", client)
        assert result.drafts == ()
        assert result.drops[0].reason == "tag reconstruction mismatch"

    def test_generate_qa_client_error_reported(self, fixture_corpus):
        client = ReplayChatClient({})
        ann = fixture_corpus.annotations[0]
        result = generate_qa(ann, "actor_a", client)
        assert result.raw_questions == 0
        assert result.client_error is not None

    def test_generate_cot_fixture_pass_through(self, fixture_corpus):
        from glarify.perturbation import perturb_sample

        client = ReplayChatClient(fixture_corpus.transcript_path)
        ann = fixture_corpus.annotations[0]
        gen = generate_qa(ann, "actor_a", client)
        samples, _ = attach_trace(gen.drafts[0], ann, "actor_a")
        perturbed = perturb_sample(samples[0], ann, 0)
        text = generate_cot(perturbed, ann, client)
        assert text and "gaze" in text

    def test_generate_cot_empty_reasoning_dropped(self, fixture_corpus):
        from glarify.perturbation import perturb_sample

        client = ReplayChatClient(fixture_corpus.transcript_path)
        ann = fixture_corpus.annotations[4]
        gen = generate_qa(ann, "actor_a", client)
        samples, _ = attach_trace(gen.drafts[0], ann, "actor_a")
        perturbed = perturb_sample(samples[0], ann, 0)
        assert generate_cot(perturbed, ann, client) is None


class TestRunPipeline:
    def test_empty_input_empty_outputs(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        cfg = PipelineConfig(input_path=str(empty), output_dir=str(tmp_path / "out"), transcript=None)
        result = run_pipeline(cfg, client=ReplayChatClient({}))
        assert all(s.raw_in == 0 and s.kept == 0 and s.survival_rate == 0.0 for s in result.stats.stages)
        assert Path(result.dataset_path).read_text() == ""

    def test_fixture_stats_match_hand_counts(self, fixture_corpus, tmp_path):
        cfg = PipelineConfig(
            input_path=fixture_corpus.annotations_path,
            output_dir=str(tmp_path / "out"),
            transcript=fixture_corpus.transcript_path,
        )
        result = run_pipeline(cfg)
        for stage in result.stats.stages:
            expected = EXPECTED_STAGE_COUNTS[stage.stage]
            for field, value in expected.items():
                assert getattr(stage, field) == value, (stage.stage, field)
        assert len(result.client_errors) == 1

    def test_stage_monotonicity_and_consistency(self, fixture_corpus, tmp_path):
        cfg = PipelineConfig(
            input_path=fixture_corpus.annotations_path,
            output_dir=str(tmp_path / "out"),
            transcript=fixture_corpus.transcript_path,
        )
        result = run_pipeline(cfg)
        s1, s2, s3 = result.stats.stages
        assert s1.kept >= s2.kept >= s3.kept
        assert s2.raw_in == s1.kept
        assert s3.raw_in == s2.kept
        split = read_dataset(result.dataset_path)
        spatial = sum(s.reasoning_type == "spatial" for s in split.samples)
        assert spatial == s3.questions_spatial
        assert len(split.samples) - spatial == s3.questions_temporal
        for sample in split.samples:
            assert sample.cot
            labels = {lab for k in sample.keyframe_indices for lab in sample.trace_labels[k]}
            if sample.reasoning_type == "spatial":
                assert "injected_irrelevant" in labels
            else:
                assert "propagated" in labels and "injected_irrelevant" not in labels

    def test_determinism_across_runs_and_jobs(self, fixture_corpus, tmp_path):
        def run(out, jobs):
            cfg = PipelineConfig(
                input_path=fixture_corpus.annotations_path,
                output_dir=str(tmp_path / out),
                transcript=fixture_corpus.transcript_path,
                jobs=jobs,
            )
            r = run_pipeline(cfg)
            return tuple(
                hashlib.sha256(Path(p).read_bytes()).hexdigest()
                for p in (r.dataset_path, r.stats_path, r.drops_path)
            )

        assert run("a", 1) == run("b", 1) == run("c", 4)

    def test_drop_reasons_persisted(self, fixture_corpus, tmp_path):
        cfg = PipelineConfig(
            input_path=fixture_corpus.annotations_path,
            output_dir=str(tmp_path / "out"),
            transcript=fixture_corpus.transcript_path,
        )
        result = run_pipeline(cfg)
        recs = [json.loads(line) for line in Path(result.drops_path).read_text().splitlines()]
        reasons = {r["reason"] for r in recs}
        assert reasons == {
            "question count",
            "tag reconstruction mismatch",
            "not ambiguous",
            "no structured block",
            "tag offset",
            "subject has no trace",
            "no irrelevant source",
            "cot",
        }


class TestStatsArtifacts:
    def test_stats_round_trip_and_table(self, fixture_corpus, tmp_path):
        cfg = PipelineConfig(
            input_path=fixture_corpus.annotations_path,
            output_dir=str(tmp_path / "out"),
            transcript=fixture_corpus.transcript_path,
        )
        result = run_pipeline(cfg)
        stats = read_stats(result.stats_path)
        assert stats == result.stats
        table = render_stats_table(stats)
        assert "Generate QA pairs" in table
        assert "Modify Trace Data" in table
        assert "Generate CoT" in table
        assert "93.10%" in table
        assert "Spatial" in table and "Temporal" in table

    def test_config_file_parsing(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# pipeline settings\ninput = ann.jsonl\noutput_dir = out  # trailing comment\nseed = 3\nsigma=1.5\n"
        )
        values = parse_config_file(cfg_file)
        assert values == {"input": "ann.jsonl", "output_dir": "out", "seed": "3", "sigma": "1.5"}
        config = PipelineConfig.from_mapping(values)
        assert config.seed == 3
        assert config.sigma == 1.5

    def test_unknown_config_key_rejected(self):
        with pytest.raises(DataError, match="unknown config key"):
            PipelineConfig.from_mapping({"input": "a", "output_dir": "b", "bogus": "1"})


def test_qa_and_cot_requests_are_deterministic(fixture_corpus):
    ann = fixture_corpus.annotations[0]
    assert request_hash(qa_request(ann, "actor_a")) == request_hash(qa_request(ann, "actor_a"))
    assert "Referable sentence" in qa_request(ann, "actor_a").user_content
    assert len(qa_request(ann, "actor_a").image_refs) == 3
