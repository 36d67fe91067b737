from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fixture_utils
from vlpipe.parsing import (
    BoxSpanError,
    parse_box_spans,
    parse_generation,
    parse_point_spans,
    serialize_target,
    strip_eos,
)
from vlpipe.schema import TaskType, validate_sample

REC_RAW = (
    "Question: I'd like to request the coordinates of A chalkboard menu within "
    "the photo. Answer: [0.320,0.283,0.702,0.635]."
)
COMMON_RAW = (
    "Question: What is the man's position on the baseball field? Answer: The man "
    "is in the batter's box, which is a designated area on the baseball field "
    "where the batter stands to hit the ball."
)


class TestParseGeneration:
    def test_common_vqa_single_turn(self):
        outcome = parse_generation(COMMON_RAW, TaskType.CommonVQA, "img")
        assert outcome.ok
        assert len(outcome.sample.turns) == 1
        assert outcome.sample.turns[0].question.startswith("What is the man's position")
        assert outcome.sample.provenance == "generated"

    def test_rec_with_answer_box(self):
        outcome = parse_generation(REC_RAW, TaskType.REC, "img")
        assert outcome.ok
        spans = parse_box_spans(outcome.sample.turns[0].answer)
        assert len(spans) == 1
        assert (spans[0].box.x1, spans[0].box.y1, spans[0].box.x2, spans[0].box.y2) == (
            0.320,
            0.283,
            0.702,
            0.635,
        )

    def test_missing_question_marker(self):
        outcome = parse_generation("Answer: yes", TaskType.CommonVQA, "img")
        assert outcome.error is not None
        assert outcome.error.code == "MissingQuestionMarker"

    def test_missing_answer_marker(self):
        outcome = parse_generation("Question: what now", TaskType.CommonVQA, "img")
        assert outcome.error.code == "MissingAnswerMarker"

    def test_degenerate_box_inverted(self):
        outcome = parse_generation(
            "Question: q Answer: [0.9,0.2,0.1,0.5]", TaskType.REC, "img"
        )
        assert outcome.error.code == "DegenerateBox"

    def test_rec_requires_box(self):
        outcome = parse_generation("Question: q Answer: over there", TaskType.REC, "img")
        assert outcome.error.code == "TurnStructureError"

    def test_reg_requires_question_box_and_text_answer(self):
        ok = parse_generation(
            "Question: What is in [0.1,0.1,0.5,0.5]? Answer: A large rock",
            TaskType.REG,
            "img",
        )
        assert ok.ok
        missing_box = parse_generation(
            "Question: What is here? Answer: A large rock", TaskType.REG, "img"
        )
        assert missing_box.error.code == "TurnStructureError"

    def test_pointqa_accepts_point_or_box(self):
        by_point = parse_generation(
            "Question: What is at [0.5,0.5]? Answer: a dog", TaskType.PointQA, "img"
        )
        assert by_point.ok
        by_box = parse_generation(
            "Question: What is at [0.2,0.2,0.6,0.6]? Answer: a dog", TaskType.PointQA, "img"
        )
        assert by_box.ok
        neither = parse_generation(
            "Question: What is there? Answer: a dog", TaskType.PointQA, "img"
        )
        assert neither.error.code == "TurnStructureError"

    def test_md_accepts_multiple_blocks(self):
        raw = "Question: a? Answer: b.\nQuestion: c? Answer: d."
        outcome = parse_generation(raw, TaskType.MD, "img")
        assert outcome.ok
        assert len(outcome.sample.turns) == 2
        single_task = parse_generation(raw, TaskType.CommonVQA, "img")
        assert single_task.error.code == "TurnStructureError"

    def test_empty_fields(self):
        outcome = parse_generation("Question:  Answer: b", TaskType.CommonVQA, "img")
        assert outcome.error.code == "EmptyField"
        outcome = parse_generation("Question: a? Answer:  ", TaskType.CommonVQA, "img")
        assert outcome.error.code == "EmptyField"

    def test_markers_case_sensitive_unless_lenient(self):
        raw = "question: a? answer: b"
        assert parse_generation(raw, TaskType.CommonVQA, "img").error is not None
        assert parse_generation(raw, TaskType.CommonVQA, "img", lenient=True).ok

    def test_eos_marker_stripped(self):
        assert strip_eos("text </s>") == "text"
        outcome = parse_generation("Question: a? Answer: b </s>", TaskType.CommonVQA, "img")
        assert outcome.ok
        assert outcome.sample.turns[0].answer == "b"


class TestParseBoxSpans:
    def test_single_span_with_offsets(self):
        text = "the region [0.064,0.277,0.406,0.586] in image"
        spans = parse_box_spans(text)
        assert len(spans) == 1
        span = spans[0]
        assert text[span.char_start : span.char_end] == "[0.064,0.277,0.406,0.586]"

    def test_spaces_after_commas(self):
        spans = parse_box_spans("[0.2, 0.05, 0.8, 0.95]")
        assert len(spans) == 1
        assert spans[0].box.y1 == 0.05

    def test_prose_brackets_ignored(self):
        assert parse_box_spans("no boxes here [see figure] [a, b]") == []

    def test_out_of_range(self):
        with pytest.raises(BoxSpanError) as excinfo:
            parse_box_spans("[1.2,0.0,1.5,0.5]")
        assert excinfo.value.code == "OutOfRangeCoordinate"

    def test_malformed_component_count(self):
        with pytest.raises(BoxSpanError) as excinfo:
            parse_box_spans("take [3,4,5] items")
        assert excinfo.value.code == "MalformedBox"

    def test_two_number_literal_is_not_a_box(self):
        assert parse_box_spans("point [0.5,0.5] here") == []
        points = parse_point_spans("point [0.5,0.5] here")
        assert len(points) == 1

    def test_trailing_punctuation_outside_span(self):
        text = "Answer: [0.320,0.283,0.702,0.635]."
        span = parse_box_spans(text)[0]
        assert text[span.char_end] == "."

    def test_offset_substring_reparses(self):
        rng = random.Random(5)
        for _ in range(200):
            sample = fixture_utils.random_sample(TaskType.QCBoxA, rng)
            text = sample.turns[0].answer
            for span in parse_box_spans(text):
                again = parse_box_spans(text[span.char_start : span.char_end])
                assert len(again) == 1
                assert again[0].box == span.box


class TestSerializeTarget:
    def test_rec_canonical_form(self):
        outcome = parse_generation(
            "Question: I need the coordinates of the person at the bottom left of the "
            "image. Can you assist? Answer: [0.005,0.332,0.249,0.984]",
            TaskType.REC,
            "img",
        )
        assert serialize_target(outcome.sample) == (
            "Question: I need the coordinates of the person at the bottom left of the "
            "image. Can you assist? Answer: [0.005,0.332,0.249,0.984]"
        )

    def test_md_blocks_joined_by_newline(self):
        rng = random.Random(11)
        sample = None
        while sample is None or len(sample.turns) != 2:
            sample = fixture_utils.random_sample(TaskType.MD, rng)
        text = serialize_target(sample)
        assert text.count("\n") == 1
        assert text.count("Question:") == 2

    def test_round_trip_all_tasks(self):
        rng = random.Random(31337)
        for task in TaskType:
            for _ in range(50):
                sample = fixture_utils.random_sample(task, rng)
                assert validate_sample(sample) == []
                outcome = parse_generation(serialize_target(sample), task, sample.image_ref)
                assert outcome.ok, (task, serialize_target(sample), outcome.error)
                assert outcome.sample.task == sample.task
                assert outcome.sample.turns == sample.turns


class TestTotality:
    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=300), st.sampled_from(list(TaskType)))
    def test_never_raises_on_text(self, raw, task):
        outcome = parse_generation(raw, task, "img")
        assert (outcome.sample is None) != (outcome.error is None)
        if outcome.error is not None:
            assert 0 <= outcome.error.offset <= len(raw)

    @settings(max_examples=300, deadline=None)
    @given(st.binary(max_size=200))
    def test_never_raises_on_bytes(self, blob):
        raw = blob.decode("latin-1")
        parse_generation(raw, TaskType.REC, "img")

    def test_deterministic(self):
        raw = "Question: q [0.1,0.2,0.3,0.4] Answer: a [0.2,0.2,0.9,0.9]"
        results = {str(parse_generation(raw, TaskType.QCBoxA, "img")) for _ in range(10)}
        assert len(results) == 1
