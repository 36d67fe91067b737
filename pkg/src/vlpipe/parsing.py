"""Parse raw generator text into samples.

The grammar is one or more `Question: ... Answer: ...` blocks. Multi-turn
dialogue (MD) accepts several blocks; every other task takes exactly one.
Region tasks additionally constrain where a box/point literal must
appear. Errors are data: parse_generation never raises on bad input.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .kernels import scan_bracket_literals
from .schema import Point, RegionBox, Sample, TaskType, Turn

QUESTION_MARKER = "Question:"
ANSWER_MARKER = "Answer:"
EOS_MARKERS = ("</s>", "<|endoftext|>")

# error codes
MISSING_QUESTION_MARKER = "MissingQuestionMarker"
MISSING_ANSWER_MARKER = "MissingAnswerMarker"
MALFORMED_BOX = "MalformedBox"
OUT_OF_RANGE_COORDINATE = "OutOfRangeCoordinate"
DEGENERATE_BOX = "DegenerateBox"
EMPTY_FIELD = "EmptyField"
TURN_STRUCTURE_ERROR = "TurnStructureError"


@dataclass(frozen=True)
class ParseError:
    code: str
    offset: int
    detail: str = ""


@dataclass(frozen=True)
class ParseOutcome:
    sample: Sample | None = None
    error: ParseError | None = None

    @property
    def ok(self) -> bool:
        return self.sample is not None


@dataclass(frozen=True)
class BoxSpan:
    box: RegionBox
    char_start: int
    char_end: int


@dataclass(frozen=True)
class PointSpan:
    point: Point
    char_start: int
    char_end: int


class BoxSpanError(ValueError):
    def __init__(self, code: str, offset: int, detail: str = "") -> None:
        super().__init__(f"{code} at offset {offset}: {detail}")
        self.code = code
        self.offset = offset
        self.detail = detail


def _classify_spans(
    text: str, base_offset: int = 0, with_points: bool = False
) -> tuple[list[BoxSpan], list[PointSpan], ParseError | None]:
    """Turn scanned bracket literals into spans; first bad span wins."""
    boxes: list[BoxSpan] = []
    points: list[PointSpan] = []
    for start, end, components in scan_bracket_literals(text):
        offset = base_offset + start
        if len(components) == 2:
            if not with_points:
                continue  # point literals read as prose outside PointQA
            x, y = components
            if x > 1.0 or y > 1.0:
                return boxes, points, ParseError(OUT_OF_RANGE_COORDINATE, offset, text[start:end])
            points.append(PointSpan(Point(x, y), offset, base_offset + end))
            continue
        if len(components) != 4:
            return (
                boxes,
                points,
                ParseError(MALFORMED_BOX, offset, f"{len(components)} components"),
            )
        x1, y1, x2, y2 = components
        if any(c > 1.0 for c in components):
            return boxes, points, ParseError(OUT_OF_RANGE_COORDINATE, offset, text[start:end])
        if x1 >= x2 or y1 >= y2:
            return boxes, points, ParseError(DEGENERATE_BOX, offset, text[start:end])
        boxes.append(BoxSpan(RegionBox(x1, y1, x2, y2), offset, base_offset + end))
    return boxes, points, None


def parse_box_spans(text: str) -> list[BoxSpan]:
    """All box spans in `text`; raises BoxSpanError on the first bad one."""
    boxes, _points, error = _classify_spans(text)
    if error is not None:
        raise BoxSpanError(error.code, error.offset, error.detail)
    return boxes


def parse_point_spans(text: str) -> list[PointSpan]:
    _boxes, points, error = _classify_spans(text, with_points=True)
    if error is not None:
        raise BoxSpanError(error.code, error.offset, error.detail)
    return points


def strip_eos(raw: str) -> str:
    out = raw.rstrip()
    for marker in EOS_MARKERS:
        if out.endswith(marker):
            out = out[: -len(marker)].rstrip()
    return out


def _find_marker(text: str, marker: str, start: int, lenient: bool) -> int:
    if lenient:
        match = re.compile(re.escape(marker), re.IGNORECASE).search(text, start)
        return match.start() if match else -1
    return text.find(marker, start)


def _split_blocks(
    raw: str, lenient: bool
) -> tuple[list[tuple[str, int, str, int]], ParseError | None]:
    """Cut the text into (question, q_offset, answer, a_offset) blocks."""
    q_positions = []
    pos = 0
    while True:
        found = _find_marker(raw, QUESTION_MARKER, pos, lenient)
        if found < 0:
            break
        q_positions.append(found)
        pos = found + len(QUESTION_MARKER)
    if not q_positions:
        return [], ParseError(MISSING_QUESTION_MARKER, 0)

    head = raw[: q_positions[0]]
    a_before = _find_marker(head, ANSWER_MARKER, 0, lenient)
    if a_before >= 0:
        return [], ParseError(TURN_STRUCTURE_ERROR, a_before, "answer before first question")

    blocks = []
    for i, q_pos in enumerate(q_positions):
        block_end = q_positions[i + 1] if i + 1 < len(q_positions) else len(raw)
        body_start = q_pos + len(QUESTION_MARKER)
        a_pos = _find_marker(raw, ANSWER_MARKER, body_start, lenient)
        if a_pos < 0 or a_pos >= block_end:
            return [], ParseError(MISSING_ANSWER_MARKER, q_pos)
        question = raw[body_start:a_pos]
        answer = raw[a_pos + len(ANSWER_MARKER) : block_end]
        if _find_marker(answer, ANSWER_MARKER, 0, lenient) >= 0:
            return [], ParseError(
                TURN_STRUCTURE_ERROR, a_pos, "multiple answers in one block"
            )
        blocks.append((question, body_start, answer, a_pos + len(ANSWER_MARKER)))
    return blocks, None


def _require(condition: bool, code: str, offset: int, detail: str) -> ParseError | None:
    return None if condition else ParseError(code, offset, detail)


def _check_task_structure(
    task: TaskType,
    q_boxes: list[BoxSpan],
    q_points: list[PointSpan],
    a_boxes: list[BoxSpan],
    answer_text: str,
    q_offset: int,
    a_offset: int,
) -> ParseError | None:
    if task is TaskType.REC:
        return _require(len(a_boxes) >= 1, TURN_STRUCTURE_ERROR, a_offset, "REC answer needs a box")
    if task is TaskType.REG:
        err = _require(len(q_boxes) >= 1, TURN_STRUCTURE_ERROR, q_offset, "REG question needs a box")
        if err:
            return err
        bare = answer_text
        for span in sorted(a_boxes, key=lambda s: s.char_start, reverse=True):
            bare = bare[: span.char_start - a_offset] + bare[span.char_end - a_offset :]
        return _require(
            bool(bare.strip()), TURN_STRUCTURE_ERROR, a_offset, "REG answer needs text"
        )
    if task is TaskType.PointQA:
        return _require(
            len(q_points) >= 1 or len(q_boxes) >= 1,
            TURN_STRUCTURE_ERROR,
            q_offset,
            "PointQA question needs a point or box",
        )
    return None


def parse_generation(
    raw: str, task: TaskType, image_ref: str, lenient: bool = False
) -> ParseOutcome:
    """Parse one raw generation into a Sample; never raises on bad input."""
    text = strip_eos(raw)
    blocks, error = _split_blocks(text, lenient)
    if error is not None:
        return ParseOutcome(error=error)

    if task is not TaskType.MD and len(blocks) != 1:
        return ParseOutcome(
            error=ParseError(
                TURN_STRUCTURE_ERROR,
                0,
                f"{task.name} requires exactly 1 block, got {len(blocks)}",
            )
        )

    turns: list[Turn] = []
    for question, q_offset, answer, a_offset in blocks:
        question_text = question.strip()
        answer_text = answer.strip()
        if not question_text:
            return ParseOutcome(error=ParseError(EMPTY_FIELD, q_offset, "empty question"))
        if not answer_text:
            return ParseOutcome(error=ParseError(EMPTY_FIELD, a_offset, "empty answer"))

        with_points = task is TaskType.PointQA
        q_boxes, q_points, err = _classify_spans(question, q_offset, with_points)
        if err is None:
            a_boxes, _a_points, err = _classify_spans(answer, a_offset, with_points)
        if err is not None:
            return ParseOutcome(error=err)

        err = _check_task_structure(
            task, q_boxes, q_points, a_boxes, answer, q_offset, a_offset
        )
        if err is not None:
            return ParseOutcome(error=err)
        turns.append(Turn(question_text, answer_text))

    sample_id = hashlib.blake2b(
        f"{image_ref}\x00{raw}".encode("utf-8"), digest_size=8
    ).hexdigest()
    return ParseOutcome(
        sample=Sample(
            id=sample_id,
            image_ref=image_ref,
            task=task,
            turns=tuple(turns),
            provenance="generated",
        )
    )


def serialize_target(sample: Sample) -> str:
    """Canonical `Question: {q} Answer: {a}` text, one block per turn."""
    blocks = [
        f"{QUESTION_MARKER} {turn.question} {ANSWER_MARKER} {turn.answer}"
        for turn in sample.turns
    ]
    return "\n".join(blocks)
