"""Human review: batch sampling, session ingestion, report aggregation.

Annotators see a batch of generated samples, assign each a question type
and a correct/incorrect judgment, and export a session file. Reports
group by question type with a rounded correctness percentage.

Batch file: header {"kind": "eval_batch", "batch_id", "tag", "seed",
"n", "source"} then one sample record per line. Session file: header
{"kind": "eval_session", "schema_version", "session_id", "annotator",
"batch_ref"} then {"sample_id", "type", "correct", "timestamp"} lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .rng import seeded_shuffle
from .schema import Sample, dump_json_line, sample_from_dict, sample_to_dict

BATCH_TAGS = ("held_in", "held_out")
SESSION_SCHEMA_VERSION = 1


class QuestionTypeLabel(Enum):
    Action = "Action"
    Color = "Color"
    Counting = "Counting"
    ObjectType = "Object Type"
    RelativePosition = "Relative Position"
    YesNo = "Yes/No"
    Others = "Others"

    @property
    def display_name(self) -> str:
        return self.value

    @classmethod
    def from_name(cls, name: str) -> "QuestionTypeLabel":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown question type: {name!r}") from None


REPORT_ROW_ORDER = tuple(QuestionTypeLabel)


class EvalError(ValueError):
    pass


class InsufficientSamplesError(EvalError):
    pass


class SchemaViolationError(EvalError):
    pass


class UnknownSampleIdError(EvalError):
    pass


class DuplicateJudgmentError(EvalError):
    pass


class IncompleteSessionError(EvalError):
    pass


@dataclass(frozen=True)
class Judgment:
    sample_id: str
    type: QuestionTypeLabel
    correct: bool
    timestamp: str


@dataclass(frozen=True)
class EvalSession:
    session_id: str
    annotator_id: str
    batch_ref: str
    judgments: tuple[Judgment, ...]
    status: str

    def judged_ids(self) -> set[str]:
        return {j.sample_id for j in self.judgments}


@dataclass(frozen=True)
class EvalBatch:
    batch_id: str
    tag: str
    seed: int
    source: str
    samples: tuple[Sample, ...]

    @property
    def size(self) -> int:
        return len(self.samples)

    def sample_ids(self) -> set[str]:
        return {s.id for s in self.samples}


def sample_batch(
    samples_path: str | Path, n: int, seed: int, tag: str, batch_id: str | None = None
) -> EvalBatch:
    """Draw n samples without replacement via a seeded shuffle."""
    if tag not in BATCH_TAGS:
        raise ValueError(f"tag must be one of {BATCH_TAGS}")
    if n < 0:
        raise ValueError("n must be >= 0")
    pool: list[Sample] = []
    with open(samples_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                pool.append(sample_from_dict(json.loads(line)))
    if len(pool) < n:
        raise InsufficientSamplesError(f"corpus has {len(pool)} samples, need {n}")
    chosen = seeded_shuffle(pool, seed)[:n]
    return EvalBatch(
        batch_id=batch_id or f"{tag}-{seed}-{n}",
        tag=tag,
        seed=seed,
        source=str(samples_path),
        samples=tuple(chosen),
    )


def write_batch(batch: EvalBatch, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(
            dump_json_line(
                {
                    "kind": "eval_batch",
                    "batch_id": batch.batch_id,
                    "tag": batch.tag,
                    "seed": batch.seed,
                    "n": batch.size,
                    "source": batch.source,
                }
            )
            + "\n"
        )
        for sample in batch.samples:
            out.write(dump_json_line(sample_to_dict(sample)) + "\n")


def read_batch(path: str | Path) -> EvalBatch:
    with open(path, encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines:
        raise SchemaViolationError(f"{path}: empty batch file")
    header = json.loads(lines[0])
    if header.get("kind") != "eval_batch":
        raise SchemaViolationError(f"{path}: missing eval_batch header")
    samples = tuple(sample_from_dict(json.loads(line)) for line in lines[1:])
    return EvalBatch(
        batch_id=header["batch_id"],
        tag=header["tag"],
        seed=int(header["seed"]),
        source=header.get("source", ""),
        samples=samples,
    )


def ingest_session(path: str | Path, batch: EvalBatch) -> EvalSession:
    """Validate and load a session file against its batch."""
    with open(path, encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines:
        raise SchemaViolationError(f"{path}: empty session file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"{path}: bad header: {exc}") from exc
    if header.get("kind") != "eval_session":
        raise SchemaViolationError(f"{path}: missing eval_session header")
    if header.get("schema_version") != SESSION_SCHEMA_VERSION:
        raise SchemaViolationError(
            f"{path}: unsupported schema_version {header.get('schema_version')!r}"
        )
    for field_name in ("session_id", "annotator", "batch_ref"):
        if not header.get(field_name):
            raise SchemaViolationError(f"{path}: header missing {field_name!r}")

    valid_ids = batch.sample_ids()
    judgments: list[Judgment] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            judgment = Judgment(
                sample_id=str(record["sample_id"]),
                type=QuestionTypeLabel.from_name(record["type"]),
                correct=bool(record["correct"]),
                timestamp=str(record.get("timestamp", "")),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise SchemaViolationError(f"{path}:{lineno}: {exc}") from exc
        if judgment.sample_id not in valid_ids:
            raise UnknownSampleIdError(f"{path}:{lineno}: {judgment.sample_id!r}")
        if judgment.sample_id in seen:
            raise DuplicateJudgmentError(f"{path}:{lineno}: {judgment.sample_id!r}")
        seen.add(judgment.sample_id)
        judgments.append(judgment)

    status = "complete" if seen == valid_ids else "open"
    return EvalSession(
        session_id=header["session_id"],
        annotator_id=header["annotator"],
        batch_ref=header["batch_ref"],
        judgments=tuple(judgments),
        status=status,
    )


def write_session(session: EvalSession, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(
            dump_json_line(
                {
                    "kind": "eval_session",
                    "schema_version": SESSION_SCHEMA_VERSION,
                    "session_id": session.session_id,
                    "annotator": session.annotator_id,
                    "batch_ref": session.batch_ref,
                }
            )
            + "\n"
        )
        for j in session.judgments:
            out.write(
                dump_json_line(
                    {
                        "sample_id": j.sample_id,
                        "type": j.type.name,
                        "correct": j.correct,
                        "timestamp": j.timestamp,
                    }
                )
                + "\n"
            )


def _percent(correct: int, count: int) -> int:
    # round-half-up on the exact fraction, in integer arithmetic
    return (200 * correct + count) // (2 * count)


@dataclass(frozen=True)
class ReportRow:
    type: QuestionTypeLabel
    samples: int
    correct_percent: int


def aggregate(
    sessions: Sequence[EvalSession], batch: EvalBatch
) -> tuple[list[ReportRow], float | None]:
    """Per-type counts and correctness; plus raw agreement when multi-rated.

    Counts tally every judgment across sessions, so with one complete
    session per-type sample counts sum to the batch size. Agreement is
    the fraction of samples where all sessions gave the same type and
    correctness (None for a single session).
    """
    if not sessions:
        raise ValueError("need at least one session")
    for session in sessions:
        if session.status != "complete" or session.judged_ids() != batch.sample_ids():
            raise IncompleteSessionError(
                f"session {session.session_id} does not cover batch {batch.batch_id}"
            )

    counts: dict[QuestionTypeLabel, int] = {t: 0 for t in REPORT_ROW_ORDER}
    corrects: dict[QuestionTypeLabel, int] = {t: 0 for t in REPORT_ROW_ORDER}
    for session in sessions:
        for judgment in session.judgments:
            counts[judgment.type] += 1
            corrects[judgment.type] += int(judgment.correct)

    rows = [
        ReportRow(t, counts[t], _percent(corrects[t], counts[t]))
        for t in REPORT_ROW_ORDER
        if counts[t]
    ]

    agreement = None
    if len(sessions) > 1:
        by_sample = [
            {j.sample_id: (j.type, j.correct) for j in session.judgments}
            for session in sessions
        ]
        agreeing = sum(
            1
            for sample_id in batch.sample_ids()
            if len({marks[sample_id] for marks in by_sample}) == 1
        )
        agreement = agreeing / batch.size if batch.size else 1.0
    return rows, agreement


def render_report(
    rows: Iterable[ReportRow], title: str = "Question Type breakdown"
) -> str:
    cells = [("Question Type", "#Samples", "Correct (~%)")]
    for row in rows:
        cells.append((row.type.display_name, str(row.samples), str(row.correct_percent)))
    widths = [max(len(c[i]) for c in cells) for i in range(3)]
    lines = [title]
    for line in cells:
        lines.append(
            "  ".join(
                line[0].ljust(widths[0]) if i == 0 else line[i].rjust(widths[i])
                for i in range(3)
            ).rstrip()
        )
    return "\n".join(lines)
