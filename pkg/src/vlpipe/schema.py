"""Canonical domain types, coordinate handling and record serialization.

Coordinates are fractions of image width/height in [0, 1], written as
`[x1,y1,x2,y2]` with exactly three decimals (round-half-up). Samples are
stored one JSON object per line; manifests as a header object followed by
one entry per line. All text is UTF-8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .kernels import scan_bracket_literals


class TaskType(Enum):
    """The ten instruction-data task categories."""

    CommonVQA = "Common VQA"
    AdvVQA = "Adv VQA"
    RcVQA = "RC VQA"
    CotVQA = "CoT VQA"
    MD = "MD"
    REC = "REC"
    REG = "REG"
    PointQA = "PointQA"
    QCBoxA = "Q→C^Box A"
    RD = "RD"

    @property
    def display_name(self) -> str:
        return self.value

    @property
    def is_region(self) -> bool:
        return self in _REGION_TASKS

    @classmethod
    def from_name(cls, name: str) -> "TaskType":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown task type: {name!r}") from None


_REGION_TASKS = frozenset(
    {TaskType.REC, TaskType.REG, TaskType.PointQA, TaskType.QCBoxA, TaskType.RD}
)

NONREGION_TASKS = tuple(t for t in TaskType if not t.is_region)
REGION_TASKS = tuple(t for t in TaskType if t.is_region)


def _round3(value: float) -> str:
    """Format with exactly 3 decimals, round-half-up on the decimal repr."""
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def _exact(value: float) -> Fraction:
    # Fraction(repr(x)) follows the shortest decimal form, so 0.702 * 1000
    # lands exactly on 702 instead of drifting one ulp across it.
    return Fraction(repr(value))


@dataclass(frozen=True)
class RegionBox:
    """Axis-aligned box, corners as fractions of width/height."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"invalid box: {(self.x1, self.y1, self.x2, self.y2)}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


@dataclass(frozen=True)
class Point:
    """A position as fractions of width/height."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"invalid point: {(self.x, self.y)}")


def serialize_box(box: RegionBox) -> str:
    """`[x1,y1,x2,y2]`, 3 decimals, no interior spaces."""
    return f"[{_round3(box.x1)},{_round3(box.y1)},{_round3(box.x2)},{_round3(box.y2)}]"


def serialize_point(point: Point) -> str:
    """`[x,y]`, mirroring the box convention."""
    return f"[{_round3(point.x)},{_round3(point.y)}]"


def parse_box(text: str) -> RegionBox:
    """Parse a single serialized box, the inverse of serialize_box."""
    spans = scan_bracket_literals(text.strip())
    if len(spans) != 1 or len(spans[0][2]) != 4:
        raise ValueError(f"not a box literal: {text!r}")
    return RegionBox(*spans[0][2])


def box_to_pixels(box: RegionBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer (left, top, right, bottom) crop rectangle.

    Outer rounding (floor the min corner, ceil the max corner) so the crop
    never loses referenced content. Exact decimal arithmetic keeps e.g.
    0.702 * 1000 from ceiling to 703.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    left = math.floor(_exact(box.x1) * width)
    top = math.floor(_exact(box.y1) * height)
    right = math.ceil(_exact(box.x2) * width)
    bottom = math.ceil(_exact(box.y2) * height)
    return left, top, right, bottom


@dataclass(frozen=True)
class Turn:
    question: str
    answer: str


@dataclass(frozen=True)
class GeneratorMeta:
    backend: str
    prompt_id: int
    seed: int


@dataclass(frozen=True)
class Sample:
    """One instruction-tuning record."""

    id: str
    image_ref: str
    task: TaskType
    turns: tuple[Turn, ...]
    provenance: str = "ingested"
    generator_meta: GeneratorMeta | None = None


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""


PROVENANCES = ("ingested", "generated")


def _check_text_spans(text: str, where: str, violations: list[Violation]) -> None:
    for start, _end, components in scan_bracket_literals(text):
        if len(components) == 2:
            continue  # point literal or prose; only PointQA interprets these
        if len(components) != 4:
            violations.append(
                Violation("MalformedBox", f"{where}@{start}: {len(components)} components")
            )
            continue
        x1, y1, x2, y2 = components
        if any(c < 0.0 or c > 1.0 for c in components):
            violations.append(Violation("OutOfRangeCoordinate", f"{where}@{start}"))
        elif x1 >= x2 or y1 >= y2:
            violations.append(Violation("DegenerateBox", f"{where}@{start}"))


def validate_sample(sample: Sample) -> list[Violation]:
    """All invariant violations; empty list means the sample is valid."""
    violations: list[Violation] = []
    if not sample.id.strip():
        violations.append(Violation("EmptyId"))
    if not sample.image_ref.strip():
        violations.append(Violation("EmptyImageRef"))
    if sample.provenance not in PROVENANCES:
        violations.append(Violation("BadProvenance", sample.provenance))
    if not sample.turns:
        violations.append(Violation("NoTurns"))
    elif sample.task is not TaskType.MD and len(sample.turns) != 1:
        violations.append(
            Violation(
                "TurnCountMismatch",
                f"{sample.task.name} requires exactly 1 turn, got {len(sample.turns)}",
            )
        )
    for idx, turn in enumerate(sample.turns):
        if not turn.question.strip():
            violations.append(Violation("EmptyField", f"turn {idx} question"))
        if not turn.answer.strip():
            violations.append(Violation("EmptyField", f"turn {idx} answer"))
        _check_text_spans(turn.question, f"turn {idx} question", violations)
        _check_text_spans(turn.answer, f"turn {idx} answer", violations)
    return violations


# ---------------------------------------------------------------------------
# Record I/O


def sample_to_dict(sample: Sample) -> dict:
    record = {
        "id": sample.id,
        "image": sample.image_ref,
        "task": sample.task.name,
        "turns": [{"question": t.question, "answer": t.answer} for t in sample.turns],
        "provenance": sample.provenance,
    }
    if sample.generator_meta is not None:
        record["generator_meta"] = {
            "backend": sample.generator_meta.backend,
            "prompt_id": sample.generator_meta.prompt_id,
            "seed": sample.generator_meta.seed,
        }
    return record


def sample_from_dict(record: dict) -> Sample:
    meta = record.get("generator_meta")
    return Sample(
        id=record["id"],
        image_ref=record["image"],
        task=TaskType.from_name(record["task"]),
        turns=tuple(Turn(t["question"], t["answer"]) for t in record["turns"]),
        provenance=record.get("provenance", "ingested"),
        generator_meta=(
            GeneratorMeta(meta["backend"], meta["prompt_id"], meta["seed"]) if meta else None
        ),
    )


def dump_json_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_samples(samples: Iterable[Sample], out: TextIO) -> int:
    count = 0
    for sample in samples:
        out.write(dump_json_line(sample_to_dict(sample)) + "\n")
        count += 1
    return count


def read_samples(path: str | Path) -> Iterator[Sample]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield sample_from_dict(json.loads(line))


# ---------------------------------------------------------------------------
# Corpus manifest


@dataclass(frozen=True)
class ManifestEntry:
    image_ref: str
    width: int
    height: int
    source_tag: str


@dataclass
class CorpusManifest:
    name: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        refs = [e.image_ref for e in self.entries]
        if len(set(refs)) != len(refs):
            raise ValueError("manifest entries must be unique by image_ref")
        for entry in self.entries:
            if entry.width < 1 or entry.height < 1:
                raise ValueError(f"bad dimensions for {entry.image_ref}")

    @property
    def declared_count(self) -> int:
        return len(self.entries)

    def lookup(self, image_ref: str) -> ManifestEntry | None:
        if not hasattr(self, "_index"):
            self._index = {e.image_ref: e for e in self.entries}
        return self._index.get(image_ref)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as out:
            out.write(dump_json_line({"name": self.name, "declared_count": self.declared_count}))
            out.write("\n")
            for e in self.entries:
                out.write(
                    dump_json_line(
                        {
                            "image": e.image_ref,
                            "width": e.width,
                            "height": e.height,
                            "source": e.source_tag,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def read(cls, path: str | Path) -> "CorpusManifest":
        with open(path, encoding="utf-8") as handle:
            lines = [line.strip() for line in handle if line.strip()]
        if not lines:
            raise ValueError(f"empty manifest file: {path}")
        header = json.loads(lines[0])
        entries = [
            ManifestEntry(rec["image"], rec["width"], rec["height"], rec.get("source", ""))
            for rec in map(json.loads, lines[1:])
        ]
        manifest = cls(name=header["name"], entries=entries)
        declared = header.get("declared_count")
        if declared is not None and declared != manifest.declared_count:
            raise ValueError(
                f"manifest declares {declared} entries but contains {manifest.declared_count}"
            )
        return manifest
