"""Region-similarity quality gate and deduplication.

Each region sample is scored by cropping the referenced box, embedding
the crop and its paired text expression, and comparing the two unit
vectors. Samples keep only when every box clears the threshold
(default 0.5, strict-below rejection).

Raw text-image cosines from contrastive encoders rarely reach 0.5, so
the default "rescaled" mode stretches the clamped cosine by 2.5x (capped
at 1) before thresholding; "raw" mode applies the threshold directly.
Run summaries name the active mode since the right reading of the 0.5
cut is an interpretation, not a recorded fact.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import requests
from PIL import Image

from .kernels import dot
from .parsing import BoxSpan, parse_box_spans
from .rng import SplitMix64
from .schema import (
    Sample,
    TaskType,
    box_to_pixels,
    dump_json_line,
    sample_from_dict,
    sample_to_dict,
    validate_sample,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
SCORE_MODES = ("rescaled", "raw")
RESCALE_FACTOR = 2.5

KEEP = "keep"
REJECT = "reject"

REASON_BELOW_THRESHOLD = "below_threshold"
REASON_DUPLICATE = "duplicate"
REASON_PARSE_FAILED = "parse_failed"
REASON_CROP_FAILED = "crop_failed"
REASON_NA = "n/a"


class DimensionMismatchError(ValueError):
    pass


class EmbeddingBackend:
    """Interface: embed_text / embed_image return unit vectors of length d."""

    dimension: int = 0

    def embed_text(self, text: str) -> list[float]:
        raise NotImplementedError

    def embed_image(self, image_bytes: bytes) -> list[float]:
        raise NotImplementedError


def hash_unit_vector(payload: bytes, dimension: int, salt: int = 0) -> list[float]:
    """Seeded-hash unit vector: same payload, same vector, any platform."""
    digest = hashlib.blake2b(payload, digest_size=8, salt=salt.to_bytes(8, "big")).digest()
    rng = SplitMix64(int.from_bytes(digest, "big"))
    values = [2.0 * rng.next_float() - 1.0 for _ in range(dimension)]
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        values[0] = 1.0
        return values
    return [v / norm for v in values]


def decoded_pixel_payload(image_bytes: bytes) -> bytes:
    """Stable payload for an image: mode, size and raw pixels, not file bytes."""
    with Image.open(io.BytesIO(image_bytes)) as image:
        image.load()
        return (
            image.mode.encode() + b"\x00" + f"{image.width}x{image.height}".encode()
            + b"\x00" + image.tobytes()
        )


class DeterministicEmbeddingBackend(EmbeddingBackend):
    """Hash-derived embeddings for CI and reproducible runs."""

    def __init__(self, dimension: int = 64, seed: int = 0) -> None:
        self.dimension = dimension
        self.seed = seed

    def embed_text(self, text: str) -> list[float]:
        return hash_unit_vector(b"text\x00" + text.encode("utf-8"), self.dimension, self.seed)

    def embed_image(self, image_bytes: bytes) -> list[float]:
        return hash_unit_vector(
            b"image\x00" + decoded_pixel_payload(image_bytes), self.dimension, self.seed
        )


class RemoteEmbeddingBackend(EmbeddingBackend):
    """HTTP client for the embedding service wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 30.0, token: str | None = None) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.token = token
        info = self._request("get", "/info")
        self.dimension = int(info["dimension"])
        self.model = info.get("model", "unknown")

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        response = requests.request(
            method, f"{self.endpoint}{path}", json=payload, timeout=self.timeout, headers=headers
        )
        response.raise_for_status()
        return response.json()

    def embed_text(self, text: str) -> list[float]:
        return [float(v) for v in self._request("post", "/embed_text", {"text": text})["vector"]]

    def embed_image(self, image_bytes: bytes) -> list[float]:
        payload = {"image": base64.b64encode(image_bytes).decode()}
        return [float(v) for v in self._request("post", "/embed_image", payload)["vector"]]


def similarity_score(
    text_vec: Sequence[float], image_vec: Sequence[float], mode: str = "rescaled"
) -> float:
    """Clamped cosine of two unit vectors, optionally rescaled into [0, 1]."""
    if len(text_vec) != len(image_vec):
        raise DimensionMismatchError(f"{len(text_vec)} vs {len(image_vec)}")
    if mode not in SCORE_MODES:
        raise ValueError(f"unknown score mode: {mode}")
    cosine = max(dot(text_vec, image_vec), 0.0)
    if mode == "raw":
        return min(cosine, 1.0)
    return min(RESCALE_FACTOR * cosine, 1.0)


# ---------------------------------------------------------------------------
# Expression extraction


@dataclass(frozen=True)
class ExtractionRules:
    """How the scored text expression is cut out of the question/answer.

    The wrapping phrases below mirror the question templates this repo
    generates and the common phrasings seen from region generators; they
    are versioned because there is no canonical definition.
    """

    version: str = "v1"
    prefixes: tuple[str, ...] = (
        "i need the coordinates of",
        "i'd like to request the coordinates of",
        "please provide the coordinates of",
        "can you provide the coordinates of",
        "give me the coordinates of",
        "what are the coordinates of",
        "provide the bounding box of",
        "find the location of",
    )
    courtesy_suffixes: tuple[str, ...] = (
        "can you assist?",
        "can you help?",
        "thanks.",
        "thank you.",
    )
    location_suffixes: tuple[str, ...] = (
        "within the photo",
        "within the image",
        "within the picture",
        "in the photo",
        "in the image",
        "in the picture",
    )
    leading_articles: tuple[str, ...] = ("the ", "a ", "an ")


DEFAULT_RULES = ExtractionRules()


def _strip_spans(text: str) -> str:
    out = text
    for span in sorted(_safe_spans(text), key=lambda s: s.char_start, reverse=True):
        out = out[: span.char_start] + out[span.char_end :]
    return " ".join(out.split())


def _safe_spans(text: str) -> list[BoxSpan]:
    try:
        return parse_box_spans(text)
    except Exception:
        return []


def extract_expression(text: str, rules: ExtractionRules = DEFAULT_RULES) -> str:
    """Strip instruction boilerplate so only the referring phrase remains."""
    expr = " ".join(_strip_spans(text).split())
    lowered = expr.lower()
    for prefix in rules.prefixes:
        if lowered.startswith(prefix):
            expr = expr[len(prefix) :]
            break
    expr = expr.strip()
    lowered = expr.lower()
    for suffix in rules.courtesy_suffixes:
        if lowered.endswith(suffix):
            expr = expr[: len(expr) - len(suffix)]
            break
    expr = expr.strip().rstrip(".,;:")
    lowered = expr.lower()
    for suffix in rules.location_suffixes:
        if lowered.endswith(suffix) and len(expr) > len(suffix):
            expr = expr[: len(expr) - len(suffix)]
            break
    expr = expr.strip().rstrip(".,;:")
    lowered = expr.lower()
    for article in rules.leading_articles:
        if lowered.startswith(article):
            expr = expr[len(article) :]
            break
    return expr.strip()


def paired_expression(sample: Sample, turn_index: int, box_in_answer: bool,
                      rules: ExtractionRules = DEFAULT_RULES) -> str:
    """The text scored against a crop from the given turn."""
    turn = sample.turns[turn_index]
    if sample.task is TaskType.REC:
        return extract_expression(turn.question, rules)
    if sample.task is TaskType.REG:
        return extract_expression(turn.answer, rules)
    opposite = turn.question if box_in_answer else turn.answer
    text = _strip_spans(opposite)
    if not text:
        text = _strip_spans(turn.answer if box_in_answer else turn.question)
    return text


# ---------------------------------------------------------------------------
# Verdicts


@dataclass(frozen=True)
class FilterVerdict:
    sample_id: str
    scores: tuple[float, ...]
    decision: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "scores": list(self.scores),
            "decision": self.decision,
            "reason": self.reason,
        }


@dataclass
class ScoringContext:
    backend: EmbeddingBackend
    image_root: Path
    image_dims: dict[str, tuple[int, int]]
    threshold: float = DEFAULT_THRESHOLD
    mode: str = "rescaled"
    rules: ExtractionRules = field(default_factory=ExtractionRules)
    score_nonregion: bool = False


def _sample_boxes(sample: Sample) -> list[tuple[int, bool, BoxSpan]]:
    """(turn index, box-in-answer, span) for every box in the sample."""
    found = []
    for index, turn in enumerate(sample.turns):
        for span in _safe_spans(turn.question):
            found.append((index, False, span))
        for span in _safe_spans(turn.answer):
            found.append((index, True, span))
    return found


def _crop_bytes(context: ScoringContext, image_ref: str, span: BoxSpan | None) -> bytes:
    path = context.image_root / image_ref
    with Image.open(path) as image:
        image.load()
        if span is None:
            region = image
        else:
            left, top, right, bottom = box_to_pixels(span.box, image.width, image.height)
            region = image.crop((left, top, right, bottom))
        buffer = io.BytesIO()
        region.save(buffer, format="PNG")
        return buffer.getvalue()


def score_sample(sample: Sample, context: ScoringContext) -> FilterVerdict:
    """Score every box in the sample; keep only if all clear the threshold."""
    boxes = _sample_boxes(sample)
    if not boxes and not context.score_nonregion:
        return FilterVerdict(sample.id, (), KEEP, REASON_NA)
    if sample.image_ref not in context.image_dims:
        return FilterVerdict(sample.id, (), REJECT, REASON_CROP_FAILED)
    if not boxes:
        boxes = [(0, True, None)]  # full-image scoring, opt-in

    scores: list[float] = []
    for turn_index, in_answer, span in boxes:
        try:
            crop = _crop_bytes(context, sample.image_ref, span)
        except Exception as exc:
            log.debug("crop failed for %s: %s", sample.id, exc)
            return FilterVerdict(sample.id, tuple(scores), REJECT, REASON_CROP_FAILED)
        expression = paired_expression(sample, turn_index, in_answer, context.rules)
        if not expression:
            expression = sample.turns[turn_index].question
        text_vec = context.backend.embed_text(expression)
        image_vec = context.backend.embed_image(crop)
        scores.append(similarity_score(text_vec, image_vec, context.mode))

    if all(score >= context.threshold for score in scores):
        return FilterVerdict(sample.id, tuple(scores), KEEP, REASON_NA)
    return FilterVerdict(sample.id, tuple(scores), REJECT, REASON_BELOW_THRESHOLD)


# ---------------------------------------------------------------------------
# Dedup


def canonical_question_key(sample: Sample) -> tuple[str, str]:
    question = "\n".join(" ".join(t.question.split()) for t in sample.turns)
    return (sample.image_ref, question)


def dedup(samples: Iterable[Sample]) -> tuple[list[Sample], int]:
    """Keep the first of each (image, question) pair, stable order."""
    seen: set[tuple[str, str]] = set()
    kept: list[Sample] = []
    drops = 0
    for sample in samples:
        key = canonical_question_key(sample)
        if key in seen:
            drops += 1
            continue
        seen.add(key)
        kept.append(sample)
    return kept, drops


# ---------------------------------------------------------------------------
# File-level driver


def run_filter(
    samples_path: str | Path,
    context: ScoringContext,
    kept_path: str | Path,
    rejected_path: str | Path,
    parallelism: int = 1,
) -> dict:
    """Partition a sample file into kept/rejected; returns the summary."""
    records: list[tuple[dict | None, Sample | None]] = []
    with open(samples_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                sample = sample_from_dict(record)
                if validate_sample(sample):
                    records.append((record, None))
                else:
                    records.append((record, sample))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                records.append(({"raw": line}, None))

    valid = [sample for _, sample in records if sample is not None]
    invalid = [record for record, sample in records if sample is None]
    deduped, duplicate_count = dedup(valid)

    if parallelism > 1 and deduped:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(score_sample, sample, context) for sample in deduped]
            verdicts = [future.result() for future in futures]
    else:
        verdicts = [score_sample(sample, context) for sample in deduped]

    reasons = {
        REASON_BELOW_THRESHOLD: 0,
        REASON_DUPLICATE: duplicate_count,
        REASON_PARSE_FAILED: len(invalid),
        REASON_CROP_FAILED: 0,
    }
    kept_count = 0
    rejected_count = 0
    with open(kept_path, "w", encoding="utf-8") as kept_out, open(
        rejected_path, "w", encoding="utf-8"
    ) as rejected_out:
        for record in invalid:
            rejected_out.write(
                dump_json_line(
                    {
                        "decision": REJECT,
                        "reason": REASON_PARSE_FAILED,
                        "scores": [],
                        "record": record,
                    }
                )
                + "\n"
            )
            rejected_count += 1
        for sample, verdict in zip(deduped, verdicts):
            if verdict.decision == KEEP:
                kept_out.write(dump_json_line(sample_to_dict(sample)) + "\n")
                kept_count += 1
            else:
                reasons[verdict.reason] += 1
                rejected_out.write(
                    dump_json_line(
                        {
                            "decision": REJECT,
                            "reason": verdict.reason,
                            "scores": list(verdict.scores),
                            "record": sample_to_dict(sample),
                        }
                    )
                    + "\n"
                )
                rejected_count += 1

    considered = kept_count + rejected_count
    summary = {
        "input": considered + duplicate_count,
        "kept": kept_count,
        "rejected": rejected_count,
        "duplicates": duplicate_count,
        "pass_rate": round(kept_count / considered, 6) if considered else 0.0,
        "reasons": reasons,
        "threshold": context.threshold,
        "score_mode": context.mode,
    }
    if context.mode == "rescaled":
        summary["score_mode_note"] = (
            "scores are clamped cosines rescaled by 2.5 before the threshold; "
            "use --score-mode raw to threshold plain cosines"
        )
    return summary


def scoring_context_from_manifest(
    backend: EmbeddingBackend,
    manifest_entries: Iterable,
    image_root: str | Path,
    threshold: float = DEFAULT_THRESHOLD,
    mode: str = "rescaled",
    score_nonregion: bool = False,
) -> ScoringContext:
    dims = {e.image_ref: (e.width, e.height) for e in manifest_entries}
    return ScoringContext(
        backend=backend,
        image_root=Path(image_root),
        image_dims=dims,
        threshold=threshold,
        mode=mode,
        score_nonregion=score_nonregion,
    )
