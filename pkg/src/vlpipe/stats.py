"""Corpus statistics: length histograms, noun/verb counts, region shapes.

Aggregates are mergeable (associative + commutative), so shards computed
in parallel fold into the same result as a single pass. Because merges
must stay exact, averages are stored as (total, count) pairs and distinct
image counts as a set until serialization.

Report headers note that "question length" counts whitespace tokens; a
character-based reading would change the histograms.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .filtering import DEFAULT_RULES, ExtractionRules, extract_expression, _strip_spans
from .kernels import tokenize
from .parsing import parse_box_spans
from .schema import Sample, TaskType, sample_from_dict

HISTOGRAM_CAP = 30  # rendered histograms bucket longer questions as "30+"

NOUN = "noun"
VERB = "verb"
OTHER = "other"

_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ship", "ity", "ance", "ence", "hood")
_VERB_SUFFIXES = ("ing", "ed")


def _load_lexicon(name: str) -> frozenset[str]:
    text = resources.files("vlpipe.data").joinpath(name).read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


class PosTagger:
    """Lexicon + suffix tagger; deterministic and total over tokens.

    Lookup order: noun lexicon, verb lexicon, plural/inflection stems,
    then suffix rules. Nouns win exact-match ties ("watch", "building").
    """

    def __init__(
        self, nouns: frozenset[str] | None = None, verbs: frozenset[str] | None = None
    ) -> None:
        self.nouns = nouns if nouns is not None else _load_lexicon("nouns.txt")
        self.verbs = verbs if verbs is not None else _load_lexicon("verbs.txt")

    def tag(self, token: str) -> str:
        word = token.lower()
        if not word:
            return OTHER
        if word in self.nouns:
            return NOUN
        if word in self.verbs:
            return VERB
        if word.endswith("s") and len(word) > 2:
            stem = word[:-1]
            if stem in self.nouns:
                return NOUN
            if stem in self.verbs:
                return VERB
            if word.endswith("es") and word[:-2] in self.nouns:
                return NOUN
        for suffix in _VERB_SUFFIXES:
            if word.endswith(suffix) and len(word) > len(suffix) + 2:
                return VERB
        for suffix in _NOUN_SUFFIXES:
            if word.endswith(suffix) and len(word) > len(suffix) + 1:
                return NOUN
        return OTHER


@dataclass
class CorpusStats:
    question_length_hist: Counter = field(default_factory=Counter)
    expression_length_hist: Counter = field(default_factory=Counter)
    noun_counts: Counter = field(default_factory=Counter)
    verb_counts: Counter = field(default_factory=Counter)
    region_width_counts: Counter = field(default_factory=Counter)
    region_height_counts: Counter = field(default_factory=Counter)
    samples: int = 0
    objects: int = 0
    expression_token_total: int = 0
    expression_count: int = 0
    invalid_records: int = 0
    image_refs: set = field(default_factory=set)

    @property
    def images(self) -> int:
        return len(self.image_refs)

    @property
    def avg_expression_length(self) -> float:
        if not self.expression_count:
            return 0.0
        return self.expression_token_total / self.expression_count

    @property
    def region_widths(self) -> list[float]:
        return sorted(self.region_width_counts.elements())

    @property
    def region_heights(self) -> list[float]:
        return sorted(self.region_height_counts.elements())

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        out = CorpusStats()
        for name in (
            "question_length_hist",
            "expression_length_hist",
            "noun_counts",
            "verb_counts",
            "region_width_counts",
            "region_height_counts",
        ):
            merged = Counter(getattr(self, name))
            merged.update(getattr(other, name))
            setattr(out, name, merged)
        out.samples = self.samples + other.samples
        out.objects = self.objects + other.objects
        out.expression_token_total = self.expression_token_total + other.expression_token_total
        out.expression_count = self.expression_count + other.expression_count
        out.invalid_records = self.invalid_records + other.invalid_records
        out.image_refs = self.image_refs | other.image_refs
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CorpusStats):
            return NotImplemented
        return self.to_document() == other.to_document() and self.image_refs == other.image_refs

    def to_document(self) -> dict:
        return {
            "length_unit": "whitespace tokens",
            "samples": self.samples,
            "images": self.images,
            "objects": self.objects,
            "invalid_records": self.invalid_records,
            "expression_token_total": self.expression_token_total,
            "expression_count": self.expression_count,
            "avg_expression_length": round(self.avg_expression_length, 6),
            "question_length_hist": _counter_to_sorted(self.question_length_hist),
            "expression_length_hist": _counter_to_sorted(self.expression_length_hist),
            "noun_counts": _counter_to_sorted(self.noun_counts),
            "verb_counts": _counter_to_sorted(self.verb_counts),
            "region_widths": _counter_to_sorted(self.region_width_counts),
            "region_heights": _counter_to_sorted(self.region_height_counts),
        }


def _counter_to_sorted(counter: Counter) -> list[list]:
    return [[key, counter[key]] for key in sorted(counter)]


def _expression_for(sample: Sample, rules: ExtractionRules) -> str | None:
    if sample.task is TaskType.REC:
        return extract_expression(sample.turns[0].question, rules)
    if sample.task is TaskType.REG:
        return extract_expression(sample.turns[0].answer, rules)
    return None


def observe_sample(
    stats: CorpusStats, sample: Sample, tagger: PosTagger, rules: ExtractionRules = DEFAULT_RULES
) -> None:
    stats.samples += 1
    stats.image_refs.add(sample.image_ref)

    question_tokens = tokenize(_strip_spans(sample.turns[0].question))
    stats.question_length_hist[len(question_tokens)] += 1

    tagged_tokens = list(question_tokens)
    expression = _expression_for(sample, rules)
    if expression:
        expression_tokens = tokenize(expression)
        stats.expression_length_hist[len(expression_tokens)] += 1
        stats.expression_token_total += len(expression_tokens)
        stats.expression_count += 1
        tagged_tokens.extend(expression_tokens)

    for token in tagged_tokens:
        kind = tagger.tag(token)
        if kind == NOUN:
            stats.noun_counts[token] += 1
        elif kind == VERB:
            stats.verb_counts[token] += 1

    for turn in sample.turns:
        for text in (turn.question, turn.answer):
            try:
                spans = parse_box_spans(text)
            except Exception:
                continue
            for span in spans:
                stats.objects += 1
                stats.region_width_counts[span.box.width] += 1
                stats.region_height_counts[span.box.height] += 1


def compute_stats(
    samples_path: str | Path,
    tagger: PosTagger | None = None,
    rules: ExtractionRules = DEFAULT_RULES,
) -> CorpusStats:
    """Single pass over a sample file; unreadable records are counted out."""
    tagger = tagger or PosTagger()
    stats = CorpusStats()
    with open(samples_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                sample = sample_from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                stats.invalid_records += 1
                continue
            observe_sample(stats, sample, tagger, rules)
    return stats


def compute_stats_from_samples(
    samples: Iterable[Sample],
    tagger: PosTagger | None = None,
    rules: ExtractionRules = DEFAULT_RULES,
) -> CorpusStats:
    tagger = tagger or PosTagger()
    stats = CorpusStats()
    for sample in samples:
        observe_sample(stats, sample, tagger, rules)
    return stats


def top_terms(stats: CorpusStats, kind: str, n: int) -> list[tuple[str, int]]:
    """Descending by count, ties broken lexicographically."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = {NOUN: stats.noun_counts, VERB: stats.verb_counts}[kind]
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ordered[:n]


def render_length_histogram(hist: Counter, cap: int = HISTOGRAM_CAP) -> list[tuple[str, int]]:
    """Display buckets: exact counts up to the cap, then one overflow row."""
    rows = [(str(k), hist[k]) for k in sorted(k for k in hist if k <= cap)]
    overflow = sum(v for k, v in hist.items() if k > cap)
    if overflow:
        rows.append((f"{cap}+", overflow))
    return rows


# ---------------------------------------------------------------------------
# Dataset comparison table


@dataclass(frozen=True)
class DatasetRow:
    label: str
    images: int
    objects: int
    avg_expression_length: float

    @classmethod
    def from_document(cls, label: str, document: dict) -> "DatasetRow":
        total = document.get("expression_token_total", 0)
        count = document.get("expression_count", 0)
        avg = total / count if count else float(document.get("avg_expression_length", 0.0))
        return cls(label, int(document["images"]), int(document["objects"]), avg)


def compare_datasets(rows: Sequence[DatasetRow]) -> tuple[list[dict], str]:
    """Rows in input order as (machine-readable, aligned text) pair."""
    if not rows:
        raise ValueError("need at least one dataset")
    machine = [
        {
            "label": row.label,
            "images": row.images,
            "objects": row.objects,
            "avg_length": round(row.avg_expression_length, 2),
        }
        for row in rows
    ]
    cells = [("Dataset", "Images", "Objects", "Avg Length")]
    for row in rows:
        cells.append(
            (row.label, f"{row.images:,}", f"{row.objects:,}", f"{row.avg_expression_length:.2f}")
        )
    widths = [max(len(line[i]) for line in cells) for i in range(4)]
    rendered = []
    for line in cells:
        rendered.append(
            "  ".join(
                line[0].ljust(widths[0]) if i == 0 else line[i].rjust(widths[i])
                for i in range(4)
            ).rstrip()
        )
    return machine, "\n".join(rendered)


# ---------------------------------------------------------------------------
# Chart output (standalone SVG, no plotting dependency)


def svg_bar_chart(
    rows: Sequence[tuple[str, int]], title: str, width: int = 640, bar_height: int = 18
) -> str:
    """Minimal horizontal bar chart as a standalone SVG document."""
    margin, label_w, gap = 10, 120, 4
    chart_w = width - margin * 2 - label_w - 60
    height = margin * 2 + 24 + max(1, len(rows)) * (bar_height + gap)
    peak = max((count for _, count in rows), default=0) or 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="12">',
        f'<text x="{margin}" y="{margin + 12}" font-size="14">{_svg_escape(title)}</text>',
    ]
    y = margin + 24
    for label, count in rows:
        bar = int(chart_w * count / peak)
        parts.append(
            f'<text x="{margin + label_w - 4}" y="{y + bar_height - 5}" '
            f'text-anchor="end">{_svg_escape(label)}</text>'
        )
        parts.append(
            f'<rect x="{margin + label_w}" y="{y}" width="{max(bar, 1)}" '
            f'height="{bar_height}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{margin + label_w + max(bar, 1) + 4}" y="{y + bar_height - 5}">{count}</text>'
        )
        y += bar_height + gap
    parts.append("</svg>")
    return "\n".join(parts)


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_stats_outputs(stats: CorpusStats, out_dir: str | Path, prefix: str = "corpus") -> list[Path]:
    """Stats document plus histogram/top-term data files and SVG charts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    doc_path = out / f"{prefix}_stats.json"
    doc_path.write_text(
        json.dumps(stats.to_document(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(doc_path)

    qhist = render_length_histogram(stats.question_length_hist)
    charts = [
        (f"{prefix}_question_length", "Question length (tokens)", qhist),
        (
            f"{prefix}_top_nouns",
            "Top 30 nouns",
            [(t, c) for t, c in top_terms(stats, NOUN, 30)] if stats.noun_counts else [],
        ),
        (
            f"{prefix}_top_verbs",
            "Top 30 verbs",
            [(t, c) for t, c in top_terms(stats, VERB, 30)] if stats.verb_counts else [],
        ),
    ]
    if stats.expression_length_hist:
        charts.append(
            (
                f"{prefix}_expression_length",
                "Expression length (tokens)",
                render_length_histogram(stats.expression_length_hist),
            )
        )
    for stem, title, rows in charts:
        data_path = out / f"{stem}.tsv"
        data_path.write_text(
            "".join(f"{label}\t{count}\n" for label, count in rows), encoding="utf-8"
        )
        svg_path = out / f"{stem}.svg"
        svg_path.write_text(svg_bar_chart(rows, title) + "\n", encoding="utf-8")
        written.extend([data_path, svg_path])
    return written
