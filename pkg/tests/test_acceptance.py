"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside pytest's own verdicts.
"""

from __future__ import annotations

import contextlib
import json
import random
import time
from pathlib import Path

import pytest

import fixture_utils
from vlpipe import filtering, human_eval, stats as stats_mod
from vlpipe.ingest import build_recipe
from vlpipe.parsing import parse_box_spans, parse_generation, serialize_target
from vlpipe.pipeline import PipelineConfig, run_pipeline
from vlpipe.schema import TaskType, parse_box, read_samples
from vlpipe.templates import PromptSpec, default_pool, render_prompt


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS")


def _dir_snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


def test_end_to_end_determinism(tmp_path):
    """Three runs and parallelism 1 vs 8 give byte-identical artifacts."""
    with criterion("end-to-end determinism (3 runs, parallelism 1 vs 8, <60s)"):
        image_root, manifest_path, manifest = fixture_utils.make_corpus(tmp_path, 50)
        script_path = fixture_utils.write_script(
            tmp_path / "script.json", fixture_utils.build_script(manifest)
        )
        snapshots = []
        for run_index, parallelism in enumerate((1, 8, 1, 8)):
            start = time.monotonic()
            out_dir = tmp_path / f"artifacts_{run_index}"
            config = PipelineConfig(
                manifest_path=str(manifest_path),
                image_root=str(image_root),
                output_dir=str(out_dir),
                task="REC",
                tau=0.5,
                seed=11,
                generator_backend=f"scripted:{script_path}",
                embedding_backend="deterministic:64",
                threshold=0.5,
                parallelism=parallelism,
            )
            run_pipeline(config)
            assert time.monotonic() - start < 60.0
            snapshots.append(_dir_snapshot(out_dir))
        for other in snapshots[1:]:
            assert other.keys() == snapshots[0].keys()
            for name in snapshots[0]:
                assert other[name] == snapshots[0][name], f"artifact differs: {name}"


def test_filter_oracle_equivalence(tmp_path):
    """500-sample fixture: zero verdict mismatches; 0.500 keeps, 0.499 rejects."""
    from test_filtering import ScriptedEmbeddingBackend, brute_force_verdicts

    with criterion("filter oracle equivalence (500 samples, boundary 0.500/0.499)"):
        image_root, _, manifest = fixture_utils.make_corpus(tmp_path, 50)
        rng = random.Random(500500)
        samples = []
        for index in range(500):
            entry = manifest.entries[index % len(manifest.entries)]
            task = (TaskType.REC, TaskType.REG, TaskType.QCBoxA, TaskType.CommonVQA)[index % 4]
            samples.append(fixture_utils.random_sample(task, rng, image_ref=entry.image_ref))
        samples = filtering.dedup(samples)[0]
        assert len(samples) >= 490
        samples_path = fixture_utils.write_sample_file(tmp_path / "samples.jsonl", samples)

        context = filtering.scoring_context_from_manifest(
            filtering.DeterministicEmbeddingBackend(32),
            manifest.entries,
            image_root,
            threshold=0.5,
        )
        filtering.run_filter(
            samples_path, context, tmp_path / "kept.jsonl", tmp_path / "rejected.jsonl"
        )
        kept_ids = {s.id for s in read_samples(tmp_path / "kept.jsonl")}
        expected = brute_force_verdicts(samples_path, context)
        mismatches = [
            sample_id
            for sample_id, (decision, _) in expected.items()
            if (sample_id in kept_ids) != (decision == filtering.KEEP)
        ]
        assert mismatches == []

        # strict-below rejection at the boundary, exact 0.500 kept
        def verdict_for(cosine):
            boundary_context = filtering.scoring_context_from_manifest(
                ScriptedEmbeddingBackend({"dark block": cosine}),
                manifest.entries,
                image_root,
                threshold=0.5,
                mode="raw",
            )
            from vlpipe.schema import Sample, Turn

            sample = Sample(
                id="b",
                image_ref=manifest.entries[0].image_ref,
                task=TaskType.REC,
                turns=(Turn("I need the coordinates of the dark block. Can you assist?",
                            "[0.100,0.100,0.900,0.900]"),),
                provenance="generated",
            )
            return filtering.score_sample(sample, boundary_context)

        keep = verdict_for(0.5)
        assert keep.scores[0] == 0.5
        assert keep.decision == filtering.KEEP
        reject = verdict_for(0.499)
        assert reject.decision == filtering.REJECT


def test_parser_round_trip_and_fuzz():
    """10K samples round-trip exactly; 100K random byte strings never crash."""
    with criterion("parser round-trip (10,000 samples) + fuzz (100,000 byte strings)"):
        rng = random.Random(424242)
        tasks = list(TaskType)
        for index in range(10_000):
            task = tasks[index % len(tasks)]
            sample = fixture_utils.random_sample(task, rng)
            outcome = parse_generation(serialize_target(sample), task, sample.image_ref)
            assert outcome.ok, (task, serialize_target(sample), outcome.error)
            assert outcome.sample.task == sample.task
            assert outcome.sample.turns == sample.turns
            for original, reparsed in zip(sample.turns, outcome.sample.turns):
                for text_a, text_b in (
                    (original.question, reparsed.question),
                    (original.answer, reparsed.answer),
                ):
                    boxes_a = parse_box_spans(text_a)
                    boxes_b = parse_box_spans(text_b)
                    assert len(boxes_a) == len(boxes_b)
                    for span_a, span_b in zip(boxes_a, boxes_b):
                        for value_a, value_b in zip(
                            (span_a.box.x1, span_a.box.y1, span_a.box.x2, span_a.box.y2),
                            (span_b.box.x1, span_b.box.y1, span_b.box.x2, span_b.box.y2),
                        ):
                            assert abs(value_a - value_b) < 5e-4

        fuzz = random.Random(123456789)
        for _ in range(100_000):
            blob = fuzz.randbytes(fuzz.randrange(0, 160))
            raw = blob.decode("latin-1")
            outcome = parse_generation(raw, tasks[fuzz.randrange(10)], "img")
            assert (outcome.sample is None) != (outcome.error is None)


def test_tau_statistics():
    """tau=0.5 inclusion in [0.48, 0.52] over 10,000 renders; tau=1 is 100%."""
    with criterion("tau statistics (0.5 within [0.48, 0.52]; 1.0 exactly 100%)"):
        pool = default_pool()
        half = PromptSpec(pool=pool, tau=0.5)
        included = sum(
            render_prompt(half, TaskType.CommonVQA, seed).specific_included
            for seed in range(10_000)
        )
        fraction = included / 10_000
        assert 0.48 <= fraction <= 0.52, fraction

        full = PromptSpec(pool=pool, tau=1.0)
        assert all(
            render_prompt(full, TaskType.REC, seed).specific_included
            for seed in range(10_000)
        )
        zero = PromptSpec(pool=pool, tau=0.0)
        assert not any(
            render_prompt(zero, TaskType.REC, seed).specific_included
            for seed in range(2_000)
        )


def test_recipe_golden():
    """Declared mixture sizes match the published tables exactly."""
    with criterion("recipe golden sizes (both generator curricula + base model)"):
        genixer_i = build_recipe("genixer_i")
        sizes_i = [e.declared_size for p in genixer_i.phases for e in p.entries]
        assert sizes_i == [420_000, 30_000, 80_000, 90_000, 150_000]

        genixer_s = build_recipe("genixer_s")
        phase1 = {e.spec.task: e.declared_size for e in genixer_s.phases[0].entries}
        assert phase1 == {TaskType.REC: 1_000_000, TaskType.REG: 1_000_000}
        phase2 = {e.spec.task.name: e.declared_size for e in genixer_s.phases[1].entries}
        assert phase2["PointQA"] == 218_000
        assert phase2["QCBoxA"] == 4_000
        assert phase2["RD"] == 1_800

        kakapo = build_recipe("kakapo")
        sizes_k = [e.declared_size for e in kakapo.phases[0].entries]
        assert sizes_k == [595_000, 585_000, 720_000, 443_000, 280_000, 90_000, 150_000]


def test_stats_merge_and_reference_row(tmp_path):
    """20 shard partitions match the single pass; reference row renders."""
    with criterion("stats merge property (20 partitions of 5K) + comparison row"):
        rng = random.Random(5000)
        tasks = list(TaskType)
        samples = [
            fixture_utils.random_sample(tasks[i % 10], rng, image_ref=f"img_{i % 311}.png")
            for i in range(5_000)
        ]
        whole = stats_mod.compute_stats_from_samples(samples)
        partition_rng = random.Random(20)
        for _ in range(20):
            shard_count = partition_rng.randrange(2, 8)
            cuts = sorted(partition_rng.sample(range(1, 5_000), shard_count - 1))
            bounds = [0] + cuts + [5_000]
            shards = [samples[a:b] for a, b in zip(bounds, bounds[1:])]
            partials = [stats_mod.compute_stats_from_samples(shard) for shard in shards]
            merged = partials[0]
            for partial in partials[1:]:
                merged = merged.merge(partial)
            assert merged == whole

        row = stats_mod.DatasetRow.from_document(
            "GenixerS(845K)",
            {
                "images": 845_110,
                "objects": 1_007_910,
                "expression_token_total": 6_349_833,
                "expression_count": 1_007_910,
            },
        )
        machine, table = stats_mod.compare_datasets([row])
        rendered = table.splitlines()[-1]
        assert "845,110" in rendered
        assert "1,007,910" in rendered
        assert "6.30" in rendered
        assert machine[0]["avg_length"] == 6.30


CANONICAL_EXAMPLES = [
    # (raw text, task, expected boxes per field)
    (
        "Question: I'd like to request the coordinates of A chalkboard menu within "
        "the photo. Answer: [0.320,0.283,0.702,0.635].",
        TaskType.REC,
        {"question_boxes": 0, "answer_boxes": 1},
    ),
    (
        "Question: I need the coordinates of the person at the bottom left of the "
        "image. Can you assist? Answer: [0.005,0.332,0.249,0.984]",
        TaskType.REC,
        {"question_boxes": 0, "answer_boxes": 1},
    ),
    (
        "Question: What are the unique aspects of the selected rectangular area "
        "[0.064,0.277,0.406,0.586] in image? Answer: A large rock on a workstation.",
        TaskType.REG,
        {"question_boxes": 1, "answer_boxes": 0},
    ),
    (
        "Question: What is the activity captured within the coordinates "
        "[0.2, 0.05, 0.8, 0.95] in the image? Answer: The region within the "
        "coordinates [0.2, 0.05, 0.8, 0.95] shows a person engaged in the process "
        "of stone sculpting.",
        TaskType.REG,
        {"question_boxes": 1, "answer_boxes": 1},
    ),
    (
        "Question: What is the man's position on the baseball field? Answer: The "
        "man is in the batter's box, which is a designated area on the baseball "
        "field where the batter stands to hit the ball.",
        TaskType.CommonVQA,
        {"question_boxes": 0, "answer_boxes": 0},
    ),
]


def test_canonical_example_conformance():
    """Reference QA strings parse to the documented structure."""
    with criterion("canonical example conformance"):
        spans = parse_box_spans("[0.320,0.283,0.702,0.635]")
        assert len(spans) == 1
        box = spans[0].box
        assert (box.x1, box.y1, box.x2, box.y2) == (0.320, 0.283, 0.702, 0.635)

        for raw, task, expected in CANONICAL_EXAMPLES:
            outcome = parse_generation(raw, task, "img")
            assert outcome.ok, (raw, outcome.error)
            turn = outcome.sample.turns[0]
            assert len(parse_box_spans(turn.question)) == expected["question_boxes"]
            assert len(parse_box_spans(turn.answer)) == expected["answer_boxes"]

        # serialized target of the second example reproduces its text
        outcome = parse_generation(CANONICAL_EXAMPLES[1][0], TaskType.REC, "img")
        assert serialize_target(outcome.sample) == CANONICAL_EXAMPLES[1][0]

        box = parse_box("[0.005,0.332,0.249,0.984]")
        assert (box.x1, box.y1, box.x2, box.y2) == (0.005, 0.332, 0.249, 0.984)


# Held-out distribution: type -> (samples, correct) chosen so the rounded
# percentages land on the published report, and counts sum to 200.
HELD_OUT_DISTRIBUTION = {
    human_eval.QuestionTypeLabel.Action: (60, 56, 93),
    human_eval.QuestionTypeLabel.Color: (2, 1, 50),
    human_eval.QuestionTypeLabel.Counting: (16, 13, 81),
    human_eval.QuestionTypeLabel.ObjectType: (46, 28, 61),
    human_eval.QuestionTypeLabel.RelativePosition: (46, 26, 57),
    human_eval.QuestionTypeLabel.YesNo: (17, 15, 88),
    human_eval.QuestionTypeLabel.Others: (13, 10, 77),
}


def test_human_eval_aggregation(tmp_path):
    """Synthetic complete session yields the report shape; totals = 200."""
    with criterion("human-eval aggregation (200-sample batch, report shape)"):
        rng = random.Random(200)
        samples = [
            fixture_utils.random_sample(TaskType.CommonVQA, rng, image_ref=f"{i}.png")
            for i in range(400)
        ]
        corpus = fixture_utils.write_sample_file(tmp_path / "corpus.jsonl", samples)
        batch = human_eval.sample_batch(corpus, 200, seed=8, tag="held_out")
        assert batch.size == 200
        assert len(batch.sample_ids()) == 200

        marks = []
        for type_label, (count, correct, _percent) in HELD_OUT_DISTRIBUTION.items():
            marks.extend(
                (type_label, index < correct) for index in range(count)
            )
        assert len(marks) == 200
        judgments = tuple(
            human_eval.Judgment(sample.id, type_label, correct, timestamp=str(i))
            for i, (sample, (type_label, correct)) in enumerate(zip(batch.samples, marks))
        )
        session = human_eval.EvalSession("s1", "annotator", batch.batch_id, judgments, "complete")
        session_path = tmp_path / "session.jsonl"
        human_eval.write_session(session, session_path)
        loaded = human_eval.ingest_session(session_path, batch)
        assert loaded.status == "complete"

        rows, agreement = human_eval.aggregate([loaded], batch)
        assert sum(row.samples for row in rows) == 200
        by_type = {row.type: row for row in rows}
        for type_label, (count, _correct, percent) in HELD_OUT_DISTRIBUTION.items():
            assert by_type[type_label].samples == count
            assert by_type[type_label].correct_percent == percent
        assert [row.type for row in rows] == [
            t for t in human_eval.REPORT_ROW_ORDER if t in by_type
        ]
        report = human_eval.render_report(rows)
        assert "Question Type" in report and "Correct (~%)" in report


FRONTEND_SESSION = Path(__file__).parent.parent / "frontend" / "fixtures" / "exported-session.jsonl"
FRONTEND_BATCH = Path(__file__).parent.parent / "frontend" / "fixtures" / "review-batch.jsonl"


@pytest.mark.skipif(
    not (FRONTEND_SESSION.exists() and FRONTEND_BATCH.exists()),
    reason="review UI fixtures not built",
)
def test_review_ui_export_bridges_into_aggregation():
    """A session exported by the review UI ingests and aggregates cleanly."""
    with criterion("review UI exported session ingests with zero violations"):
        batch = human_eval.read_batch(FRONTEND_BATCH)
        session = human_eval.ingest_session(FRONTEND_SESSION, batch)
        assert session.status == "complete"
        rows, _ = human_eval.aggregate([session], batch)
        assert sum(row.samples for row in rows) == batch.size
