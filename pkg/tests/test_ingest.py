from __future__ import annotations

import json
import random

import pytest

import fixture_utils
from vlpipe.ingest import (
    DEFAULT_REGION_REDUCTION,
    FormatMismatchError,
    MissingImageDimensionsError,
    SourceSpec,
    UnknownRecipeError,
    build_manifest,
    build_recipe,
    ingest_source,
    materialize_recipe,
    normalize_box_px,
)

from vlpipe.schema import TaskType, box_to_pixels, validate_sample


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as out:
        for record in records:
            out.write(json.dumps(record) + "\n")
    return path


class TestIngestSource:
    def test_region_record_normalizes_to_three_decimals(self, tmp_path):
        path = _write_jsonl(
            tmp_path / "region.jsonl",
            [
                {
                    "image": "a.png",
                    "width": 600,
                    "height": 600,
                    "expr": "person at the bottom left of the image",
                    "box_px": [3, 199, 149, 590],
                }
            ],
        )
        spec = SourceSpec("refs", "region-records", str(path), TaskType.REC)
        samples = list(ingest_source(spec))
        assert len(samples) == 1
        # 3/600, 199/600, 149/600, 590/600 rounded half-up at 3 decimals
        assert samples[0].turns[0].answer == "[0.005,0.332,0.248,0.983]"
        assert "person at the bottom left of the image" in samples[0].turns[0].question

    def test_empty_caption_is_format_mismatch(self, tmp_path):
        path = _write_jsonl(
            tmp_path / "captions.jsonl", [{"image": "a.png", "caption": "  "}]
        )
        spec = SourceSpec("caps", "caption-records", str(path), TaskType.CommonVQA)
        with pytest.raises(FormatMismatchError) as excinfo:
            list(ingest_source(spec))
        assert excinfo.value.record_index == 0

    def test_sample_limit_order_stable(self, tmp_path):
        records = [
            {"image": f"{i}.png", "question": f"q{i}?", "answer": f"a{i}"} for i in range(5)
        ]
        path = _write_jsonl(tmp_path / "vqa.jsonl", records)
        spec = SourceSpec("vqa", "vqa-records", str(path), TaskType.CommonVQA, sample_limit=3)
        samples = list(ingest_source(spec))
        assert [s.turns[0].question for s in samples] == ["q0?", "q1?", "q2?"]

    def test_missing_dimensions(self, tmp_path):
        path = _write_jsonl(
            tmp_path / "region.jsonl",
            [{"image": "a.png", "expr": "a dog", "box_px": [1, 2, 3, 4]}],
        )
        spec = SourceSpec("refs", "region-records", str(path), TaskType.REG)
        with pytest.raises(MissingImageDimensionsError):
            list(ingest_source(spec))

    def test_format_task_compatibility(self):
        with pytest.raises(ValueError):
            SourceSpec("x", "region-records", "p", TaskType.CommonVQA)
        with pytest.raises(ValueError):
            SourceSpec("x", "vqa-records", "p", TaskType.REC)
        with pytest.raises(ValueError):
            SourceSpec("x", "dialogue-records", "p", TaskType.CommonVQA)

    def test_every_emitted_sample_validates(self, tmp_path):
        rng = random.Random(4)
        records = []
        for i in range(40):
            width = rng.randrange(100, 1200)
            height = rng.randrange(100, 1200)
            records.append(
                {
                    "image": f"{i}.png",
                    "width": width,
                    "height": height,
                    "expr": fixture_utils.phrase(rng, 3),
                    "box_px": _random_pixel_box(rng, min(width, height)),
                }
            )
        region = _write_jsonl(tmp_path / "region.jsonl", records)
        dialogue = _write_jsonl(
            tmp_path / "dialogue.jsonl",
            [
                {
                    "image": f"{i}.png",
                    "turns": [
                        {"question": "a?", "answer": "b"},
                        {"question": "c?", "answer": "d"},
                    ],
                }
                for i in range(5)
            ],
        )
        for spec in (
            SourceSpec("r", "region-records", str(region), TaskType.QCBoxA),
            SourceSpec("d", "dialogue-records", str(dialogue), TaskType.MD),
        ):
            for sample in ingest_source(spec):
                assert validate_sample(sample) == []

    def test_deterministic(self, tmp_path):
        path = _write_jsonl(
            tmp_path / "vqa.jsonl",
            [{"image": "a.png", "question": "q?", "answer": "a"}] * 3,
        )
        spec = SourceSpec("vqa", "vqa-records", str(path), TaskType.CommonVQA)
        assert list(ingest_source(spec)) == list(ingest_source(spec))


def _random_pixel_box(rng, limit):
    left = rng.randrange(0, limit - 60)
    top = rng.randrange(0, limit - 60)
    return [left, top, left + rng.randrange(40, 60), top + rng.randrange(40, 60)]


class TestNormalizationInverse:
    def test_denormalize_within_one_pixel(self):
        rng = random.Random(12)
        for _ in range(500):
            width = rng.randrange(50, 1600)
            height = rng.randrange(50, 1600)
            left = rng.randrange(0, width - 2)
            right = rng.randrange(left + 2, width + 1)
            top = rng.randrange(0, height - 2)
            bottom = rng.randrange(top + 2, height + 1)
            try:
                box = normalize_box_px((left, top, right, bottom), width, height)
            except ValueError:
                continue  # rounding collapsed a sliver box; validation rejects it
            back = box_to_pixels(box, width, height)
            for a, b in zip(back, (left, top, right, bottom)):
                assert abs(a - b) <= 1, ((left, top, right, bottom), back, (width, height))


class TestBuildManifest:
    def test_fixture_directory(self, tmp_path):
        fixture_utils.make_images(tmp_path / "images", 50)
        manifest, skipped = build_manifest(tmp_path / "images", "fixture")
        assert manifest.declared_count == 50
        assert skipped == []
        refs = [e.image_ref for e in manifest.entries]
        assert refs == sorted(refs)

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        manifest, skipped = build_manifest(tmp_path / "empty", "fixture")
        assert manifest.declared_count == 0
        assert skipped == []

    def test_corrupt_image_skipped(self, tmp_path):
        image_dir = tmp_path / "images"
        fixture_utils.make_images(image_dir, 10)
        corrupt = image_dir / "img_0003.png"
        corrupt.write_bytes(corrupt.read_bytes()[:40])
        manifest, skipped = build_manifest(image_dir, "fixture")
        assert manifest.declared_count == 9
        assert len(skipped) == 1
        assert "img_0003.png" in skipped[0]

    def test_parallel_matches_serial(self, tmp_path):
        image_dir = tmp_path / "images"
        fixture_utils.make_images(image_dir, 30)
        serial, _ = build_manifest(image_dir, "fixture", parallelism=1)
        parallel, _ = build_manifest(image_dir, "fixture", parallelism=8)
        assert serial.entries == parallel.entries


class TestRecipes:
    def test_genixer_i_phase_sizes(self):
        recipe = build_recipe("genixer_i")
        phase1 = {e.spec.task: e.declared_size for e in recipe.phases[0].entries}
        assert phase1 == {TaskType.CommonVQA: 420_000, TaskType.AdvVQA: 30_000}
        phase2 = {e.spec.task: e.declared_size for e in recipe.phases[1].entries}
        assert phase2 == {
            TaskType.RcVQA: 80_000,
            TaskType.CotVQA: 90_000,
            TaskType.MD: 150_000,
        }

    def test_genixer_s_sizes_and_reduction(self):
        recipe = build_recipe("genixer_s")
        phase1 = {e.spec.task: e.declared_size for e in recipe.phases[0].entries}
        assert phase1 == {TaskType.REC: 1_000_000, TaskType.REG: 1_000_000}
        phase2 = {(e.spec.task, e.declared_size) for e in recipe.phases[1].entries}
        assert (TaskType.PointQA, 218_000) in phase2
        assert (TaskType.QCBoxA, 4_000) in phase2
        assert (TaskType.RD, 1_800) in phase2
        reduced = int(1_000_000 * DEFAULT_REGION_REDUCTION)
        assert (TaskType.REC, reduced) in phase2
        assert (TaskType.REG, reduced) in phase2

    def test_kakapo_totals(self):
        recipe = build_recipe("kakapo")
        assert len(recipe.phases) == 1
        sizes = [e.declared_size for e in recipe.phases[0].entries]
        assert sizes == [595_000, 585_000, 720_000, 443_000, 280_000, 90_000, 150_000]
        assert recipe.total_declared() == 2_863_000

    def test_unknown_recipe(self):
        with pytest.raises(UnknownRecipeError):
            build_recipe("mystery")

    def test_recipe_dict_round_trip_fields(self):
        doc = build_recipe("genixer_i").to_dict()
        assert doc["name"] == "genixer_i"
        assert [p["name"] for p in doc["phases"]] == ["phase1", "phase2"]


class TestMaterialize:
    def test_truncates_to_declared_and_shuffles_stably(self, tmp_path):
        source_root = tmp_path / "root"
        (source_root / "sources").mkdir(parents=True)
        _write_jsonl(
            source_root / "sources" / "tiny.jsonl",
            [{"image": f"{i}.png", "question": f"q{i}?", "answer": "a"} for i in range(10)],
        )
        from vlpipe.ingest import Recipe, RecipeEntry, RecipePhase

        recipe = Recipe(
            name="tiny",
            phases=(
                RecipePhase(
                    "only",
                    (
                        RecipeEntry(
                            SourceSpec("tiny", "vqa-records", "sources/tiny.jsonl", TaskType.CommonVQA),
                            declared_size=4,
                        ),
                    ),
                ),
            ),
        )
        first = [s.id for _, s in materialize_recipe(recipe, source_root, seed=1)]
        second = [s.id for _, s in materialize_recipe(recipe, source_root, seed=1)]
        other_seed = [s.id for _, s in materialize_recipe(recipe, source_root, seed=2)]
        assert len(first) == 4
        assert first == second
        assert first != other_seed
