"""End-to-end orchestration: render -> generate -> parse -> dedup ->
filter -> stats, materialized as a flat artifact directory.

Artifacts contain no timestamps or machine-local paths, so a rerun with
the same inputs and config is byte-identical, which is also how resume
correctness is checked.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from . import filtering, generation, stats as stats_mod
from .parsing import parse_generation
from .schema import CorpusManifest, TaskType, dump_json_line, sample_to_dict
from .templates import PromptSpec, default_pool, load_pool

STAGES = ("generate", "parse", "filter", "stats")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    manifest_path: str
    image_root: str
    output_dir: str
    task: str = "CommonVQA"
    tau: float = 0.5
    seed: int = 0
    run_id: str = "run"
    pool_path: str | None = None
    generator_backend: str = "scripted:script.json"
    embedding_backend: str = "deterministic:64"
    threshold: float = filtering.DEFAULT_THRESHOLD
    score_mode: str = "rescaled"
    score_nonregion: bool = False
    parallelism: int = 1
    max_new_tokens: int = 256
    resume: bool = False

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        data.update(overrides or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def validate(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.score_mode not in filtering.SCORE_MODES:
            raise ConfigError(f"score_mode must be one of {filtering.SCORE_MODES}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        TaskType.from_name(self.task)
        for label, path in (
            ("manifest", self.manifest_path),
            ("image root", self.image_root),
        ):
            if not Path(path).exists():
                raise ConfigError(f"{label} path does not exist: {path}")
        if self.pool_path and not Path(self.pool_path).exists():
            raise ConfigError(f"pool path does not exist: {self.pool_path}")
        kind, _, arg = self.generator_backend.partition(":")
        if kind == "scripted" and not Path(arg).exists():
            raise ConfigError(f"generator script does not exist: {arg}")

    def hashable_dict(self) -> dict:
        """Everything that affects artifact content.

        Execution knobs (output directory, parallelism, resume) are
        excluded on purpose: the same run written elsewhere, wider, or
        after an interrupt must produce identical artifacts, including
        this manifest.
        """
        data = {
            field: getattr(self, field)
            for field in sorted(self.__dataclass_fields__)
            if field not in ("output_dir", "parallelism", "resume")
        }
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.hashable_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_generator_backend(config: PipelineConfig) -> generation.GeneratorBackend:
    spec = config.generator_backend
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        return generation.ScriptedMockBackend.from_file(arg)
    if spec.startswith(("http://", "https://")):
        return generation.RemoteGeneratorBackend(
            spec, config.image_root, max_new_tokens=config.max_new_tokens
        )
    if kind == "remote":
        return generation.RemoteGeneratorBackend(
            arg, config.image_root, max_new_tokens=config.max_new_tokens
        )
    raise ConfigError(f"unknown generator backend: {spec!r}")


def build_embedding_backend(config: PipelineConfig) -> filtering.EmbeddingBackend:
    spec = config.embedding_backend
    if spec.startswith(("http://", "https://")):
        return filtering.RemoteEmbeddingBackend(spec)
    kind, _, rest = spec.partition(":")
    if kind == "remote":
        return filtering.RemoteEmbeddingBackend(rest)
    if kind == "deterministic":
        parts = [p for p in rest.split(":") if p]
        dimension = int(parts[0]) if parts else 64
        seed = int(parts[1]) if len(parts) > 1 else 0
        return filtering.DeterministicEmbeddingBackend(dimension, seed)
    raise ConfigError(f"unknown embedding backend: {spec!r}")


def run_pipeline(config: PipelineConfig) -> Path:
    """Execute all stages; returns the artifact directory."""
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = CorpusManifest.read(config.manifest_path)
    task = TaskType.from_name(config.task)
    pool = load_pool(config.pool_path) if config.pool_path else default_pool()
    prompt_spec = PromptSpec(pool=pool, tau=config.tau)

    # generate
    generations_path = out / "generations.jsonl"
    checkpoint_path = out / "checkpoint.jsonl"
    try:
        backend = build_generator_backend(config)
        run = generation.GenerationRun(
            run_id=f"{config.run_id}-{config.seed}",
            manifest=manifest,
            task=task,
            prompt_spec=prompt_spec,
            backend=backend,
            checkpoint_path=checkpoint_path,
        )
        if config.resume and checkpoint_path.exists():
            generation.resume(run)
        generation_summary = generation.run_generation(
            run, generations_path, parallelism=config.parallelism
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError("generate", exc) from exc

    # parse
    samples_path = out / "samples.jsonl"
    errors_path = out / "parse_errors.jsonl"
    parse_ok = 0
    parse_failed = 0
    try:
        with open(samples_path, "w", encoding="utf-8") as samples_out, open(
            errors_path, "w", encoding="utf-8"
        ) as errors_out:
            for result in generation.iter_generations(generations_path):
                if result.status != generation.STATUS_OK:
                    continue
                outcome = parse_generation(result.raw_text, task, result.image_ref)
                if outcome.ok:
                    sample = outcome.sample
                    enriched = sample_to_dict(sample)
                    enriched["generator_meta"] = {
                        "backend": run.backend.backend_id,
                        "prompt_id": result.prompt_id,
                        "seed": result.seed,
                    }
                    samples_out.write(dump_json_line(enriched) + "\n")
                    parse_ok += 1
                else:
                    error = outcome.error
                    errors_out.write(
                        dump_json_line(
                            {
                                "image": result.image_ref,
                                "code": error.code,
                                "offset": error.offset,
                                "detail": error.detail,
                                "raw_text": result.raw_text,
                            }
                        )
                        + "\n"
                    )
                    parse_failed += 1
    except Exception as exc:
        raise StageError("parse", exc) from exc

    # dedup + filter
    kept_path = out / "kept.jsonl"
    rejected_path = out / "rejected.jsonl"
    try:
        context = filtering.scoring_context_from_manifest(
            backend=build_embedding_backend(config),
            manifest_entries=manifest.entries,
            image_root=config.image_root,
            threshold=config.threshold,
            mode=config.score_mode,
            score_nonregion=config.score_nonregion,
        )
        filter_summary = filtering.run_filter(
            samples_path, context, kept_path, rejected_path, parallelism=config.parallelism
        )
    except Exception as exc:
        raise StageError("filter", exc) from exc

    # stats
    try:
        corpus_stats = stats_mod.compute_stats(kept_path)
        stats_mod.write_stats_outputs(corpus_stats, out / "stats", prefix="kept")
    except Exception as exc:
        raise StageError("stats", exc) from exc

    summary = {
        "generation": generation_summary,
        "parse": {"ok": parse_ok, "failed": parse_failed},
        "filter": filter_summary,
        "stats": {
            "samples": corpus_stats.samples,
            "images": corpus_stats.images,
            "objects": corpus_stats.objects,
        },
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    run_manifest = {
        "config": config.hashable_dict(),
        "config_hash": config.config_hash(),
        "artifacts": [
            "generations.jsonl",
            "checkpoint.jsonl",
            "samples.jsonl",
            "parse_errors.jsonl",
            "kept.jsonl",
            "rejected.jsonl",
            "stats/",
            "summary.json",
        ],
        "note": "output_dir is excluded from config_hash so artifacts relocate cleanly",
    }
    (out / "run_manifest.json").write_text(
        json.dumps(run_manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


# ---------------------------------------------------------------------------
# Export


def export_conversations(kept_path: str | Path, out_path: str | Path) -> int:
    """LLaVA-style conversation records, one JSON array for the file."""
    from .schema import read_samples

    entries = []
    for sample in read_samples(kept_path):
        conversations = []
        for index, turn in enumerate(sample.turns):
            human_value = turn.question if index else f"<image>\n{turn.question}"
            conversations.append({"from": "human", "value": human_value})
            conversations.append({"from": "gpt", "value": turn.answer})
        entries.append(
            {"id": sample.id, "image": sample.image_ref, "conversations": conversations}
        )
    Path(out_path).write_text(
        json.dumps(entries, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return len(entries)


def export_flat(kept_path: str | Path, out_path: str | Path) -> int:
    """One (image, question, answer) row per turn, line-delimited."""
    from .schema import read_samples

    rows = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for sample in read_samples(kept_path):
            for turn in sample.turns:
                out.write(
                    dump_json_line(
                        {
                            "image": sample.image_ref,
                            "question": turn.question,
                            "answer": turn.answer,
                        }
                    )
                    + "\n"
                )
                rows += 1
    return rows
