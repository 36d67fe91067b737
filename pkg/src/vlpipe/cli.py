"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 stage failure.
Endpoints and the API token may come from VLPIPE_GENERATE_ENDPOINT,
VLPIPE_EMBED_ENDPOINT and VLPIPE_API_TOKEN; everything else is flags or
the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, filtering, generation, human_eval, ingest, pipeline, stats as stats_mod
from .kernels import IMPLEMENTATION
from .schema import CorpusManifest, TaskType, dump_json_line, sample_to_dict, write_samples
from .templates import PromptSpec, default_pool, load_pool, load_specific_overrides, render_prompt

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _task(value: str) -> TaskType:
    try:
        return TaskType.from_name(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_pool_arg(path: str | None):
    return load_pool(path) if path else default_pool()


def build_parser() -> _Parser:
    parser = _Parser(prog="vlpipe", description=__doc__)
    parser.add_argument(
        "--version",
        action="store_true",
        help="print version info as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", parents=[], help="read a source dataset into sample records")
    p.add_argument("--source-id", required=True)
    p.add_argument("--format", required=True, choices=ingest.FORMAT_TAGS, dest="format_tag")
    p.add_argument("--task", required=True, type=_task)
    p.add_argument("--path", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("manifest", help="scan an image directory into a corpus manifest")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--source-tag", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-report", default=None)
    p.add_argument("--parallelism", type=int, default=1)

    p = sub.add_parser("recipe", help="write a named training-mixture recipe")
    p.add_argument("--name", required=True, choices=ingest.RECIPE_NAMES)
    p.add_argument("--region-reduction", type=float, default=ingest.DEFAULT_REGION_REDUCTION)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render prompts for a task")
    p.add_argument("--task", required=True, type=_task)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--pool", default=None)
    p.add_argument("--specific-overrides", default=None)

    p = sub.add_parser("generate", help="drive the generator backend over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True, type=_task)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--backend", required=True, help="scripted:<path> or an http(s) endpoint")
    p.add_argument("--image-root", default=".")
    p.add_argument("--pool", default=None)
    p.add_argument("--run-id", default="run")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("parse", help="parse raw generations into sample records")
    p.add_argument("--generations", required=True)
    p.add_argument("--task", required=True, type=_task)
    p.add_argument("--out-samples", required=True)
    p.add_argument("--out-errors", required=True)
    p.add_argument("--lenient", action="store_true", help="case-insensitive markers")

    p = sub.add_parser("filter", help="similarity-filter sample records")
    p.add_argument("--samples", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", required=True)
    p.add_argument("--backend", default="deterministic:64")
    p.add_argument("--threshold", type=float, default=filtering.DEFAULT_THRESHOLD)
    p.add_argument("--score-mode", choices=filtering.SCORE_MODES, default="rescaled")
    p.add_argument("--score-nonregion", action="store_true")
    p.add_argument("--kept", required=True)
    p.add_argument("--rejected", required=True)
    p.add_argument("--parallelism", type=int, default=1)

    p = sub.add_parser("stats", help="compute corpus statistics and charts")
    p.add_argument("--samples", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="corpus")

    p = sub.add_parser("compare", help="compare stored stats documents")
    p.add_argument(
        "--dataset",
        action="append",
        required=True,
        metavar="LABEL=PATH",
        help="repeatable; label plus stats document path",
    )
    p.add_argument("--out", default=None, help="write machine-readable rows here")

    p = sub.add_parser("sample-eval", help="draw a review batch")
    p.add_argument("--samples", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tag", choices=human_eval.BATCH_TAGS, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("aggregate-eval", help="aggregate review sessions into a report")
    p.add_argument("--batch", required=True)
    p.add_argument("--session", action="append", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("export", help="export kept samples for training")
    p.add_argument("--kept", required=True)
    p.add_argument("--format", choices=("conversation", "flat"), required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--resume", action="store_true")

    return parser


def _embedding_backend(spec: str) -> filtering.EmbeddingBackend:
    config = pipeline.PipelineConfig(
        manifest_path=".", image_root=".", output_dir=".", embedding_backend=spec
    )
    return pipeline.build_embedding_backend(config)


def _cmd_ingest(args) -> int:
    spec = ingest.SourceSpec(
        source_id=args.source_id,
        format_tag=args.format_tag,
        path=args.path,
        task=args.task,
        sample_limit=args.limit,
    )
    with open(args.out, "w", encoding="utf-8") as out:
        count = write_samples(ingest.ingest_source(spec), out)
    print(f"wrote {count} samples to {args.out}")
    return EXIT_OK


def _cmd_manifest(args) -> int:
    manifest, skipped = ingest.build_manifest(
        args.image_dir, args.source_tag, parallelism=args.parallelism
    )
    manifest.write(args.out)
    if args.skip_report:
        Path(args.skip_report).write_text(
            "".join(line + "\n" for line in skipped), encoding="utf-8"
        )
    print(f"manifest: {manifest.declared_count} images, {len(skipped)} skipped")
    return EXIT_OK


def _cmd_recipe(args) -> int:
    recipe = ingest.build_recipe(args.name, region_reduction=args.region_reduction)
    Path(args.out).write_text(
        json.dumps(recipe.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"recipe {recipe.name}: {recipe.total_declared():,} declared samples")
    return EXIT_OK


def _cmd_render(args) -> int:
    pool = _load_pool_arg(args.pool)
    specific = None
    if args.specific_overrides:
        from .templates import default_specific_map

        specific = default_specific_map()
        specific.update(load_specific_overrides(args.specific_overrides))
    spec = (
        PromptSpec(pool=pool, tau=args.tau, specific_map=specific)
        if specific
        else PromptSpec(pool=pool, tau=args.tau)
    )
    for offset in range(args.count):
        rendered = render_prompt(spec, args.task, args.seed + offset)
        print(
            dump_json_line(
                {
                    "seed": rendered.seed,
                    "general_used": rendered.general_used,
                    "specific_included": rendered.specific_included,
                    "full_text": rendered.full_text,
                }
            )
        )
    return EXIT_OK


def _cmd_generate(args) -> int:
    manifest = CorpusManifest.read(args.manifest)
    backend_spec = os.environ.get("VLPIPE_GENERATE_ENDPOINT") or args.backend
    kind, _, arg = backend_spec.partition(":")
    if kind == "scripted":
        backend = generation.ScriptedMockBackend.from_file(arg)
    else:
        endpoint = backend_spec if backend_spec.startswith("http") else arg
        backend = generation.RemoteGeneratorBackend(
            endpoint, args.image_root, token=os.environ.get("VLPIPE_API_TOKEN")
        )
    run = generation.GenerationRun(
        run_id=args.run_id,
        manifest=manifest,
        task=args.task,
        prompt_spec=PromptSpec(pool=_load_pool_arg(args.pool), tau=args.tau),
        backend=backend,
        checkpoint_path=Path(args.checkpoint or f"{args.out}.checkpoint"),
    )
    if args.resume and run.checkpoint_path.exists():
        generation.resume(run)
    summary = generation.run_generation(run, args.out, parallelism=args.parallelism)
    print(dump_json_line(summary))
    return EXIT_OK


def _cmd_parse(args) -> int:
    from .parsing import parse_generation

    ok = 0
    failed = 0
    with open(args.out_samples, "w", encoding="utf-8") as samples_out, open(
        args.out_errors, "w", encoding="utf-8"
    ) as errors_out:
        for result in generation.iter_generations(args.generations):
            if result.status != generation.STATUS_OK:
                continue
            outcome = parse_generation(
                result.raw_text, args.task, result.image_ref, lenient=args.lenient
            )
            if outcome.ok:
                samples_out.write(dump_json_line(sample_to_dict(outcome.sample)) + "\n")
                ok += 1
            else:
                errors_out.write(
                    dump_json_line(
                        {
                            "image": result.image_ref,
                            "code": outcome.error.code,
                            "offset": outcome.error.offset,
                            "detail": outcome.error.detail,
                        }
                    )
                    + "\n"
                )
                failed += 1
    print(dump_json_line({"ok": ok, "failed": failed}))
    return EXIT_OK


def _cmd_filter(args) -> int:
    manifest = CorpusManifest.read(args.manifest)
    backend_spec = os.environ.get("VLPIPE_EMBED_ENDPOINT") or args.backend
    context = filtering.scoring_context_from_manifest(
        backend=_embedding_backend(backend_spec),
        manifest_entries=manifest.entries,
        image_root=args.image_root,
        threshold=args.threshold,
        mode=args.score_mode,
        score_nonregion=args.score_nonregion,
    )
    summary = filtering.run_filter(
        args.samples, context, args.kept, args.rejected, parallelism=args.parallelism
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_stats(args) -> int:
    corpus_stats = stats_mod.compute_stats(args.samples)
    written = stats_mod.write_stats_outputs(corpus_stats, args.out_dir, prefix=args.prefix)
    print(f"wrote {len(written)} stats files to {args.out_dir}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    rows = []
    for item in args.dataset:
        if "=" not in item:
            raise pipeline.ConfigError(f"--dataset expects LABEL=PATH, got {item!r}")
        label, _, path = item.partition("=")
        with open(path, encoding="utf-8") as handle:
            rows.append(stats_mod.DatasetRow.from_document(label, json.load(handle)))
    machine, table = stats_mod.compare_datasets(rows)
    if args.out:
        Path(args.out).write_text(
            json.dumps(machine, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(table)
    return EXIT_OK


def _cmd_sample_eval(args) -> int:
    batch = human_eval.sample_batch(args.samples, args.n, args.seed, args.tag)
    human_eval.write_batch(batch, args.out)
    print(f"batch {batch.batch_id}: {batch.size} samples")
    return EXIT_OK


def _cmd_aggregate_eval(args) -> int:
    batch = human_eval.read_batch(args.batch)
    sessions = [human_eval.ingest_session(path, batch) for path in args.session]
    rows, agreement = human_eval.aggregate(sessions, batch)
    print(human_eval.render_report(rows))
    if agreement is not None:
        print(f"raw agreement: {agreement:.2%}")
    if args.out:
        payload = {
            "rows": [
                {
                    "type": row.type.display_name,
                    "samples": row.samples,
                    "correct_percent": row.correct_percent,
                }
                for row in rows
            ],
            "agreement": agreement,
        }
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _cmd_export(args) -> int:
    if args.format == "conversation":
        count = pipeline.export_conversations(args.kept, args.out)
    else:
        count = pipeline.export_flat(args.kept, args.out)
    print(f"exported {count} records to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    for name in ("tau", "threshold", "seed", "parallelism"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.resume:
        overrides["resume"] = True
    config = pipeline.PipelineConfig.from_file(args.config, overrides)
    out = pipeline.run_pipeline(config)
    print(f"artifacts in {out}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "manifest": _cmd_manifest,
    "recipe": _cmd_recipe,
    "render": _cmd_render,
    "generate": _cmd_generate,
    "parse": _cmd_parse,
    "filter": _cmd_filter,
    "stats": _cmd_stats,
    "compare": _cmd_compare,
    "sample-eval": _cmd_sample_eval,
    "aggregate-eval": _cmd_aggregate_eval,
    "export": _cmd_export,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(json.dumps({"name": "vlpipe", "version": __version__, "kernels": IMPLEMENTATION}))
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    command = _COMMANDS[args.command]
    try:
        return command(args)
    except (pipeline.ConfigError, ingest.IngestError, ValueError) as exc:
        print(f"vlpipe: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pipeline.StageError as exc:
        print(f"vlpipe: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:
        print(f"vlpipe: stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
