"""Drive a generator backend over a corpus manifest.

Each manifest entry gets a prompt rendered with a per-image seed derived
from (run id, image ref), so outputs are reproducible regardless of
worker count or resume points. Results flow through a single ordered
writer: the output file and the checkpoint are both in manifest order,
which makes artifact directories byte-stable under any parallelism.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import requests

from .parsing import strip_eos
from .rng import stable_hash64
from .schema import CorpusManifest, dump_json_line
from .templates import PromptSpec, RenderedPrompt, TaskType, render_prompt

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_TRANSPORT_ERROR = "transport_error"
STATUS_EMPTY_OUTPUT = "empty_output"


class GenerationError(Exception):
    pass


class TransportError(GenerationError):
    pass


class TimeoutError_(TransportError):
    pass


class RemoteError(TransportError):
    def __init__(self, status: int, detail: str = "") -> None:
        super().__init__(f"backend returned {status}: {detail}")
        self.status = status


class UnscriptedImageError(GenerationError):
    def __init__(self, image_ref: str) -> None:
        super().__init__(f"mock backend has no script for {image_ref!r}")
        self.image_ref = image_ref


class CheckpointCorruptError(GenerationError):
    pass


class GeneratorBackend:
    """Interface: generate(image_ref, prompt) -> raw text or raise."""

    backend_id = "abstract"

    def generate(self, image_ref: str, prompt: str) -> str:
        raise NotImplementedError


class ScriptedMockBackend(GeneratorBackend):
    """Canned text per image ref; counts calls so tests can assert on them."""

    backend_id = "mock"

    def __init__(self, script: dict[str, str]) -> None:
        self.script = dict(script)
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMockBackend":
        with open(path, encoding="utf-8") as handle:
            return cls(json.load(handle))

    def generate(self, image_ref: str, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        if image_ref not in self.script:
            raise UnscriptedImageError(image_ref)
        text = self.script[image_ref]
        if text == "<error>":
            raise RemoteError(500, "scripted failure")
        return text


class RemoteGeneratorBackend(GeneratorBackend):
    """HTTP client for the generation service.

    POST {endpoint}/generate with {"image": base64, "prompt": text,
    "max_new_tokens": int} -> {"text": str}. Retries transport failures
    and 5xx with exponential backoff (base * 2^k); jitter stays off so
    test runs are reproducible.
    """

    backend_id = "remote"

    def __init__(
        self,
        endpoint: str,
        image_root: str | Path,
        timeout: float = 30.0,
        max_retries: int = 3,
        max_new_tokens: int = 256,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        token: str | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.image_root = Path(image_root)
        self.timeout = timeout
        self.max_retries = max_retries
        self.max_new_tokens = max_new_tokens
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.token = token
        self._local = threading.local()

    @property
    def last_retry_count(self) -> int:
        return getattr(self._local, "retries", 0)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def generate(self, image_ref: str, prompt: str) -> str:
        payload = {
            "image": base64.b64encode((self.image_root / image_ref).read_bytes()).decode(),
            "prompt": prompt,
            "max_new_tokens": self.max_new_tokens,
        }
        last_error: TransportError = RemoteError(0, "no attempt made")
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    f"{self.endpoint}/generate",
                    json=payload,
                    timeout=self.timeout,
                    headers=self._headers(),
                )
            except requests.Timeout as exc:
                last_error = TimeoutError_(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if response.status_code >= 500:
                last_error = RemoteError(response.status_code, response.text[:200])
                continue
            if response.status_code != 200:
                raise RemoteError(response.status_code, response.text[:200])
            self._local.retries = attempt
            return str(response.json().get("text", ""))
        raise last_error


@dataclass(frozen=True)
class GenerationResult:
    image_ref: str
    prompt: str
    raw_text: str
    status: str
    seed: int
    prompt_id: int
    retries: int = 0

    def to_dict(self) -> dict:
        return {
            "image": self.image_ref,
            "prompt": self.prompt,
            "raw_text": self.raw_text,
            "status": self.status,
            "seed": self.seed,
            "prompt_id": self.prompt_id,
            "retries": self.retries,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "GenerationResult":
        return cls(
            image_ref=record["image"],
            prompt=record["prompt"],
            raw_text=record["raw_text"],
            status=record["status"],
            seed=record["seed"],
            prompt_id=record["prompt_id"],
            retries=record.get("retries", 0),
        )


@dataclass
class GenerationRun:
    run_id: str
    manifest: CorpusManifest
    task: TaskType
    prompt_spec: PromptSpec
    backend: GeneratorBackend
    checkpoint_path: Path
    completed: dict[str, GenerationResult] = field(default_factory=dict)


def image_seed(run_id: str, image_ref: str) -> int:
    return stable_hash64(run_id, image_ref)


def prompt_for(run: GenerationRun, image_ref: str) -> RenderedPrompt:
    return render_prompt(run.prompt_spec, run.task, image_seed(run.run_id, image_ref))


def generate_one(backend: GeneratorBackend, image_ref: str, prompt: str) -> str:
    """Backend text verbatim, minus a trailing end-of-sequence marker."""
    return strip_eos(backend.generate(image_ref, prompt))


def _process_entry(run: GenerationRun, image_ref: str) -> GenerationResult:
    rendered = prompt_for(run, image_ref)
    retries = 0
    try:
        text = generate_one(run.backend, image_ref, rendered.full_text)
        retries = getattr(run.backend, "last_retry_count", 0)
        status = STATUS_OK if text.strip() else STATUS_EMPTY_OUTPUT
    except GenerationError as exc:
        log.debug("generation failed for %s: %s", image_ref, exc)
        text = ""
        status = STATUS_TRANSPORT_ERROR
    return GenerationResult(
        image_ref=image_ref,
        prompt=rendered.full_text,
        raw_text=text,
        status=status,
        seed=rendered.seed,
        prompt_id=rendered.general_used,
        retries=retries,
    )


def run_generation(
    run: GenerationRun, output_path: str | Path, parallelism: int = 1
) -> dict[str, int]:
    """Process every manifest entry; returns the status summary.

    Already-checkpointed entries are not re-sent. New results append to
    the checkpoint in manifest order (one fsync-free atomic line each),
    then the output file is rewritten in full manifest order.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    pending = [
        e.image_ref for e in run.manifest.entries if e.image_ref not in run.completed
    ]

    run.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    new_checkpoint = not run.checkpoint_path.exists()
    with open(run.checkpoint_path, "a", encoding="utf-8") as ckpt:
        if new_checkpoint:
            ckpt.write(dump_json_line({"run_id": run.run_id, "kind": "checkpoint"}) + "\n")
            ckpt.flush()

        def emit(result: GenerationResult) -> None:
            run.completed[result.image_ref] = result
            ckpt.write(dump_json_line(result.to_dict()) + "\n")
            ckpt.flush()

        if parallelism == 1 or not pending:
            for image_ref in pending:
                emit(_process_entry(run, image_ref))
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                futures = [pool.submit(_process_entry, run, ref) for ref in pending]
                for future in futures:
                    emit(future.result())

    summary = {STATUS_OK: 0, STATUS_TRANSPORT_ERROR: 0, STATUS_EMPTY_OUTPUT: 0}
    with open(output_path, "w", encoding="utf-8") as out:
        for entry in run.manifest.entries:
            result = run.completed[entry.image_ref]
            summary[result.status] += 1
            out.write(dump_json_line(result.to_dict()) + "\n")
    return summary


def load_checkpoint(
    checkpoint_path: str | Path, run_id: str
) -> dict[str, GenerationResult]:
    """Parse a checkpoint; any unreadable line means the file is corrupt."""
    completed: dict[str, GenerationResult] = {}
    path = Path(checkpoint_path)
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise CheckpointCorruptError(f"{path}: empty checkpoint")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CheckpointCorruptError(f"{path}: bad header: {exc}") from exc
    if header.get("kind") != "checkpoint" or header.get("run_id") != run_id:
        raise CheckpointCorruptError(
            f"{path}: header does not match run {run_id!r}: {header}"
        )
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            result = GenerationResult.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError) as exc:
            raise CheckpointCorruptError(f"{path}:{lineno}: {exc}") from exc
        completed[result.image_ref] = result
    return completed


def resume(run: GenerationRun) -> GenerationRun:
    """Load prior progress so run_generation skips completed entries."""
    run.completed = load_checkpoint(run.checkpoint_path, run.run_id)
    return run


def iter_generations(path: str | Path) -> Iterator[GenerationResult]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield GenerationResult.from_dict(json.loads(line))
