"""Prompt template: general-instruction pool, per-task designators, tau.

A rendered prompt has the shape

    <s> {system} USER: <image> {general}. {specific} ASSISTANT:

where {general} is drawn uniformly from the pool and {specific} ("This is
a {task} task.") is included with probability tau. Both draws come from
one splitmix stream seeded per render -- general index first, then the
tau draw -- so any two implementations that agree on the stream agree on
every prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .rng import SplitMix64
from .schema import TaskType

MIN_POOL_SIZE = 150
IMAGE_PLACEHOLDER = "<image>"
DEFAULT_SYSTEM_MESSAGE = (
    "A chat between a curious user and an artificial intelligence assistant."
)

_TERMINAL_PUNCTUATION = (".", "?", "!")


class PoolError(ValueError):
    pass


class PoolTooSmallError(PoolError):
    def __init__(self, count: int) -> None:
        super().__init__(f"instruction pool has {count} entries, needs >= {MIN_POOL_SIZE}")
        self.count = count


class DuplicateEntryError(PoolError):
    def __init__(self, entry: str, lines: tuple[int, int]) -> None:
        super().__init__(f"duplicate instruction at lines {lines[0]} and {lines[1]}: {entry!r}")
        self.entry = entry
        self.lines = lines


@dataclass(frozen=True)
class InstructionPool:
    entries: tuple[str, ...]
    source: str

    def __len__(self) -> int:
        return len(self.entries)


def _parse_pool_lines(lines: list[str], source: str) -> InstructionPool:
    entries: list[str] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in seen:
            raise DuplicateEntryError(line, (seen[line], lineno))
        seen[line] = lineno
        entries.append(line)
    if len(entries) < MIN_POOL_SIZE:
        raise PoolTooSmallError(len(entries))
    return InstructionPool(entries=tuple(entries), source=source)


def load_pool(path: str | Path) -> InstructionPool:
    """Load a pool file: UTF-8, one instruction per line, '#' comments."""
    text = Path(path).read_text(encoding="utf-8")
    return _parse_pool_lines(text.splitlines(), str(path))


def default_pool() -> InstructionPool:
    text = resources.files("vlpipe.data").joinpath("general_instructions.txt").read_text("utf-8")
    return _parse_pool_lines(text.splitlines(), "builtin:general_instructions.txt")


def specific_instruction_for(task: TaskType) -> str:
    return f"This is a {task.display_name} task."


def default_specific_map() -> dict[TaskType, str]:
    return {task: specific_instruction_for(task) for task in TaskType}


def load_specific_overrides(path: str | Path) -> dict[TaskType, str]:
    """Override file: `TaskName=instruction` per line, '#' comments."""
    overrides: dict[TaskType, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected TaskName=instruction")
        key, value = line.split("=", 1)
        overrides[TaskType.from_name(key.strip())] = value.strip()
    return overrides


@dataclass(frozen=True)
class PromptSpec:
    pool: InstructionPool
    tau: float
    system_message: str = DEFAULT_SYSTEM_MESSAGE
    specific_map: dict[TaskType, str] = field(default_factory=default_specific_map)

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        missing = [t.name for t in TaskType if t not in self.specific_map]
        if missing:
            raise ValueError(f"specific_map missing tasks: {missing}")


@dataclass(frozen=True)
class RenderedPrompt:
    full_text: str
    general_used: int
    specific_included: bool
    task: TaskType
    seed: int


def render_prompt(spec: PromptSpec, task: TaskType, seed: int) -> RenderedPrompt:
    """Deterministic render; same (spec, task, seed) gives the same text."""
    rng = SplitMix64(seed)
    index = rng.next_index(len(spec.pool))
    include_specific = rng.next_float() < spec.tau

    general = spec.pool.entries[index]
    if not general.endswith(_TERMINAL_PUNCTUATION):
        general += "."
    parts = [f"<s> {spec.system_message} USER: {IMAGE_PLACEHOLDER} {general}"]
    if include_specific:
        parts.append(spec.specific_map[task])
    parts.append("ASSISTANT:")
    return RenderedPrompt(
        full_text=" ".join(parts),
        general_used=index,
        specific_included=include_specific,
        task=task,
        seed=seed,
    )
