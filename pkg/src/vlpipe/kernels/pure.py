"""Pure-Python reference implementation of the hot-path kernels.

The compiled module in `_speedups.pyx` must behave identically; the two
are cross-checked in tests/test_kernels.py. Keep any behavior change in
sync between both files.
"""

from __future__ import annotations

import re
import string

IMPLEMENTATION = "pure"

# '[' immediately followed by an ASCII digit, no brackets inside, then ']'
_CANDIDATE = re.compile(r"\[(?=[0-9])[^\[\]]*\]")
_NUMBER = re.compile(r"(?:[0-9]+(?:\.[0-9]+)?|\.[0-9]+)")

_PUNCT = string.punctuation


def classify_candidate(inner: str) -> tuple[float, ...] | None:
    """Shared classifier for bracket candidates.

    Returns the parsed components when every comma-separated piece is an
    unsigned decimal number, else None (prose). Component count is left
    to the caller; a `()` sentinel is never produced because a candidate
    always contains at least one character.
    """
    parts = inner.split(",")
    values = []
    for part in parts:
        part = part.strip(" \t")
        if _NUMBER.fullmatch(part) is None:
            return None
        values.append(float(part))
    return tuple(values)


def scan_bracket_literals(text: str) -> list[tuple[int, int, tuple[float, ...]]]:
    """Find all-numeric bracketed literals like "[0.1, 0.2]".

    A candidate starts at '[' immediately followed by an ASCII digit and
    runs to the next ']' with no bracket in between. Candidates whose
    comma-separated pieces are not all unsigned decimals are prose and
    dropped. Returns (start, end, components) with text[start:end]
    covering both brackets.
    """
    out = []
    for m in _CANDIDATE.finditer(text):
        components = classify_candidate(text[m.start() + 1 : m.end() - 1])
        if components is not None:
            out.append((m.start(), m.end(), components))
    return out


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    out = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            out.append(token)
    return out


def dot(xs, ys) -> float:
    """Sequential dot product; accumulation order is part of the contract."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    acc = 0.0
    for a, b in zip(xs, ys):
        acc += a * b
    return acc
