"""Deterministic hash-derived embeddings ("hash-vector v1").

Identical inputs must produce byte-identical vectors across runs and
platforms, so everything is integer/IEEE-double arithmetic seeded from a
blake2b digest. Text hashes its UTF-8 bytes; images hash their decoded
pixels (mode, size, raw bytes), so re-encoding the same pixels does not
change the vector.

Pipeline clients may ship an in-process implementation of the same
algorithm; the frozen vectors in tests/data keep the two in sync.
"""

from __future__ import annotations

import hashlib
import io
import math

from PIL import Image

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _splitmix_stream(seed: int, count: int) -> list[float]:
    state = seed & _MASK64
    values = []
    for _ in range(count):
        state = (state + _GAMMA) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        z ^= z >> 31
        values.append((z >> 11) * (2.0 ** -53))
    return values


def hash_unit_vector(payload: bytes, dimension: int, salt: int = 0) -> list[float]:
    digest = hashlib.blake2b(payload, digest_size=8, salt=salt.to_bytes(8, "big")).digest()
    values = [2.0 * u - 1.0 for u in _splitmix_stream(int.from_bytes(digest, "big"), dimension)]
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        values[0] = 1.0
        return values
    return [v / norm for v in values]


def text_vector(text: str, dimension: int, salt: int = 0) -> list[float]:
    return hash_unit_vector(b"text\x00" + text.encode("utf-8"), dimension, salt)


def image_vector(image_bytes: bytes, dimension: int, salt: int = 0) -> list[float]:
    with Image.open(io.BytesIO(image_bytes)) as image:
        image.load()
        payload = (
            image.mode.encode() + b"\x00" + f"{image.width}x{image.height}".encode()
            + b"\x00" + image.tobytes()
        )
    return hash_unit_vector(b"image\x00" + payload, dimension, salt)
