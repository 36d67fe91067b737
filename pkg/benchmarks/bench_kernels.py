#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Synthesizes a generation-shaped corpus, then times bracket scanning,
tokenization and dot products under both implementations. At remote-
backend scale the wire dominates wall time; these numbers matter for
local reprocessing (parse/stats over millions of records).

Usage: python benchmarks/bench_kernels.py [--records 20000] [--dim 512]
"""

from __future__ import annotations

import argparse
import random
import time

from vlpipe.kernels import pure

try:
    from vlpipe.kernels import _speedups
except ImportError:
    _speedups = None


def make_corpus(records: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    words = "the a man dog left right small chalkboard menu region image".split()
    corpus = []
    for _ in range(records):
        phrase = " ".join(rng.choice(words) for _ in range(rng.randrange(6, 18)))
        box = "[%.3f,%.3f,%.3f,%.3f]" % (
            rng.random() * 0.4,
            rng.random() * 0.4,
            0.5 + rng.random() * 0.5,
            0.5 + rng.random() * 0.5,
        )
        corpus.append(f"Question: I need the coordinates of {phrase}. Answer: {box}.")
    return corpus


def bench(label: str, func, repeat: int = 3) -> float:
    best = min(_timed(func) for _ in range(repeat))
    print(f"  {label:<28} {best * 1000:9.1f} ms")
    return best


def _timed(func) -> float:
    start = time.perf_counter()
    func()
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--records", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=512)
    args = parser.parse_args()

    corpus = make_corpus(args.records)
    rng = random.Random(1)
    vec_a = [rng.uniform(-1, 1) for _ in range(args.dim)]
    vec_b = [rng.uniform(-1, 1) for _ in range(args.dim)]
    dots = max(1, args.records // 2)

    impls = [("pure", pure)]
    if _speedups is not None:
        impls.append(("cython", _speedups))
    else:
        print("compiled kernels not built; showing pure only")

    results: dict[tuple[str, str], float] = {}
    for name, impl in impls:
        print(f"{name}:")
        results[(name, "scan")] = bench(
            f"scan_bracket_literals x{args.records}",
            lambda impl=impl: [impl.scan_bracket_literals(t) for t in corpus],
        )
        results[(name, "tokenize")] = bench(
            f"tokenize x{args.records}",
            lambda impl=impl: [impl.tokenize(t) for t in corpus],
        )
        results[(name, "dot")] = bench(
            f"dot d={args.dim} x{dots}",
            lambda impl=impl: [impl.dot(vec_a, vec_b) for _ in range(dots)],
        )

    if _speedups is not None:
        print("speedup (pure / cython):")
        for op in ("scan", "tokenize", "dot"):
            ratio = results[("pure", op)] / results[("cython", op)]
            print(f"  {op:<10} {ratio:5.2f}x")


if __name__ == "__main__":
    main()
