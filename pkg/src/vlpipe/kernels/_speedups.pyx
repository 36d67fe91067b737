# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot-path kernels.

Must stay behaviorally identical to kernels/pure.py; floating-point
results are required to be bit-identical (plain sequential double math,
no fast-math, no FMA reassociation).
"""

from .pure import classify_candidate

IMPLEMENTATION = "cython"

cdef bint _is_punct(Py_UCS4 ch) noexcept:
    # ASCII punctuation, same set as string.punctuation
    return (33 <= ch <= 47) or (58 <= ch <= 64) or (91 <= ch <= 96) or (123 <= ch <= 126)


def scan_bracket_literals(unicode text):
    cdef Py_ssize_t n = len(text)
    cdef Py_ssize_t i = 0, j
    cdef Py_UCS4 ch
    cdef bint closed
    out = []
    while i < n:
        ch = text[i]
        if ch == u'[' and i + 1 < n and u'0' <= text[i + 1] <= u'9':
            j = i + 1
            closed = False
            while j < n:
                ch = text[j]
                if ch == u'[':
                    break
                if ch == u']':
                    closed = True
                    break
                j += 1
            if closed:
                components = classify_candidate(text[i + 1:j])
                if components is not None:
                    out.append((i, j + 1, components))
                i = j + 1
            else:
                # nested '[' restarts the scan there; end of text stops it
                i = j if j < n else n
        else:
            i += 1
    return out


def tokenize(unicode text):
    cdef unicode lowered = text.lower()
    cdef Py_ssize_t a, b
    out = []
    for raw in lowered.split():
        a = 0
        b = len(raw)
        while a < b and _is_punct(raw[a]):
            a += 1
        while b > a and _is_punct(raw[b - 1]):
            b -= 1
        if b > a:
            out.append(raw[a:b])
    return out


def dot(xs, ys):
    cdef Py_ssize_t n = len(xs)
    if n != len(ys):
        raise ValueError("length mismatch")
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(n):
        acc += <double> xs[k] * <double> ys[k]
    return acc
