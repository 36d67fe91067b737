"""Hot-path kernels with a compiled fast path.

Selects the Cython extension when it was built, the pure-Python twin
otherwise. VLPIPE_PURE=1 forces the fallback (used by the equivalence
tests and the benchmark).
"""

from __future__ import annotations

import os

from . import pure as _pure

if os.environ.get("VLPIPE_PURE") == "1":
    _impl = _pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

IMPLEMENTATION: str = _impl.IMPLEMENTATION
scan_bracket_literals = _impl.scan_bracket_literals
tokenize = _impl.tokenize
dot = _impl.dot
classify_candidate = _pure.classify_candidate
