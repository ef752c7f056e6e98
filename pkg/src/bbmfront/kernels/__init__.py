"""Compute-kernel backends.

The hot inner loops (strip survival, tilted corridor paths, soft corridor
paths, branching replicates) exist twice with a single draw-layout contract:

* ``jitted``     numba @njit per-path loops (default when numba imports)
* ``reference``  pure numpy, vectorized over paths / tree generations

Set ``BBMFRONT_NO_NUMBA=1`` to force the reference backend; it is also used
automatically when numba is unavailable.  Both backends consume identical
counter-based random streams (see `bbmfront.rng`), so simulated trees and
integer statistics coincide exactly and float statistics agree to last-ulp
libm differences.  ``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

from . import reference

_env = os.environ.get("BBMFRONT_NO_NUMBA", "").strip().lower()
_disabled = _env not in ("", "0", "false")

if not _disabled:
    try:
        from . import jitted as _jitted
        _active = _jitted
        BACKEND = "numba"
    except ImportError:
        _active = reference
        BACKEND = "numpy"
else:
    _active = reference
    BACKEND = "numpy"


def get_backend(name: str | None = None):
    """Active kernel module, or a specific one by name ('numba'/'numpy')."""
    if name is None:
        return _active
    if name == "numpy":
        return reference
    if name == "numba":
        from . import jitted
        return jitted
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return BACKEND
