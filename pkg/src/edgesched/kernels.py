"""Hot kernels, compiled when available.

Set ``EDGESCHED_PURE=1`` to force the pure-Python implementations.
"""

import os

BACKEND = "python"

if not os.environ.get("EDGESCHED_PURE"):
    try:
        from ._kernels import best_candidate, farthest_candidate, flood_fill, interp_many

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._fallback import best_candidate, farthest_candidate, flood_fill, interp_many

__all__ = ["BACKEND", "best_candidate", "farthest_candidate", "flood_fill", "interp_many"]
