"""Kernel backend selection.

The hot per-iteration kernels exist twice: a compiled Cython extension
(``_core``) and a pure NumPy fallback (``_pure``) with identical
signatures.  The compiled core is preferred when importable; set the
environment variable ``EECOORD_PURE=1`` to force the fallback.
``BACKEND`` records which one is active.
"""

import os

if os.environ.get("EECOORD_PURE"):
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _pure as _impl

        BACKEND = "pure"

LN2 = _impl.LN2
sinr_and_den = _impl.sinr_and_den
fg_grad = _impl.fg_grad
prodlog_grad = _impl.prodlog_grad
sumee_eval = _impl.sumee_eval
fixed_point_solve = _impl.fixed_point_solve
grid_scores = _impl.grid_scores

__all__ = [
    "BACKEND",
    "LN2",
    "sinr_and_den",
    "fg_grad",
    "prodlog_grad",
    "sumee_eval",
    "fixed_point_solve",
    "grid_scores",
]
