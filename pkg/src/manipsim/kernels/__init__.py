"""Hot-loop kernels, compiled when available.

The Cython extension ``_core`` is used if it was built; otherwise the
pure-Python module ``_pure`` is used. Set ``MANIPSIM_PURE_PYTHON=1`` to force
the fallback. ``BACKEND`` names the active one.
"""

import os

from . import _pure

if os.environ.get("MANIPSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _pure

BACKEND = "cython" if _impl is not _pure else "python"

rrm_slate_probs = _impl.rrm_slate_probs
rrm_batch_slate_probs = _impl.rrm_batch_slate_probs
planner_values = _impl.planner_values

__all__ = ["BACKEND", "rrm_slate_probs", "rrm_batch_slate_probs", "planner_values"]
