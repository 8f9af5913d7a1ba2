"""Hot-kernel backend selection.

The compiled extension is preferred when available; set
LANDMARK_RCA_BACKEND=python to force the pure-numpy fallback (or =cython to
require the extension and fail loudly if it is missing).
"""

from __future__ import annotations

import os

_forced = os.environ.get("LANDMARK_RCA_BACKEND", "").strip().lower()

if _forced == "python":
    from . import pyk as _backend
elif _forced in ("", "c", "cython", "compiled"):
    try:
        from . import _ck as _backend  # type: ignore[no-redef]
    except ImportError:
        if _forced:
            raise
        from . import pyk as _backend  # type: ignore[no-redef]
else:
    raise ValueError(
        f"LANDMARK_RCA_BACKEND={_forced!r} not recognized (use 'python' or 'cython')"
    )

BACKEND: str = _backend.NAME
scan_sorted = _backend.scan_sorted
apply_tree = _backend.apply_tree
kde_sum = _backend.kde_sum

__all__ = ["BACKEND", "scan_sorted", "apply_tree", "kde_sum"]
