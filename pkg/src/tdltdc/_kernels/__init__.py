"""Hot-path kernels with a compiled core and a pure numpy fallback.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over transparently. Set ``TDLTDC_PURE_PYTHON=1`` to
force the fallback (useful for benchmarking and differential tests).
"""

from __future__ import annotations

import os

from . import _py

_FORCE_PY = os.environ.get("TDLTDC_PURE_PYTHON", "") in ("1", "true", "yes")

_impl = _py
BACKEND = "python"
if not _FORCE_PY:
    try:
        from . import _core  # type: ignore[attr-defined]

        _impl = _core
        BACKEND = "compiled"
    except ImportError:
        pass

n_words = _py.n_words
pack_states = _impl.pack_states
seq_values = _py.seq_values
lookup_groups = _impl.lookup_groups
fill_bins = _impl.fill_bins


def available_backends() -> dict:
    """Name-to-module map of kernel implementations importable right now."""
    backends = {"python": _py}
    try:
        from . import _core  # type: ignore[attr-defined]

        backends["compiled"] = _core
    except ImportError:
        pass
    return backends
