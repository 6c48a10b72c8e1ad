"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``PERPEX_BACKEND=python``
forces the pure-Python fallback. Both produce identical bits.
"""

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def _select():
    want = os.environ.get("PERPEX_BACKEND", "").strip().lower()
    if want in BACKENDS:
        return want
    return "compiled" if _compiled is not None else "python"


BACKEND = _select()
_impl = BACKENDS[BACKEND]


def get(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    return BACKENDS[name or BACKEND]


def path_fill(m, r, q, out):
    return _impl.path_fill(m, r, q, out)


def series_fill(m, pos, acc, prod, terms, q, tol, max_terms, out, truncated, out_pos):
    return _impl.series_fill(m, pos, acc, prod, terms, q, tol, max_terms, out, truncated, out_pos)
