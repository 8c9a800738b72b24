"""Pick the compiled pivot loop when it is importable, else the numpy one.

Set ``SPECVERIFY_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _simplex_py

BACKENDS = {"python": _simplex_py.iterate}

try:
    from . import _simplex as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled.iterate

if _compiled is not None and os.environ.get("SPECVERIFY_PURE_PYTHON", "") in ("", "0"):
    DEFAULT_BACKEND = "cython"
else:
    DEFAULT_BACKEND = "python"


def get_kernel(name=None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"simplex backend {name!r} is not available; have {sorted(BACKENDS)}") from None
