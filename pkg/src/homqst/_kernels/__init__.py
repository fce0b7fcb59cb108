"""MLE iteration kernels.

The compiled ``_mle_ext`` module is used when it was built; otherwise the
numpy ``_fallback`` is selected at import.  Set ``HOMQST_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("HOMQST_PURE_PYTHON") == "1":
        raise ImportError("pure-python backend requested")
    from . import _mle_ext as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name=None):
    """Kernel module by name; ``None`` selects the default backend."""
    name = BACKEND if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
