"""Select compiled or numpy kernels at import.

Set ``QZENO_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("QZENO_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

active = compiled if compiled is not None else _fallback
BACKEND = "compiled" if compiled is not None else "python"

lindblad_rhs = active.lindblad_rhs
cosine_transform = active.cosine_transform
