"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``GAZEQC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels as pure

try:
    if os.environ.get("GAZEQC_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend forced")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

backend = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

latency_curve = backend.latency_curve
weiszfeld = backend.weiszfeld
fft_radix2 = backend.fft_radix2

__all__ = ["BACKEND", "compiled", "pure", "latency_curve", "weiszfeld", "fft_radix2"]
