"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set TAROT_KERNELS=numpy or TAROT_KERNELS=native to force a backend
(forcing the native one raises if the extension was never built).
"""
from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

_forced = os.environ.get("TAROT_KERNELS", "").strip().lower()

if _forced == "numpy":
    from tarot import _kernels_np as _impl
    ACTIVE = "numpy"
elif _forced == "native":
    from tarot import _native as _impl  # type: ignore[no-redef]
    ACTIVE = "native"
elif _forced == "":
    try:
        from tarot import _native as _impl  # type: ignore[no-redef]
        ACTIVE = "native"
    except ImportError:
        from tarot import _kernels_np as _impl
        ACTIVE = "numpy"
        logger.debug("compiled kernels unavailable, using numpy fallback")
else:
    raise RuntimeError(f"TAROT_KERNELS must be 'native' or 'numpy', got {_forced!r}")

label4 = _impl.label4
bilinear_lift = _impl.bilinear_lift
decay_argmax = _impl.decay_argmax
