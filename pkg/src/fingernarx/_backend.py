"""Select the compiled kernels when available, else the NumPy fallback.

Set ``FINGERNARX_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("FINGERNARX_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

median_filter = _impl.median_filter
label_components = _impl.label_components
integrate_plant = _impl.integrate_plant
rollout = _impl.rollout

__all__ = ["BACKEND", "median_filter", "label_components", "integrate_plant", "rollout"]
