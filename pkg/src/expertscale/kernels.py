"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``EXPERTSCALE_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("EXPERTSCALE_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        from . import _fallback as _impl

route_topk = _impl.route_topk
min_makespan = _impl.min_makespan
BACKEND = _impl.BACKEND

__all__ = ["route_topk", "min_makespan", "BACKEND"]
