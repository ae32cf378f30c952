"""Kernel-core selection: compiled extension if available, numpy fallback.

Set GRAPHDIFF_KERNELS=py or =fast to force a core; the default is the
compiled core when it imports. Both cores produce identical values by
construction (see _slowcore / _fastkernels docstrings), so the choice only
affects speed.
"""

from __future__ import annotations

import os

from . import _slowcore

_choice = os.environ.get("GRAPHDIFF_KERNELS", "auto").lower()

if _choice not in ("auto", "py", "fast"):
    raise RuntimeError(f"GRAPHDIFF_KERNELS must be auto, py or fast, not {_choice!r}")

_impl = _slowcore
ACTIVE_CORE = "py"

if _choice in ("auto", "fast"):
    try:
        from . import _fastkernels as _impl  # type: ignore[no-redef]
        ACTIVE_CORE = "fast"
    except ImportError:
        if _choice == "fast":
            raise RuntimeError(
                "GRAPHDIFF_KERNELS=fast but the compiled extension is not built"
            ) from None

conv2d_core = _impl.conv2d_core
max_pool2d_core = _impl.max_pool2d_core
adaptive_avg_pool2d_core = _impl.adaptive_avg_pool2d_core
matmul3_core = _impl.matmul3_core
linear_core = _impl.linear_core
softmax_rows_core = _impl.softmax_rows_core
layer_norm_rows_core = _impl.layer_norm_rows_core
gelu_core = _impl.gelu_core
