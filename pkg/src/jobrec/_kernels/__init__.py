"""Hot kernels: compiled extension when available, numpy fallback otherwise.

The compiled module covers the two inner loops that dominate a full
evaluation run: temporally filtered subgraph extraction and segment
scatter/sum. Set ``JOBREC_PURE_PYTHON=1`` to force the fallback (used by
the benchmark and the parity tests).
"""

import os

if os.environ.get("JOBREC_PURE_PYTHON"):
    from . import fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import fallback as _impl

        BACKEND = "python"

segment_sum = _impl.segment_sum
index_add_rows = _impl.index_add_rows
sample_subgraph = _impl.sample_subgraph

__all__ = ["BACKEND", "segment_sum", "index_add_rows", "sample_subgraph"]
