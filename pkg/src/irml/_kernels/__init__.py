"""Hot kernels, compiled when available.

The Cython build is used unless it failed to compile or ``IRML_PURE_PYTHON``
is set to a non-empty value other than ``0``. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels as python

_force_py = os.environ.get("IRML_PURE_PYTHON", "") not in ("", "0")

compiled = None
if not _force_py:
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

bidirectional_bfs = _impl.bidirectional_bfs
sq_distances = _impl.sq_distances
nearest_codewords = _impl.nearest_codewords
margin_grad_accumulate = _impl.margin_grad_accumulate

__all__ = [
    "BACKEND",
    "bidirectional_bfs",
    "sq_distances",
    "nearest_codewords",
    "margin_grad_accumulate",
]
