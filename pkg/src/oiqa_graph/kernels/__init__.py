"""Hot kernels: compiled Cython when available, numpy otherwise.

Set ``OIQA_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

if os.environ.get("OIQA_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

haversine_matrix = _impl.haversine_matrix
sample_gnomonic = _impl.sample_gnomonic

__all__ = ["BACKEND", "haversine_matrix", "sample_gnomonic"]
