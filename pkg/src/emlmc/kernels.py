"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built at install time, unless
``EMLMC_PURE_PYTHON=1`` is set. ``BACKEND`` names the active choice.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("EMLMC_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def shared_pattern_spmm(indptr, indices, data, X, backend=None):
    """Apply a batch of same-pattern CSR matrices, one per column of ``X``.

    ``data`` has shape (nnz, J) and ``X`` shape (n, J); returns (n, J).
    """
    backend = backend or BACKEND
    data = np.ascontiguousarray(data, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if data.shape[1] != X.shape[1]:
        raise ValueError("data and X must have the same number of columns")
    out = np.empty((len(indptr) - 1, X.shape[1]))
    if out.size == 0:
        return out
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.shared_pattern_spmm(
            np.ascontiguousarray(indptr, dtype=np.int32),
            np.ascontiguousarray(indices, dtype=np.int32), data, X, out)
    return _kernels_py.shared_pattern_spmm(indptr, indices, data, X, out)
