"""Hot scatter/gather kernels behind the autodiff ops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is selected at import. Set ``GOGNN_PURE_PYTHON=1`` to force the
fallback, or call :func:`set_backend` at runtime (used by the benchmark).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FUNCS = ("segment_sum", "csr_matmul", "segment_softmax",
          "segment_softmax_backward", "segment_topk")

BACKEND = None


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


def set_backend(name):
    """Switch every kernel to ``"cython"`` or ``"python"``."""
    global BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; reinstall the package")
        mod = _ckernels
    elif name == "python":
        mod = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _FUNCS:
        globals()["_" + fn] = getattr(mod, fn)
    BACKEND = name


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def segment_sum(values, seg, n):
    """Scatter-add rows of ``values`` [m, d] into ``n`` output rows by ``seg``."""
    return _segment_sum(np.ascontiguousarray(values), _i64(seg), int(n))


def csr_matmul(indptr, indices, data, x, n_rows):
    x = np.ascontiguousarray(x)
    return _csr_matmul(_i64(indptr), _i64(indices),
                       np.ascontiguousarray(data, dtype=x.dtype), x, int(n_rows))


def segment_softmax(scores, ptr):
    return _segment_softmax(np.ascontiguousarray(scores), _i64(ptr))


def segment_softmax_backward(y, g, ptr):
    y = np.ascontiguousarray(y)
    return _segment_softmax_backward(y, np.ascontiguousarray(g, dtype=y.dtype), _i64(ptr))


def segment_topk(scores, ptr, ratio):
    """Indices of the top ``ceil(ratio * n)`` scores of every segment.

    Ties are broken toward the lower index and the result is ascending
    within each segment. Returns ``(idx, new_ptr)``.
    """
    return _segment_topk(np.ascontiguousarray(scores, dtype=np.float64),
                         _i64(ptr), float(ratio))


ceil_count = _pykernels.ceil_count

set_backend("python" if _ckernels is None or os.environ.get("GOGNN_PURE_PYTHON") == "1"
            else "cython")
