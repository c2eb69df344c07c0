# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter/gather kernels used by the autodiff ops.

Signatures mirror ``_pykernels`` exactly; both modules must agree to 1e-12.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef fused real:
    float
    double


def segment_sum(real[:, ::1] values, const cnp.int64_t[::1] seg, Py_ssize_t n):
    cdef Py_ssize_t e, k, s
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, d), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    for e in range(m):
        s = seg[e]
        if s < 0 or s >= n:
            raise IndexError(f"segment id {s} out of range [0, {n})")
        for k in range(d):
            out[s, k] += values[e, k]
    return out_arr


def csr_matmul(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               real[::1] data, real[:, ::1] x, Py_ssize_t n_rows):
    cdef Py_ssize_t i, p, k, j
    cdef Py_ssize_t d = x.shape[1]
    cdef real w
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n_rows, d), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            for k in range(d):
                out[i, k] += w * x[j, k]
    return out_arr


def segment_softmax(real[::1] scores, const cnp.int64_t[::1] ptr):
    cdef Py_ssize_t g, p, lo, hi
    cdef Py_ssize_t n_groups = ptr.shape[0] - 1
    cdef double mx, total
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty(scores.shape[0], dtype=dtype)
    cdef real[::1] out = out_arr
    for g in range(n_groups):
        lo = ptr[g]
        hi = ptr[g + 1]
        if hi <= lo:
            raise ValueError(f"softmax group {g} is empty")
        mx = scores[lo]
        for p in range(lo + 1, hi):
            if scores[p] > mx:
                mx = scores[p]
        total = 0.0
        for p in range(lo, hi):
            out[p] = <real>exp(scores[p] - mx)
            total += out[p]
        for p in range(lo, hi):
            out[p] = <real>(out[p] / total)
    return out_arr


def segment_softmax_backward(real[::1] y, real[::1] g, const cnp.int64_t[::1] ptr):
    cdef Py_ssize_t s, p, lo, hi
    cdef Py_ssize_t n_groups = ptr.shape[0] - 1
    cdef double dot
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty(y.shape[0], dtype=dtype)
    cdef real[::1] out = out_arr
    for s in range(n_groups):
        lo = ptr[s]
        hi = ptr[s + 1]
        dot = 0.0
        for p in range(lo, hi):
            dot += y[p] * g[p]
        for p in range(lo, hi):
            out[p] = <real>(y[p] * (g[p] - dot))
    return out_arr


def segment_topk(double[::1] scores, const cnp.int64_t[::1] ptr, double ratio):
    """Per segment, keep the ceil(ratio * n) best scores.

    Ties go to the lower index; indices come back ascending within each
    segment. Returns (global indices, new segment pointer).
    """
    cdef Py_ssize_t s, lo, hi, n, k, i, j, t, total = 0
    cdef Py_ssize_t n_seg = ptr.shape[0] - 1
    cdef double sc
    counts = np.empty(n_seg, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = counts
    for s in range(n_seg):
        n = ptr[s + 1] - ptr[s]
        k = _ceil_count(ratio, n)
        cnt[s] = k
        total += k
    new_ptr_arr = np.zeros(n_seg + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] new_ptr = new_ptr_arr
    for s in range(n_seg):
        new_ptr[s + 1] = new_ptr[s] + cnt[s]
    idx_arr = np.empty(total, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = idx_arr
    # rank each node inside its segment: rank = #better nodes; keep rank < k.
    cdef Py_ssize_t out_pos, better
    for s in range(n_seg):
        lo = ptr[s]
        hi = ptr[s + 1]
        k = cnt[s]
        out_pos = new_ptr[s]
        for i in range(lo, hi):
            sc = scores[i]
            better = 0
            for j in range(lo, hi):
                if scores[j] > sc or (scores[j] == sc and j < i):
                    better += 1
                    if better >= k:
                        break
            if better < k:
                idx[out_pos] = i
                out_pos += 1
    return idx_arr, new_ptr_arr


cdef inline Py_ssize_t _ceil_count(double ratio, Py_ssize_t n):
    cdef double x = ratio * n
    cdef Py_ssize_t k = <Py_ssize_t>x
    if k < x - 1e-9:
        k += 1
    if k < 1:
        k = 1
    if k > n:
        k = n
    return k
