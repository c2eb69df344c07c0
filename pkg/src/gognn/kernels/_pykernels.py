"""Pure numpy versions of the compiled kernels (same signatures)."""

import math

import numpy as np


def ceil_count(ratio, n):
    # guards against 0.3 * 10 == 3.0000000000000004 style round-up
    k = math.ceil(ratio * n - 1e-9)
    return min(max(k, 1), n)


def segment_sum(values, seg, n):
    if len(seg) and (seg.min() < 0 or seg.max() >= n):
        raise IndexError(f"segment id out of range [0, {n})")
    out = np.zeros((n, values.shape[1]), dtype=values.dtype)
    np.add.at(out, seg, values)
    return out


def csr_matmul(indptr, indices, data, x, n_rows):
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(indptr))
    return segment_sum(data[:, None] * x[indices], rows, n_rows)


def segment_softmax(scores, ptr):
    counts = np.diff(ptr)
    if (counts <= 0).any():
        raise ValueError(f"softmax group {int(np.argmax(counts <= 0))} is empty")
    starts = ptr[:-1]
    mx = np.maximum.reduceat(scores, starts)
    e = np.exp(scores - np.repeat(mx, counts))
    total = np.add.reduceat(e, starts)
    return (e / np.repeat(total, counts)).astype(scores.dtype, copy=False)


def segment_softmax_backward(y, g, ptr):
    counts = np.diff(ptr)
    if len(y) == 0:
        return np.empty(0, dtype=y.dtype)
    dot = np.add.reduceat(y * g, ptr[:-1])
    return (y * (g - np.repeat(dot, counts))).astype(y.dtype, copy=False)


def segment_topk(scores, ptr, ratio):
    n_seg = len(ptr) - 1
    idx = []
    new_ptr = np.zeros(n_seg + 1, dtype=np.int64)
    for s in range(n_seg):
        lo, hi = int(ptr[s]), int(ptr[s + 1])
        k = ceil_count(ratio, hi - lo)
        local = scores[lo:hi]
        # stable sort on -score keeps lower index first among ties
        order = np.argsort(-local, kind="stable")[:k]
        idx.append(np.sort(order) + lo)
        new_ptr[s + 1] = new_ptr[s] + k
    if idx:
        return np.concatenate(idx).astype(np.int64), new_ptr
    return np.empty(0, dtype=np.int64), new_ptr
