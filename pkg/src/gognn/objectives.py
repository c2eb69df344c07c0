"""Link scoring heads, negative sampling and the cross-entropy objectives.

Scores are computed as logits and the losses use log-sigmoid directly, which
equals -log(p) and -log(1 - p) without the round trip through a probability
that could underflow to exactly 0 or 1.
"""

import numpy as np

from . import tensor as T
from .errors import ContractError, DataError, ShapeError
from .nn import Module, glorot
from .tensor import Tensor

MAX_REJECTIONS = 100


def _rowdot(a, b):
    return T.sum(T.mul(a, b), axis=1)


def _open_unit(p):
    """Keep a probability strictly inside (0, 1) where float rounding would hit an end."""
    tiny = np.finfo(p.dtype).tiny
    upper_gap = np.finfo(p.dtype).epsneg
    return T.sub(1.0, T.clamp_min(T.sub(1.0, T.clamp_min(p, tiny)), upper_gap))


def cci_logits(x, pairs):
    """x_i . x_j for each row (i, j) of ``pairs`` -> Tensor[E]."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return Tensor(np.zeros(0, dtype=x.dtype))
    return _rowdot(T.gather_rows(x, pairs[:, 0]), T.gather_rows(x, pairs[:, 1]))


def cci_score(x_i, x_j):
    """sigmoid(x_i . x_j) for two representation vectors."""
    x_i, x_j = T.as_tensor(x_i), T.as_tensor(x_j)
    if x_i.shape != x_j.shape:
        raise ShapeError(f"representation widths differ: {x_i.shape} vs {x_j.shape}")
    return _open_unit(T.sigmoid(T.sum(T.mul(x_i, x_j))))


class RelationWeights(Module):
    """One square matrix W_r per side-effect type."""

    def __init__(self, n_relations, dim, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = glorot(rng, dim, dim, shape=(n_relations, dim, dim), dtype=dtype)

    @property
    def n_relations(self):
        return self.weight.shape[0]


def ddi_logits(x, w, triplets):
    """(W_r x_i) . (W_r x_j) for each row (i, r, j) -> Tensor[E]."""
    w = w.weight if isinstance(w, RelationWeights) else T.as_tensor(w)
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if not len(triplets):
        return Tensor(np.zeros(0, dtype=x.dtype))
    i, r, j = triplets.T
    bad = np.flatnonzero((r < 0) | (r >= w.shape[0]))
    if len(bad):
        raise DataError(f"triplet {tuple(triplets[bad[0]].tolist())} has an unknown relation "
                        f"(have {w.shape[0]})")
    wi = T.batched_matvec(w, r, T.gather_rows(x, i))
    wj = T.batched_matvec(w, r, T.gather_rows(x, j))
    return _rowdot(wi, wj)


def ddi_score(x_i, x_j, w_r):
    """sigmoid((W_r x_i) . (W_r x_j))."""
    x_i, x_j, w_r = T.as_tensor(x_i), T.as_tensor(x_j), T.as_tensor(w_r)
    col = lambda v: T.reshape(v, (v.shape[0], 1))  # noqa: E731
    return _open_unit(T.sigmoid(T.sum(T.mul(T.matmul(w_r, col(x_i)), T.matmul(w_r, col(x_j))))))


def pair_loss(pos, neg, from_probs=False):
    """sum(-log p_pos) + sum(-log(1 - p_neg)).

    ``pos``/``neg`` are logits by default; with ``from_probs`` they are
    probabilities, clamped away from 0 before the log.
    """
    pos, neg = T.as_tensor(pos), T.as_tensor(neg)
    if pos.shape != neg.shape:
        raise ContractError(f"need one negative per positive, got {pos.shape} vs {neg.shape}")
    if pos.size == 0:
        return Tensor(np.zeros((), dtype=pos.dtype))
    if from_probs:
        lp = T.log(T.clamp_min(pos))
        ln = T.log(T.clamp_min(T.sub(1.0, neg)))
    else:
        lp, ln = T.log_sigmoid(pos), T.log_sigmoid(T.neg(neg))
    return T.neg(T.add(T.sum(lp), T.sum(ln)))


def cci_loss(positives, negatives, from_probs=False):
    return pair_loss(positives, negatives, from_probs)


def ddi_loss(triplets, negatives, from_probs=False):
    return pair_loss(triplets, negatives, from_probs)


# ---------------------------------------------------------------- negative sampling

def edge_key(i, j, r=None):
    """Orientation-free key for an undirected (optionally typed) edge."""
    a, b = (i, j) if i <= j else (j, i)
    return (a, b) if r is None else (a, r, b)


class NegativeSampler:
    """Corrupts the tail of positives, filtering observed edges.

    ``distribution`` is "uniform" (default) or "degree" (proportional to the
    node degree among the observed edges, plus one so no node has mass 0).
    """

    def __init__(self, n_nodes, observed_edges, relations=None, distribution="uniform",
                 filtered=True):
        if n_nodes < 2:
            raise ContractError("negative sampling needs at least 2 nodes")
        self.n_nodes = int(n_nodes)
        edges = np.asarray(observed_edges, dtype=np.int64).reshape(-1, 2)
        rel = None if relations is None else np.asarray(relations, dtype=np.int64)
        self.observed = ({edge_key(int(i), int(j)) for i, j in edges} if rel is None else
                         {edge_key(int(i), int(j), int(r)) for (i, j), r in zip(edges, rel)})
        self.filtered = filtered
        if distribution == "uniform":
            self.probs = None
        elif distribution == "degree":
            deg = np.bincount(edges.reshape(-1), minlength=self.n_nodes) + 1.0
            self.probs = deg / deg.sum()
        else:
            raise ValueError(f"unknown sampling distribution {distribution!r}")

    def _draw(self, rng):
        if self.probs is None:
            return int(rng.integers(self.n_nodes))
        return int(rng.choice(self.n_nodes, p=self.probs))

    def corrupt(self, positive, rng):
        i, r, j = (positive[0], None, positive[1]) if len(positive) == 2 else positive
        i = int(i)
        for _ in range(MAX_REJECTIONS):
            m = self._draw(rng)
            if m == i:
                continue
            if self.filtered and edge_key(i, m, r) in self.observed:
                continue
            break
        else:
            m = int(rng.integers(self.n_nodes - 1))
            m += m >= i
        return (i, m) if r is None else (i, r, m)

    def corrupt_batch(self, positives, rng):
        positives = np.asarray(positives, dtype=np.int64)
        out = [self.corrupt(tuple(p), rng) for p in positives.tolist()]
        return np.asarray(out, dtype=np.int64).reshape(positives.shape)


def sample_negative(positive, rng, graph, distribution="uniform", filtered=True):
    """One corrupted copy of ``positive`` against an InteractionGraph's edges."""
    sampler = NegativeSampler(graph.n_nodes, graph.edges, graph.relations, distribution, filtered)
    return sampler.corrupt(positive, rng)
