"""Ranking metrics: ROC AUC (Mann-Whitney) and step-wise average precision."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class RankedPredictions:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels).reshape(-1)
        if len(s) != len(y):
            raise ContractError(f"{len(s)} scores but {len(y)} labels")
        if not np.isin(y, (0, 1)).all():
            raise ContractError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))


def _coerce(rp, labels):
    return rp if isinstance(rp, RankedPredictions) else RankedPredictions(rp, labels)


def average_ranks(x):
    """1-based ranks, tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    ranks = np.empty(len(x))
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def auc(rp, labels=None):
    """P(random positive outscores random negative), ties counting one half."""
    rp = _coerce(rp, labels)
    n_pos = int(rp.labels.sum())
    n_neg = len(rp.labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC needs at least one positive and one negative")
    rank_sum = average_ranks(rp.scores)[rp.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ap(rp, labels=None):
    """Mean precision at the rank of each positive; equal scores keep input order."""
    rp = _coerce(rp, labels)
    if not rp.labels.any():
        raise ContractError("AP needs at least one positive")
    order = np.lexsort((np.arange(len(rp.scores)), -rp.scores))
    hits = rp.labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits == 1].mean())
