"""Per-view ranking lists to aligned pairwise training data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, InputError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class RankedView:
    """One view: sample keys, features ``X`` (N x d) and rank positions ``r`` (1 = best)."""

    view_id: int
    keys: list
    X: np.ndarray
    r: np.ndarray
    columns: list = None

    def __post_init__(self):
        self.keys = list(self.keys)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != len(self.keys):
            raise ShapeError(f"view {self.view_id}: X rows {self.X.shape} != {len(self.keys)} keys")
        if self.r.size != len(self.keys):
            raise ShapeError(f"view {self.view_id}: {self.r.size} ranks for {len(self.keys)} keys")
        if len(set(self.keys)) != len(self.keys):
            raise DataError(f"view {self.view_id}: duplicate keys")
        if np.any(self.r <= 0):
            raise DataError(f"view {self.view_id}: ranks must be positive")

    @property
    def n(self):
        return len(self.keys)

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return RankedView(self.view_id, [self.keys[i] for i in rows], self.X[rows], self.r[rows],
                          self.columns)


@dataclass
class AlignedViews:
    views: list
    r_bar: np.ndarray

    @property
    def keys(self):
        return self.views[0].keys

    @property
    def n(self):
        return self.views[0].n

    @property
    def n_views(self):
        return len(self.views)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return AlignedViews([v.subset(rows) for v in self.views], self.r_bar[rows])


@dataclass
class PairDataset:
    """Pairwise-transformed data shared by all views.

    ``X[v]`` holds ``x_q - x_i`` for view ``v``; ``y[v]`` its labels from
    that view's ranks; ``y_bar`` the labels from the averaged ranks.
    ``pairs`` keeps the (query, item) sample indices of every row.
    """

    X: list
    y: list
    y_bar: np.ndarray
    query_of_pair: np.ndarray
    pairs: np.ndarray = field(default=None)

    @property
    def n_pairs(self):
        return self.y_bar.size

    @property
    def n_views(self):
        return len(self.X)

    @property
    def dims(self):
        return [X.shape[1] for X in self.X]

    def take(self, rows):
        rows = np.asarray(rows, dtype=int)
        return PairDataset(
            [X[rows] for X in self.X],
            [y[rows] for y in self.y],
            self.y_bar[rows],
            self.query_of_pair[rows],
            None if self.pairs is None else self.pairs[rows],
        )


def average_ranks(rank_lists):
    return np.mean(np.vstack(rank_lists), axis=0)


def align_views(views):
    """Keep the keys present in every view, in the first view's order."""
    if len(views) < 2:
        raise InputError(f"need at least 2 views, got {len(views)}")
    for v in views:
        if v.n == 0:
            raise InputError(f"view {v.view_id} is empty")
    common = set(views[0].keys)
    for v in views[1:]:
        common &= set(v.keys)
    if not common:
        raise DataError("views share no sample keys")
    keys = [k for k in views[0].keys if k in common]
    aligned = []
    for v in views:
        pos = {k: i for i, k in enumerate(v.keys)}
        aligned.append(v.subset([pos[k] for k in keys]))
    dropped = sum(v.n for v in views) - len(keys) * len(views)
    if dropped:
        logger.info("alignment kept %d common samples (%d rows dropped)", len(keys), dropped)
    return AlignedViews(aligned, average_ranks([v.r for v in aligned]))


def relevance_from_ranks(r, q, i):
    """1 when sample ``i`` is ranked at least as well as query ``q``."""
    if q == i:
        raise InputError("query and sample index coincide")
    return int(r[i] <= r[q])


def pairwise_transform(aligned, queries=None, max_pairs_per_query=None, rng=None):
    """Emit ``(x_q - x_i, [r_i <= r_q])`` for every query ``q`` and other sample ``i``.

    ``queries`` defaults to every sample. With ``max_pairs_per_query`` set,
    each query is paired with a random subset of that size drawn from ``rng``.
    """
    n = aligned.n
    if queries is None:
        queries = range(n)
    queries = np.asarray(list(queries), dtype=int)
    if queries.size == 0:
        raise InputError("no queries given")
    if np.any(queries < 0) or np.any(queries >= n):
        raise InputError("query index out of range")
    if n < 2:
        raise InputError("need at least one non-query sample per query")
    if max_pairs_per_query is not None and rng is None:
        raise InputError("sampled queries need an rng")

    q_idx, i_idx = [], []
    for q in queries:
        others = np.delete(np.arange(n), q)
        if max_pairs_per_query is not None and others.size > max_pairs_per_query:
            others = np.sort(rng.choice(others, size=max_pairs_per_query, replace=False))
        q_idx.append(np.full(others.size, q))
        i_idx.append(others)
    q_idx = np.concatenate(q_idx)
    i_idx = np.concatenate(i_idx)

    X = [v.X[q_idx] - v.X[i_idx] for v in aligned.views]
    y = [(v.r[i_idx] <= v.r[q_idx]).astype(np.int64) for v in aligned.views]
    y_bar = (aligned.r_bar[i_idx] <= aligned.r_bar[q_idx]).astype(np.int64)
    return PairDataset(X, y, y_bar, q_idx.copy(), np.column_stack([q_idx, i_idx]))


def balance_classes(pairs, seed):
    """Negate a random subset of majority-class pairs so the joint classes even out.

    Flipped pairs get negated features in every view, flipped per-view and
    joint labels, and swapped (query, item) indices, so the former item
    becomes the pair's query.
    """
    y_bar = pairs.y_bar
    n1 = int(y_bar.sum())
    n0 = y_bar.size - n1
    n_flip = abs(n0 - n1) // 2
    if n_flip == 0:
        return pairs
    majority = 0 if n0 > n1 else 1
    rng = np.random.default_rng(seed)
    flip = rng.choice(np.flatnonzero(y_bar == majority), size=n_flip, replace=False)

    out = replace(
        pairs,
        X=[X.copy() for X in pairs.X],
        y=[y.copy() for y in pairs.y],
        y_bar=y_bar.copy(),
        query_of_pair=pairs.query_of_pair.copy(),
        pairs=None if pairs.pairs is None else pairs.pairs.copy(),
    )
    for X, y in zip(out.X, out.y):
        X[flip] *= -1.0
        y[flip] = 1 - y[flip]
    out.y_bar[flip] = 1 - out.y_bar[flip]
    if out.pairs is not None:
        out.pairs[flip] = out.pairs[flip][:, ::-1]
        out.query_of_pair[flip] = out.pairs[flip, 0]
    return out
