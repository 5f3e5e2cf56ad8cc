"""Ranking and classification metrics: MAP@k, Kendall's tau-b, accuracy, PR/ROC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError

PR11 = "PR11"
ROC = "ROC"


@dataclass
class CurveSeries:
    points: list  # of (x, y)
    kind: str

    @property
    def x(self):
        return np.array([p[0] for p in self.points])

    @property
    def y(self):
        return np.array([p[1] for p in self.points])

    def area(self):
        """Trapezoidal area under the series."""
        x, y = self.x, self.y
        return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) * 0.5))


def _pair_signs(r):
    r = np.asarray(r, dtype=np.float64)
    iu, ju = np.triu_indices(r.size, k=1)
    return np.sign(r[iu] - r[ju]).astype(np.int64)


def kendall_tau(r1, r2):
    """Tie-corrected Kendall tau-b between two score or rank lists.

    Returns 0.0 when either list is constant (tau-b undefined).
    """
    r1 = np.asarray(r1, dtype=np.float64).ravel()
    r2 = np.asarray(r2, dtype=np.float64).ravel()
    if r1.size != r2.size:
        raise ShapeError(f"length mismatch: {r1.size} vs {r2.size}")
    if r1.size < 2:
        raise InputError("kendall_tau needs at least 2 items")
    s1 = _pair_signs(r1)
    s2 = _pair_signs(r2)
    n0 = s1.size
    ties1 = int(np.count_nonzero(s1 == 0))
    ties2 = int(np.count_nonzero(s2 == 0))
    denom = (n0 - ties1) * (n0 - ties2)
    if denom == 0:
        return 0.0
    return int(np.sum(s1 * s2)) / np.sqrt(float(denom))


def average_precision(scores, relevance, k=None):
    """AP over the top ``k`` of one query's list; ``None`` if nothing is relevant."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    rel = np.asarray(relevance).ravel() != 0
    if scores.size != rel.size:
        raise ShapeError("scores and relevance differ in length")
    if not rel.any():
        return None
    order = np.argsort(-scores, kind="stable")
    hits = rel[order][:k]
    if not hits.any():
        return 0.0
    positions = np.flatnonzero(hits) + 1
    precisions = np.arange(1, positions.size + 1) / positions
    return float(np.sum(precisions) / positions.size)


def map_at_k(grouped, k=None, return_excluded=False):
    """Mean AP@k over queries; queries without relevant items are excluded.

    ``grouped`` is an iterable of ``(scores, relevance)`` per query.
    """
    aps = []
    excluded = 0
    for scores, relevance in grouped:
        ap = average_precision(scores, relevance, k)
        if ap is None:
            excluded += 1
        else:
            aps.append(ap)
    value = float(sum(aps) / len(aps)) if aps else 0.0
    return (value, excluded) if return_excluded else value


def group_by_query(query_ids, scores, relevance):
    query_ids = np.asarray(query_ids)
    scores = np.asarray(scores)
    relevance = np.asarray(relevance)
    order = np.argsort(query_ids, kind="stable")
    q_sorted = query_ids[order]
    bounds = np.flatnonzero(np.diff(q_sorted)) + 1
    return [(scores[idx], relevance[idx]) for idx in np.split(order, bounds)]


def accuracy(p, y, threshold=0.5):
    """Fraction of pairs with ``(p >= threshold) == y``; ties count as positive."""
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y).ravel()
    if p.size != y.size:
        raise ShapeError(f"length mismatch: {p.size} vs {y.size}")
    if p.size == 0:
        raise InputError("empty prediction vector")
    return float(np.mean((p >= threshold).astype(np.int64) == y))


def _threshold_counts(p, y):
    """Cumulative (tp, fp) at each distinct score, highest score first."""
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y).ravel() != 0
    if p.size != y.size:
        raise ShapeError(f"length mismatch: {p.size} vs {y.size}")
    order = np.argsort(-p, kind="stable")
    p, y = p[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(p) != 0), p.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return tp, fp, int(y.sum()), int((~y).sum())


def roc_curve(p, y):
    tp, fp, n_pos, n_neg = _threshold_counts(p, y)
    if n_pos == 0 or n_neg == 0:
        raise InputError("ROC needs both classes present")
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return CurveSeries(list(zip(fpr.tolist(), tpr.tolist())), ROC)


def pr11_curve(p, y):
    """11-point interpolated precision at recall 0.0, 0.1, ..., 1.0."""
    tp, fp, n_pos, _ = _threshold_counts(p, y)
    if n_pos == 0:
        raise InputError("precision-recall needs at least one positive")
    recall = tp / n_pos
    precision = tp / (tp + fp)
    points = []
    for level in np.linspace(0.0, 1.0, 11):
        # small slack so 0.3 from linspace still matches a recall of exactly 3/10
        mask = recall >= level - 1e-12
        points.append((float(level), float(precision[mask].max()) if mask.any() else 0.0))
    return CurveSeries(points, PR11)


def curve(p, y, kind):
    if kind == ROC:
        return roc_curve(p, y)
    if kind == PR11:
        return pr11_curve(p, y)
    raise InputError(f"unknown curve kind {kind!r}")


def roc_auc(p, y):
    return roc_curve(p, y).area()


def pair_scores(pairs, p, n):
    """Per-sample scores aggregated from pairwise probabilities.

    ``p[m]`` is the probability that item ``pairs[m, 1]`` ranks at least as
    well as query ``pairs[m, 0]``. A sample's score averages its wins as an
    item and ``1 - p`` as a query; higher is better.
    """
    pairs = np.asarray(pairs, dtype=int)
    p = np.asarray(p, dtype=np.float64).ravel()
    wins = np.bincount(pairs[:, 1], weights=p, minlength=n)
    wins += np.bincount(pairs[:, 0], weights=1.0 - p, minlength=n)
    counts = np.bincount(pairs[:, 1], minlength=n) + np.bincount(pairs[:, 0], minlength=n)
    counts[counts == 0] = 1
    return wins / counts
