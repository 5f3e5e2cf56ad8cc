"""Laplacian and scatter matrices used by the trace-ratio embeddings.

All constructors are dense; ``N`` is a mini-batch size, so matrices stay
small.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError, ShapeError


class LaplacianKind(Enum):
    CENTERING = "centering"
    BETWEEN_CLASS = "between"
    WITHIN_CLASS = "within"


@dataclass(frozen=True)
class ClassPartition:
    labels: np.ndarray
    classes: tuple  # of (class id, count, indicator vector)

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels).ravel()
        if labels.size == 0:
            raise InputError("empty label vector")
        classes = []
        for c in np.unique(labels):
            e = (labels == c).astype(np.float64)
            classes.append((c.item(), int(e.sum()), e))
        return cls(labels, tuple(classes))

    @property
    def n(self):
        return self.labels.size

    @property
    def n_classes(self):
        return len(self.classes)


def _partition(part):
    if not isinstance(part, ClassPartition):
        part = ClassPartition.from_labels(part)
    for c, count, _ in part.classes:
        if count == 0:
            raise InputError(f"class {c} is empty")
    return part


def centering_laplacian(N):
    """``I - (1/N) e e^T``."""
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    return np.eye(N) - np.full((N, N), 1.0 / N)


def between_class_laplacian(part):
    """Between-class Laplacian ``2 sum_p sum_q (e_p e_p^T / N_p^2 - e_p e_q^T / (N_p N_q))``.

    Accepts a :class:`ClassPartition` or a raw label vector.
    """
    part = _partition(part)
    C = part.n_classes
    D = np.zeros((part.n, part.n))
    u = np.zeros(part.n)
    for _, count, e in part.classes:
        D += np.outer(e, e) / count**2
        u += e / count
    # the q-sum of the first term contributes a factor C
    return 2.0 * (C * D - np.outer(u, u))


def within_class_laplacian(part):
    """``I - sum_c e_c e_c^T / N_c``; an orthogonal projection."""
    part = _partition(part)
    L = np.eye(part.n)
    for _, count, e in part.classes:
        L -= np.outer(e, e) / count
    return L


def laplacian(kind, labels=None, N=None):
    kind = LaplacianKind(kind)
    if kind is LaplacianKind.CENTERING:
        return centering_laplacian(N if N is not None else len(labels))
    if labels is None:
        raise InputError(f"{kind.value} Laplacian needs labels")
    if kind is LaplacianKind.BETWEEN_CLASS:
        return between_class_laplacian(labels)
    return within_class_laplacian(labels)


def cross_view_covariance(Z_i, Z_j, N=None):
    """``(1/N) Zc_i Zc_j^T`` for views stored with samples as columns."""
    Z_i = np.asarray(Z_i, dtype=np.float64)
    Z_j = np.asarray(Z_j, dtype=np.float64)
    if Z_i.ndim != 2 or Z_j.ndim != 2 or Z_i.shape[1] != Z_j.shape[1]:
        raise ShapeError(f"column counts differ: {Z_i.shape} vs {Z_j.shape}")
    if N is None:
        N = Z_i.shape[1]
    if N != Z_i.shape[1]:
        raise ShapeError(f"N={N} but inputs have {Z_i.shape[1]} columns")
    Zc_i = Z_i - Z_i.mean(axis=1, keepdims=True)
    Zc_j = Z_j - Z_j.mean(axis=1, keepdims=True)
    return Zc_i @ Zc_j.T / N
