"""Trace-ratio multi-view embedding: objective, Z-gradients and projection solver.

View representations ``Z[v]`` are ``d_v x N`` (samples as columns) in this
module; callers holding row-major batches pass ``Z.T``.

Two numerator styles are supported. The correlation style sums cross-view
blocks only (``j != i``); the discriminant style (``include_self=True``)
sums every block including ``i == j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError, ShapeError
from .netcore import solve_generalized_eigen

DENOMINATOR_FLOOR = 1e-12


@dataclass
class EmbeddingProjection:
    W: list  # per-view (d_v x k)
    values: np.ndarray
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise InputError("subspace dim k must be >= 1")
        for W in self.W:
            if W.shape[1] != self.k:
                raise ShapeError(f"projection block has {W.shape[1]} columns, expected {self.k}")

    @property
    def dims(self):
        return [W.shape[0] for W in self.W]

    @property
    def stacked(self):
        return np.vstack(self.W)

    def project(self, v, Z):
        """``W_v^T Z`` for a ``d_v x N`` view block."""
        return self.W[v].T @ Z


@dataclass
class TraceRatioState:
    f: float
    g: float
    ratio: float


def _check(Z, P, L_num, L_den):
    if len(Z) != len(P.W):
        raise ShapeError(f"{len(Z)} views but projection has {len(P.W)} blocks")
    N = Z[0].shape[1]
    for v, (Zv, Wv) in enumerate(zip(Z, P.W)):
        if Zv.shape[1] != N:
            raise ShapeError(f"view {v} has {Zv.shape[1]} samples, expected {N}")
        if Zv.shape[0] != Wv.shape[0]:
            raise ShapeError(f"view {v}: Z dim {Zv.shape[0]} != W rows {Wv.shape[0]}")
    for name, L in (("L_num", L_num), ("L_den", L_den)):
        if L.shape != (N, N):
            raise ShapeError(f"{name} must be {N}x{N}, got {L.shape}")
    return N


def _traces(proj, L_num, L_den, include_self):
    total = sum(proj)
    f = np.trace(total @ L_num @ total.T)
    if not include_self:
        f -= sum(np.trace(Pv @ L_num @ Pv.T) for Pv in proj)
    g = sum(np.trace(Pv @ L_den @ Pv.T) for Pv in proj)
    return float(f), float(g)


def trace_ratio_objective(Z, P, L_num, L_den, include_self=False):
    """Evaluate ``f``, ``g`` and ``f / g`` for fixed projections ``P``."""
    _check(Z, P, L_num, L_den)
    proj = [P.project(v, Zv) for v, Zv in enumerate(Z)]
    f, g = _traces(proj, L_num, L_den, include_self)
    if g <= DENOMINATOR_FLOOR:
        raise DegenerateError(f"trace-ratio denominator {g:g} is degenerate")
    return TraceRatioState(f, g, f / g)


def trace_ratio_grad_z(Z, P, L_num, L_den, include_self=False):
    """Gradient of ``f / g`` with respect to every ``Z[v]`` (W held fixed).

    Uses ``d f / d Z_v = W_v sum_j W_j^T Z_j (L + L^T)`` over the numerator's
    blocks touching ``v`` and ``d g / d Z_v = W_v W_v^T Z_v (L_den + L_den^T)``,
    combined by the quotient rule. Returns ``(grads, state)``.
    """
    _check(Z, P, L_num, L_den)
    proj = [P.project(v, Zv) for v, Zv in enumerate(Z)]
    f, g = _traces(proj, L_num, L_den, include_self)
    if g <= DENOMINATOR_FLOOR:
        raise DegenerateError(f"trace-ratio denominator {g:g} is degenerate")
    Ln = L_num + L_num.T
    Ld = L_den + L_den.T
    total = sum(proj)
    grads = []
    for v, Pv in enumerate(proj):
        partners = total if include_self else total - Pv
        df = P.W[v] @ (partners @ Ln)
        dg = P.W[v] @ (Pv @ Ld)
        grads.append((g * df - f * dg) / g**2)
    return grads, TraceRatioState(f, g, f / g)


def scatter_blocks(Z, L_num, L_den, include_self=False):
    """Blocked numerator ``A`` and block-diagonal denominator ``B``."""
    Ln = 0.5 * (L_num + L_num.T)
    Ld = 0.5 * (L_den + L_den.T)
    dims = [Zv.shape[0] for Zv in Z]
    offs = np.concatenate([[0], np.cumsum(dims)])
    n = offs[-1]
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    for i, Zi in enumerate(Z):
        left = Zi @ Ln
        for j, Zj in enumerate(Z):
            if i == j and not include_self:
                continue
            A[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = left @ Zj.T
        B[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = Zi @ Ld @ Zi.T
    return 0.5 * (A + A.T), 0.5 * (B + B.T), offs


def default_eps(B):
    scale = float(np.mean(np.diag(B))) if B.size else 0.0
    return 1e-6 * scale if scale > 0 else 1e-6


def solve_projection(Z, L_num, L_den, k, eps=None, include_self=False, previous=None):
    """Closed-form projections from ``A W = lambda (B + eps I) W``.

    Columns of the stacked solution are rescaled to unit Euclidean norm
    before being split into per-view blocks. ``eps`` defaults to
    ``1e-6 * mean(diag(B))``.

    Eigenvectors are only defined up to sign. With ``previous`` given, each
    column takes the sign that agrees with the matching previous column, so
    layers fed by the embedding see a stable basis across re-solves. Without
    it, each column's largest-magnitude entry is made positive. A full
    rotation toward ``previous`` is avoided on purpose: after the unit-norm
    rescaling it no longer preserves the trace ratio when ``k > 1``.
    """
    N = Z[0].shape[1]
    for v, Zv in enumerate(Z):
        if Zv.shape[1] != N:
            raise ShapeError(f"view {v} has {Zv.shape[1]} samples, expected {N}")
    A, B, offs = scatter_blocks(Z, L_num, L_den, include_self)
    if not isinstance(k, (int, np.integer)) or k < 1 or k > A.shape[0]:
        raise InputError(f"k must be in [1, {A.shape[0]}], got {k!r}")
    if eps is None:
        eps = default_eps(B)
    W, values = solve_generalized_eigen(A, B, int(k), eps)
    W = W / np.linalg.norm(W, axis=0, keepdims=True)
    if previous is not None and previous.stacked.shape == W.shape:
        signs = np.sign(np.sum(W * previous.stacked, axis=0))
    else:
        signs = np.sign(W[np.argmax(np.abs(W), axis=0), np.arange(W.shape[1])])
    W = W * np.where(signs == 0, 1.0, signs)
    blocks = [W[offs[v]:offs[v + 1]].copy() for v in range(len(Z))]
    return EmbeddingProjection(blocks, values, int(k))
