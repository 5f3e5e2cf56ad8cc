"""Dense primitives: explicit-backprop MLPs and symmetric eigensolvers.

Matrices are plain 2-D float64 ``numpy`` arrays. Networks take a batch as
rows (``batch x features``) and store each layer's weight as ``out x in``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NumericalError, ShapeError, StateError

SIGMOID = "sigmoid"
IDENTITY = "identity"
ACTIVATIONS = (SIGMOID, IDENTITY)


def as_matrix(X, name="matrix"):
    """Return ``X`` as a finite 2-D float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains NaN or Inf")
    return X


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = SIGMOID

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class MlpNetwork:
    """Stack of affine + activation layers.

    ``name`` is one of ``F`` (view encoder), ``G`` (decoder or per-view
    ranking head) or ``H`` (fused ranking head); ``view`` is the view
    index for F and G networks.
    """

    layers: list
    name: str = "F"
    view: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.layers:
            raise InputError("network needs at least one layer")
        for idx, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise InputError(f"layer {idx}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_dim,):
                raise ShapeError(f"layer {idx}: weight {layer.weight.shape} / bias {layer.bias.shape}")
            if idx and layer.in_dim != self.layers[idx - 1].out_dim:
                raise ShapeError(
                    f"layer {idx}: input dim {layer.in_dim} does not match "
                    f"layer {idx - 1} output dim {self.layers[idx - 1].out_dim}"
                )
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise InputError(f"layer {idx}: non-finite parameters")

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def sizes(self):
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def params(self):
        """Flat list of parameter arrays (views, not copies), W then b per layer."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    """Per-layer inputs, pre-activations and activations of one batch."""

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


def init_mlp(sizes, rng, activations=None, name="F", view=None):
    """Build a network with uniform(+-1/sqrt(fan_in)) weights and zero bias.

    ``sizes`` lists the input dim followed by every layer's output dim.
    ``activations`` defaults to sigmoid everywhere.
    """
    if len(sizes) < 2:
        raise InputError("sizes must hold an input dim and at least one layer")
    if activations is None:
        activations = [SIGMOID] * (len(sizes) - 1)
    if len(activations) != len(sizes) - 1:
        raise InputError("one activation per layer required")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(W, np.zeros(fan_out), act))
    return MlpNetwork(layers, name=name, view=view)


def mlp_forward(net, X):
    """Run ``X`` (batch x in) through ``net``; return output and cache."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError(f"input must be a non-empty 2-D batch, got shape {X.shape}")
    cache = ForwardCache()
    h = X
    for idx, layer in enumerate(net.layers):
        if h.shape[1] != layer.in_dim:
            raise ShapeError(
                f"{net.name} layer {idx}: expected input dim {layer.in_dim}, got {h.shape[1]}"
            )
        a = h @ layer.weight.T + layer.bias
        out = sigmoid(a) if layer.activation == SIGMOID else a
        cache.inputs.append(h)
        cache.pre.append(a)
        cache.post.append(out)
        h = out
    return h, cache


def mlp_backward(net, cache, grad_output):
    """Backpropagate ``grad_output`` (d loss / d output) through ``net``.

    Returns ``(param_grads, grad_input)`` where ``param_grads`` is a list of
    ``(dW, db)`` per layer, batch-summed.
    """
    if len(cache.pre) != len(net.layers):
        raise StateError(
            f"cache holds {len(cache.pre)} layers but {net.name} has {len(net.layers)}"
        )
    for idx, layer in enumerate(net.layers):
        if cache.pre[idx].shape[1] != layer.out_dim:
            raise StateError(f"cache layer {idx} does not belong to this network")
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ShapeError(f"grad_output shape {g.shape} != output shape {cache.post[-1].shape}")

    grads = [None] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if layer.activation == SIGMOID:
            s = cache.post[idx]
            g = g * s * (1.0 - s)
        grads[idx] = (g.T @ cache.inputs[idx], g.sum(axis=0))
        g = g @ layer.weight
    return grads, g


def apply_update(net, grads, lr):
    """In-place gradient descent step."""
    for layer, (dW, db) in zip(net.layers, grads):
        layer.weight -= lr * dW
        layer.bias -= lr * db


def l2_penalty(net):
    """Sum of squares over all parameters (weights and biases)."""
    return float(sum(np.sum(p * p) for p in net.params()))


def l2_penalty_grads(net):
    return [(2.0 * layer.weight, 2.0 * layer.bias) for layer in net.layers]


def add_grads(a, b, scale=1.0):
    """Return ``a + scale * b`` for two per-layer gradient lists."""
    return [(dWa + scale * dWb, dba + scale * dbb) for (dWa, dba), (dWb, dbb) in zip(a, b)]


def zero_grads(net):
    return [(np.zeros_like(layer.weight), np.zeros_like(layer.bias)) for layer in net.layers]


def normalize_unit_columns(net):
    """Rescale every weight column (one input's fan-out) to unit Euclidean norm."""
    for layer in net.layers:
        norms = np.linalg.norm(layer.weight, axis=0, keepdims=True)
        norms[norms == 0.0] = 1.0
        layer.weight /= norms


# --- eigensolvers -----------------------------------------------------------

SYMMETRY_TOL = 1e-9


def _check_symmetric(A, name):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise InputError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def sym_eig(A, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns.
    """
    a = _check_symmetric(A, "A").copy()
    n = a.shape[0]
    V = np.eye(n)
    fro = np.linalg.norm(a)
    if n == 0 or fro == 0.0:
        return np.zeros(n), V

    for sweep in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= 1e-15 * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                app, aqq = a[p, p], a[q, q]
                # entries below diagonal round-off are zeroed outright
                if sweep > 3 and abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    a[p, q] = a[q, p] = 0.0
                    continue
                h = aqq - app
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q]
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :]
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NumericalError("Jacobi iteration did not converge")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


def solve_generalized_eigen(A, B, k, eps=0.0):
    """Top-``k`` solutions of ``A w = lambda (B + eps I) w``.

    The regularized ``B`` is Cholesky-factored as ``L L^T`` and the whitened
    problem ``L^-1 A L^-T`` is handed to :func:`sym_eig`. Returned columns
    are ``(B + eps I)``-orthonormal.
    """
    A = _check_symmetric(A, "A")
    B = _check_symmetric(B, "B")
    n = A.shape[0]
    if B.shape != A.shape:
        raise ShapeError(f"A {A.shape} and B {B.shape} differ in shape")
    if not isinstance(k, (int, np.integer)) or k < 1 or k > n:
        raise InputError(f"k must be an integer in [1, {n}], got {k!r}")
    M = B + eps * np.eye(n)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"B + eps*I is not positive definite (eps={eps:g}); use a larger eps"
        ) from None
    if np.min(np.diag(L)) <= 0.0:
        raise NumericalError(f"B + eps*I is singular (eps={eps:g}); use a larger eps")
    left = solve_triangular(L, A, lower=True)
    C = solve_triangular(L, left.T, lower=True)
    values, U = sym_eig(0.5 * (C + C.T))
    W = solve_triangular(L.T, U[:, :k], lower=False)
    return W, values[:k]
