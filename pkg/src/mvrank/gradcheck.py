"""Central finite-difference checks for every analytic gradient.

Each suite draws seeded random instances and compares the analytic
gradient against central differences. Shared by the test suite and the
``gradcheck`` CLI command.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import graphs
from .models import (
    DMVDR,
    MVCCAE,
    MVMDAE,
    RankModel,
    autoencoder_loss_and_grads,
    dmvdr_batch_objective,
    mvsl2r_batch_objective,
)
from .netcore import IDENTITY, SIGMOID, init_mlp, mlp_backward, mlp_forward
from .subspace import solve_projection, trace_ratio_grad_z, trace_ratio_objective

TOL = 1e-4
TOL_COMPOSED = 1e-3


@dataclass
class CheckResult:
    suite: str
    instance: int
    rel_error: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.rel_error) and self.rel_error <= self.tol)


def rel_error(analytic, numeric, floor=1e-8):
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def numeric_grad(f, arrays, h):
    """Central differences of scalar ``f()`` w.r.t. each array, perturbed in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            up = f()
            arr[i] = old - h
            down = f()
            arr[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def _flat(grads):
    return [g for pair in grads for g in pair]


def _random_net(rng, sizes, name="F", view=None, prob_output=False):
    acts = [SIGMOID if rng.random() < 0.7 else IDENTITY for _ in sizes[1:]]
    if prob_output:
        acts[-1] = SIGMOID
    net = init_mlp(sizes, rng, acts, name=name, view=view)
    for layer in net.layers:
        layer.bias += 0.1 * rng.standard_normal(layer.bias.shape)
    return net


# --- suites ------------------------------------------------------------------

def mlp_suite(n=20, seed=0, h=1e-5):
    """Backprop through random MLPs: parameter and input gradients."""
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n):
        depth = int(rng.integers(1, 4))
        sizes = [int(s) for s in rng.integers(1, 6, size=depth + 1)]
        net = _random_net(rng, sizes)
        X = rng.standard_normal((int(rng.integers(1, 6)), sizes[0]))
        R = rng.standard_normal((X.shape[0], sizes[-1]))

        def loss():
            return float(np.sum(R * mlp_forward(net, X)[0]))

        _, cache = mlp_forward(net, X)
        grads, gx = mlp_backward(net, cache, R)
        num = numeric_grad(loss, net.params() + [X], h)
        results.append(CheckResult("mlp", t, rel_error(_flat(grads) + [gx], num), TOL))
    return results


def _trace_ratio_instance(rng, style):
    V = int(rng.integers(2, 4))
    N = int(rng.integers(6, 11))
    dims = [int(d) for d in rng.integers(2, 5, size=V)]
    Z = [rng.standard_normal((d, N)) for d in dims]
    if style == MVCCAE:
        L_num = L_den = graphs.centering_laplacian(N)
        include_self = False
    else:
        y = np.concatenate([[0, 1], rng.integers(0, 3, size=N - 2)])
        part = graphs.ClassPartition.from_labels(y)
        L_num = graphs.between_class_laplacian(part)
        L_den = graphs.within_class_laplacian(part)
        include_self = True
    k = int(rng.integers(1, min(dims) + 1))
    # projections from a different draw so Z is not at a stationary point
    Z0 = [rng.standard_normal(z.shape) for z in Z]
    P = solve_projection(Z0, L_num, L_den, k, include_self=include_self)
    return Z, P, L_num, L_den, include_self


def trace_ratio_suite(style, n=20, seed=0, h=1e-6):
    """Gradient of the trace ratio w.r.t. every view representation."""
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n):
        Z, P, L_num, L_den, include_self = _trace_ratio_instance(rng, style)
        grads, _ = trace_ratio_grad_z(Z, P, L_num, L_den, include_self)

        def ratio():
            return trace_ratio_objective(Z, P, L_num, L_den, include_self).ratio

        num = numeric_grad(ratio, Z, h)
        results.append(CheckResult(f"trace_ratio_{style}", t, rel_error(grads, num), TOL))
    return results


def autoencoder_suite(n=20, seed=0, h=1e-6):
    """Reconstruction-plus-decay loss w.r.t. encoder and decoder parameters."""
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n):
        d = int(rng.integers(2, 6))
        z = int(rng.integers(1, 4))
        F = _random_net(rng, [d, int(rng.integers(2, 6)), z])
        G = _random_net(rng, [z, int(rng.integers(2, 6)), d], name="G")
        X = rng.standard_normal((int(rng.integers(2, 8)), d))
        rho = float(rng.uniform(0, 1e-2))

        def loss():
            return autoencoder_loss_and_grads(X, F, G, rho)[0]

        _, gF, gG, _ = autoencoder_loss_and_grads(X, F, G, rho)
        num = numeric_grad(loss, F.params() + G.params(), h)
        results.append(CheckResult("autoencoder", t, rel_error(_flat(gF) + _flat(gG), num), TOL))
    return results


def _random_model(rng, kind):
    V = int(rng.integers(2, 4))
    dims = [int(d) for d in rng.integers(2, 5, size=V)]
    z = int(rng.integers(2, 4))
    M = int(rng.integers(8, 14))
    Xs = [rng.standard_normal((M, d)) for d in dims]
    F = [_random_net(rng, [d, 4, z], view=v) for v, d in enumerate(dims)]
    y_bar = np.concatenate([[0, 1], rng.integers(0, 2, size=M - 2)])
    ys = [np.where(rng.random(M) < 0.8, y_bar, 1 - y_bar) for _ in range(V)]
    H = None
    if kind == DMVDR:
        k = 1
        G = [_random_net(rng, [z, 3, 1], name="G", view=v, prob_output=True) for v in range(V)]
        H = _random_net(rng, [k * V, 3, 1], name="H", prob_output=True)
    else:
        k = int(rng.integers(1, z + 1))
        G = [_random_net(rng, [z, 3, d], name="G", view=v) for v, d in enumerate(dims)]
    if kind == MVCCAE:
        L_num = L_den = graphs.centering_laplacian(M)
        include_self = False
    else:
        part = graphs.ClassPartition.from_labels(y_bar)
        L_num, L_den = graphs.between_class_laplacian(part), graphs.within_class_laplacian(part)
        include_self = True
    Z0 = [rng.standard_normal((z, M)) for _ in range(V)]
    P = solve_projection(Z0, L_num, L_den, k, include_self=include_self)
    model = RankModel(kind, F, G, P, H=H)
    return model, Xs, ys, y_bar


def composed_suite(kind, n=20, seed=0, h=1e-6):
    """Full batch objective of a model w.r.t. its trained parameters.

    For DMvDR this is the encoder objective (ratio, per-view and fused rank
    losses, weight decay) w.r.t. every encoder; for the autoencoder models the
    batch loss w.r.t. encoders and decoders.
    """
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n):
        model, Xs, ys, y_bar = _random_model(rng, kind)
        alpha, beta, rho = (float(x) for x in rng.uniform(0.05, 1.0, size=3) * [1, 1, 1e-2])
        if kind == DMVDR:
            out = dmvdr_batch_objective(model, Xs, ys, y_bar, alpha, beta, rho)
            analytic = [g for gF in out["grads_F"] for g in _flat(gF)]
            params = [p for F in model.F for p in F.params()]

            def loss():
                return dmvdr_batch_objective(model, Xs, ys, y_bar, alpha, beta, rho)["loss_F"]
        else:
            _, gF, gG, _ = mvsl2r_batch_objective(model, Xs, y_bar, alpha, rho)
            analytic = [g for grads in gF + gG for g in _flat(grads)]
            params = [p for net in model.F + model.G for p in net.params()]

            def loss():
                return mvsl2r_batch_objective(model, Xs, y_bar, alpha, rho)[0]

        num = numeric_grad(loss, params, h)
        results.append(CheckResult(f"composed_{kind}", t, rel_error(analytic, num), TOL_COMPOSED))
    return results


def dmvdr_head_suite(n=20, seed=0, h=1e-6):
    """Per-view and fused head gradients of a DMvDR batch."""
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n):
        model, Xs, ys, y_bar = _random_model(rng, DMVDR)
        out = dmvdr_batch_objective(model, Xs, ys, y_bar, 0.5, 1.0, 0.0)
        analytic = [g for gG in out["grads_G"] for g in _flat(gG)] + _flat(out["grads_H"])
        params = [p for G in model.G for p in G.params()] + model.H.params()

        def loss():
            o = dmvdr_batch_objective(model, Xs, ys, y_bar, 0.5, 1.0, 0.0)
            return sum(o["view_losses"]) + o["fused_loss"]

        num = numeric_grad(loss, params, h)
        results.append(CheckResult("dmvdr_heads", t, rel_error(analytic, num), TOL))
    return results


def run_all(n=20, seed=0):
    """Every suite; returns a flat list of :class:`CheckResult`."""
    results = mlp_suite(n, seed)
    results += trace_ratio_suite(MVCCAE, n, seed)
    results += trace_ratio_suite(MVMDAE, n, seed)
    results += autoencoder_suite(n, seed)
    for kind in (MVCCAE, MVMDAE, DMVDR):
        results += composed_suite(kind, n, seed)
    results += dmvdr_head_suite(n, seed)
    return results


def summarize(results):
    """``{suite: (n_passed, n_total, worst_rel_error)}``."""
    out = {}
    for r in results:
        passed, total, worst = out.get(r.suite, (0, 0, 0.0))
        out[r.suite] = (passed + r.passed, total + 1, max(worst, r.rel_error))
    return out
