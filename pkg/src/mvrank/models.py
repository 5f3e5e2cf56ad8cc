"""Multi-view rankers: MvCCAE, MvMDAE and DMvDR.

All three share one pattern per epoch: re-solve the subspace projections
in closed form on a fixed reference batch, then run mini-batch SGD on the
networks with the projections held fixed. Objectives that are maximized
(the trace ratio) enter the minimized batch loss with a negative sign.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import graphs
from .errors import DegenerateError, InputError, ShapeError, TrainingError
from .netcore import (
    IDENTITY,
    SIGMOID,
    add_grads,
    apply_update,
    init_mlp,
    l2_penalty,
    l2_penalty_grads,
    mlp_backward,
    mlp_forward,
    normalize_unit_columns,
    sigmoid,
)
from .subspace import solve_projection, trace_ratio_grad_z, trace_ratio_objective

logger = logging.getLogger(__name__)

MVCCAE = "mvccae"
MVMDAE = "mvmdae"
DMVDR = "dmvdr"
METHODS = (MVCCAE, MVMDAE, DMVDR)

FUSED = "Fused"
SINGLE_VIEW = "SingleView"
PARTIAL = "Partial"

PROB_CLAMP = 1e-12


@dataclass
class Topology:
    """Layer widths. ``encoder`` lists the F_v widths after the input; its
    last entry is the representation size fed to the embedding layer."""

    encoder: tuple = (32, 10)
    decoder_hidden: tuple = (32,)
    head_hidden: tuple = (32,)
    fused_hidden: tuple = (32,)

    @property
    def z_dim(self):
        return self.encoder[-1]


# Widths reported for the university, multi-lingual and image experiments.
PRESETS = {
    "university-ae": Topology(encoder=(16, 32, 10), decoder_hidden=(64,)),
    "university-dmvdr": Topology(encoder=(50, 10), head_hidden=(100,), fused_hidden=(100,)),
    "reuters-ae": Topology(encoder=(100, 10, 10), decoder_hidden=(32,)),
    "reuters-dmvdr": Topology(encoder=(50, 10), head_hidden=(64,), fused_hidden=(64,)),
    "awa-ae": Topology(encoder=(64, 10), decoder_hidden=(50,)),
    "awa-dmvdr": Topology(encoder=(100, 100, 10), head_hidden=(100,), fused_hidden=(100,)),
    "synthetic": Topology(),
}


@dataclass
class TrainConfig:
    alpha: float = 0.1
    beta: float = 1.0
    rho: float = 1e-4
    eta: float = 0.5
    epochs: int = 10
    batch: int = 200
    k: int = None  # None: 1 for the discriminant models, 5 for MvCCAE
    seed: int = 0
    ref_size: int = 1000
    scorer_eta: float = 1.0
    scorer_epochs: int = 500

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.rho < 0:
            raise InputError("alpha, beta and rho must be non-negative")
        if self.eta <= 0:
            raise InputError("learning rate must be positive")
        if self.batch < 2:
            raise InputError("batch must be >= 2")
        if self.k is not None and self.k < 1:
            raise InputError("subspace dim k must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")


@dataclass
class ScoringFunction:
    a: np.ndarray
    bias: float = 0.0

    def score(self, E):
        return E @ self.a + self.bias


@dataclass
class RankModel:
    kind: str
    F: list
    G: list
    projection: object
    H: object = None
    scorer: ScoringFunction = None
    topology: Topology = field(default_factory=Topology)
    config: TrainConfig = field(default_factory=TrainConfig)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in METHODS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if len(self.F) != len(self.G):
            raise InputError("one F and one G network per view required")
        if (self.H is not None) != (self.kind == DMVDR):
            raise InputError("fused network H is present exactly for DMvDR")

    @property
    def n_views(self):
        return len(self.F)

    @property
    def dims(self):
        return [f.in_dim for f in self.F]

    def networks(self):
        nets = list(self.F) + list(self.G)
        if self.H is not None:
            nets.append(self.H)
        return nets


# --- losses ----------------------------------------------------------------

def rank_probability(score):
    """Logistic ranking probability, clamped away from 0 and 1."""
    score = np.asarray(score, dtype=np.float64)
    p = sigmoid(np.atleast_1d(score))
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return p if score.ndim else float(p[0])


def rank_loss_and_grad(p, y):
    """Mean binary cross-entropy and its derivative with respect to ``p``."""
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if p.size != y.size:
        raise ShapeError(f"length mismatch: {p.size} vs {y.size}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.size
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / n
    dldp = (p - y) / ((1.0 - p) * p) / n
    return float(loss), dldp


def autoencoder_loss_and_grads(X, F, G, rho, Z=None, cache_F=None):
    """Reconstruction loss ``||X - G(F(X))||_F / sqrt(N) + rho * ||theta_F||^2``.

    Returns ``(loss, grads_F, grads_G, dZ)`` where ``dZ`` is the gradient of
    the reconstruction term with respect to ``Z = F(X)``; ``grads_F`` already
    contains the backpropagated ``dZ`` plus the penalty gradient.
    """
    X = np.asarray(X, dtype=np.float64)
    if G.out_dim != X.shape[1]:
        raise ShapeError(f"decoder output dim {G.out_dim} != feature dim {X.shape[1]}")
    if Z is None:
        Z, cache_F = mlp_forward(F, X)
    X_hat, cache_G = mlp_forward(G, Z)
    resid = X_hat - X
    norm = np.linalg.norm(resid)
    scale = np.sqrt(X.shape[0])
    loss = norm / scale + rho * l2_penalty(F)
    d_hat = resid / (norm * scale) if norm > 0 else np.zeros_like(resid)
    grads_G, dZ = mlp_backward(G, cache_G, d_hat)
    grads_F, _ = mlp_backward(F, cache_F, dZ)
    if rho:
        grads_F = add_grads(grads_F, l2_penalty_grads(F), rho)
    return float(loss), grads_F, grads_G, dZ


# --- scoring function ------------------------------------------------------

def fit_scoring(E, y, eta=1.0, epochs=500, fit_bias=False):
    """Logistic regression by full-batch gradient descent from zero init.

    Descent runs on columns scaled to unit standard deviation (and centered
    when a bias is fitted), so a fixed step size copes with embeddings whose
    columns differ in spread by orders of magnitude. The returned weights
    act on the raw ``E``.
    """
    E = np.asarray(E, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if E.ndim != 2 or E.shape[0] != y.size:
        raise ShapeError(f"{E.shape[0]} rows for {y.size} labels")
    sd = E.std(axis=0)
    sd[sd == 0] = 1.0
    mu = E.mean(axis=0) if fit_bias else np.zeros(E.shape[1])
    Es = (E - mu) / sd
    a = np.zeros(E.shape[1])
    b = 0.0
    n = y.size
    for _ in range(epochs):
        p = sigmoid(Es @ a + b)
        r = (p - y) / n
        a -= eta * (Es.T @ r)
        if fit_bias:
            b -= eta * float(r.sum())
    a = a / sd
    return ScoringFunction(a, float(b - mu @ a))


def scorer_loss(scorer, E, y):
    return rank_loss_and_grad(rank_probability(scorer.score(E)), y)[0]


# --- shared helpers ---------------------------------------------------------

def _laplacians(kind, y):
    """Numerator/denominator Laplacians for a batch; ``None`` if degenerate."""
    n = len(y)
    if kind == MVCCAE:
        L = graphs.centering_laplacian(n)
        return L, L, False
    if np.unique(y).size < 2:
        return None
    part = graphs.ClassPartition.from_labels(y)
    return graphs.between_class_laplacian(part), graphs.within_class_laplacian(part), True


def _forward_all(nets, Xs):
    outs, caches = [], []
    for net, X in zip(nets, Xs):
        out, cache = mlp_forward(net, X)
        outs.append(out)
        caches.append(cache)
    return outs, caches


def _solve_w(model, Xs, y, k):
    lap = _laplacians(model.kind if model.kind != DMVDR else MVMDAE, y)
    if lap is None:
        raise TrainingError("reference batch holds a single class")
    L_num, L_den, include_self = lap
    Zs, _ = _forward_all(model.F, Xs)
    return solve_projection([Z.T for Z in Zs], L_num, L_den, k, include_self=include_self,
                            previous=model.projection)


def _reference_ratio(model, Xs, y):
    lap = _laplacians(model.kind if model.kind != DMVDR else MVMDAE, y)
    L_num, L_den, include_self = lap
    Zs, _ = _forward_all(model.F, Xs)
    return trace_ratio_objective([Z.T for Z in Zs], model.projection, L_num, L_den, include_self).ratio


def embed(model, Xs):
    """Projected per-view embeddings ``F_v(X_v) W_v`` (rows = pairs)."""
    out = []
    for v, X in enumerate(Xs):
        if X is None:
            out.append(None)
            continue
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != model.F[v].in_dim:
            raise ShapeError(f"view {v}: expected {model.F[v].in_dim} features, got shape {X.shape}")
        Z, _ = mlp_forward(model.F[v], X)
        out.append(Z @ model.projection.W[v])
    return out


# --- batch objectives ------------------------------------------------------

def mvsl2r_batch_objective(model, Xs, y_bar, alpha, rho):
    """Minimized batch loss ``-ratio + alpha * sum_v l_AE`` and its gradients.

    Returns ``(loss, grads_F, grads_G, info)`` or ``None`` for a degenerate
    batch.
    """
    lap = _laplacians(model.kind, y_bar)
    if lap is None:
        return None
    L_num, L_den, include_self = lap
    Zs, caches = _forward_all(model.F, Xs)
    try:
        gz, state = trace_ratio_grad_z([Z.T for Z in Zs], model.projection, L_num, L_den, include_self)
    except DegenerateError:
        return None
    loss = -state.ratio
    ae_total = 0.0
    grads_F, grads_G = [], []
    for v, (F, G) in enumerate(zip(model.F, model.G)):
        ae, gF_ae, gG, _ = autoencoder_loss_and_grads(Xs[v], F, G, rho, Zs[v], caches[v])
        ae_total += ae
        gF, _ = mlp_backward(F, caches[v], -gz[v].T)
        grads_F.append(add_grads(gF, gF_ae, alpha))
        grads_G.append([(alpha * dW, alpha * db) for dW, db in gG])
    loss += alpha * ae_total
    return loss, grads_F, grads_G, {"ratio": state.ratio, "ae": ae_total}


def dmvdr_batch_objective(model, Xs, ys, y_bar, alpha, beta, rho):
    """Losses and gradients for one DMvDR batch.

    F_v minimizes ``-ratio + alpha * l_rank(G_v(Z_v), y_v) + beta * l_rank(H(S), y_bar)
    + rho * ||theta_F||^2``; G_v minimizes its own ranking loss against ``y_v``
    and H the fused loss against ``y_bar``. Returns a dict, or ``None`` for a
    degenerate batch.
    """
    lap = _laplacians(MVMDAE, y_bar)
    if lap is None:
        return None
    L_num, L_den, include_self = lap
    V = model.n_views
    Zs, caches = _forward_all(model.F, Xs)
    try:
        gz, state = trace_ratio_grad_z([Z.T for Z in Zs], model.projection, L_num, L_den, include_self)
    except DegenerateError:
        return None

    view_losses, grads_G, dZ_head = [], [], []
    for v in range(V):
        p, cache = mlp_forward(model.G[v], Zs[v])
        lv, dp = rank_loss_and_grad(p[:, 0], ys[v])
        gG, dZ = mlp_backward(model.G[v], cache, dp[:, None])
        view_losses.append(lv)
        grads_G.append(gG)
        dZ_head.append(dZ)

    W = model.projection.W
    S = np.hstack([Zs[v] @ W[v] for v in range(V)])
    p_bar, cache_H = mlp_forward(model.H, S)
    fused_loss, dp_bar = rank_loss_and_grad(p_bar[:, 0], y_bar)
    grads_H, dS = mlp_backward(model.H, cache_H, dp_bar[:, None])
    k = model.projection.k

    grads_F = []
    penalty = 0.0
    for v in range(V):
        dZ = -gz[v].T + alpha * dZ_head[v] + beta * (dS[:, v * k:(v + 1) * k] @ W[v].T)
        gF, _ = mlp_backward(model.F[v], caches[v], dZ)
        if rho:
            gF = add_grads(gF, l2_penalty_grads(model.F[v]), rho)
            penalty += rho * l2_penalty(model.F[v])
        grads_F.append(gF)

    loss_F = -state.ratio + alpha * sum(view_losses) + beta * fused_loss + penalty
    return {
        "loss_F": loss_F,
        "view_losses": view_losses,
        "fused_loss": fused_loss,
        "ratio": state.ratio,
        "grads_F": grads_F,
        "grads_G": grads_G,
        "grads_H": grads_H,
    }


# --- training ---------------------------------------------------------------

def _check_data(data, need_view_labels=False):
    if data.n_views < 2:
        raise InputError(f"need at least 2 views, got {data.n_views}")
    for v, X in enumerate(data.X):
        if X.shape[0] != data.n_pairs:
            raise ShapeError(f"view {v} has {X.shape[0]} pairs, expected {data.n_pairs}")
    if need_view_labels and len(data.y) != data.n_views:
        raise InputError("per-view labels are required")


def subspace_dim(kind, cfg):
    """Embedding size ``k``. Two-class pair labels give a rank-one
    between-class scatter, so the discriminant models default to 1."""
    if cfg.k is not None:
        return int(cfg.k)
    return 5 if kind == MVCCAE else 1


def _build(kind, dims, topology, cfg, rng):
    z = topology.z_dim
    # sigmoid hidden units; the embedding-facing output and the decoder's
    # reconstruction are linear
    enc_acts = [SIGMOID] * (len(topology.encoder) - 1) + [IDENTITY]
    F = [init_mlp([d, *topology.encoder], rng, enc_acts, name="F", view=v) for v, d in enumerate(dims)]
    H = None
    if kind == DMVDR:
        G = [init_mlp([z, *topology.head_hidden, 1], rng, name="G", view=v) for v in range(len(dims))]
        H = init_mlp([subspace_dim(kind, cfg) * len(dims), *topology.fused_hidden, 1], rng, name="H")
    else:
        dec_acts = [SIGMOID] * len(topology.decoder_hidden) + [IDENTITY]
        G = [init_mlp([z, *topology.decoder_hidden, d], rng, dec_acts, name="G", view=v) for v, d in enumerate(dims)]
    if subspace_dim(kind, cfg) > z * len(dims):
        raise InputError(f"k={subspace_dim(kind, cfg)} exceeds the stacked representation size {z * len(dims)}")
    return F, G, H


def _train(kind, data, topology, cfg):
    _check_data(data, need_view_labels=kind == DMVDR)
    topology = topology or Topology()
    init_ss, order_ss, ref_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    F, G, H = _build(kind, data.dims, topology, cfg, np.random.default_rng(init_ss))
    model = RankModel(kind, F, G, None, H=H, topology=topology, config=cfg)
    if kind == DMVDR:
        for net in model.networks():
            normalize_unit_columns(net)

    k = subspace_dim(kind, cfg)
    M = data.n_pairs
    ref_rng = np.random.default_rng(ref_ss)
    ref = np.sort(ref_rng.choice(M, size=min(cfg.ref_size, M), replace=False))
    X_ref = [X[ref] for X in data.X]
    y_ref = data.y_bar[ref]
    order_rng = np.random.default_rng(order_ss)

    history = []
    skipped_total = used_total = 0
    for epoch in range(cfg.epochs):
        model.projection = _solve_w(model, X_ref, y_ref, k)
        ref_ratio = _reference_ratio(model, X_ref, y_ref)
        perm = order_rng.permutation(M)
        sums = {}
        used = skipped = 0
        for start in range(0, M, cfg.batch):
            idx = np.sort(perm[start:start + cfg.batch])
            if idx.size < 2:
                continue
            Xb = [X[idx] for X in data.X]
            if kind == DMVDR:
                out = dmvdr_batch_objective(
                    model, Xb, [y[idx] for y in data.y], data.y_bar[idx], cfg.alpha, cfg.beta, cfg.rho
                )
                if out is None:
                    skipped += 1
                    continue
                for v in range(model.n_views):
                    apply_update(model.F[v], out["grads_F"][v], cfg.eta)
                    apply_update(model.G[v], out["grads_G"][v], cfg.eta)
                apply_update(model.H, out["grads_H"], cfg.eta)
                for net in model.networks():
                    normalize_unit_columns(net)
                stats = {
                    "loss": out["loss_F"],
                    "ratio": out["ratio"],
                    "view_rank_loss": float(np.mean(out["view_losses"])),
                    "fused_rank_loss": out["fused_loss"],
                }
            else:
                out = mvsl2r_batch_objective(model, Xb, data.y_bar[idx], cfg.alpha, cfg.rho)
                if out is None:
                    skipped += 1
                    continue
                loss, grads_F, grads_G, info = out
                for v in range(model.n_views):
                    apply_update(model.F[v], grads_F[v], cfg.eta)
                    apply_update(model.G[v], grads_G[v], cfg.eta)
                stats = {"loss": loss, "ratio": info["ratio"], "ae_loss": info["ae"]}
            used += 1
            for key, val in stats.items():
                sums[key] = sums.get(key, 0.0) + val
        if skipped:
            logger.warning("epoch %d: skipped %d degenerate batches", epoch, skipped)
        skipped_total += skipped
        used_total += used
        row = {"epoch": epoch, "ref_objective": ref_ratio}
        row.update({key: val / max(used, 1) for key, val in sums.items()})
        row["skipped_batches"] = skipped
        if not all(np.isfinite(val) for val in row.values()):
            raise TrainingError(f"non-finite training statistics at epoch {epoch}: {row}")
        history.append(row)
        logger.info("%s epoch %d: %s", kind, epoch, row)
    if cfg.epochs and used_total == 0:
        raise TrainingError("every batch was degenerate")

    model.history = history
    if kind != DMVDR or model.projection is None:
        # H was trained against the last epoch's W, so DMvDR keeps it; the
        # other models fit their scorer afterwards and can take a fresh solve.
        model.projection = _solve_w(model, X_ref, y_ref, k)
    if kind != DMVDR:
        E = np.hstack(embed(model, data.X))
        model.scorer = fit_scoring(E, data.y_bar, cfg.scorer_eta, cfg.scorer_epochs, fit_bias=True)
    return model


def train_mvccae(data, topology=None, cfg=None):
    return _train(MVCCAE, data, topology, cfg or TrainConfig())


def train_mvmdae(data, topology=None, cfg=None):
    return _train(MVMDAE, data, topology, cfg or TrainConfig())


def train_dmvdr(data, topology=None, cfg=None):
    return _train(DMVDR, data, topology, cfg or TrainConfig())


TRAINERS = {MVCCAE: train_mvccae, MVMDAE: train_mvmdae, DMVDR: train_dmvdr}


def train(kind, data, topology=None, cfg=None):
    if kind not in TRAINERS:
        raise InputError(f"unknown method {kind!r}; choose from {METHODS}")
    return TRAINERS[kind](data, topology, cfg)


# --- prediction -------------------------------------------------------------

def predict(model, Xs):
    """Joint relevance probabilities for pairs given per-view features.

    ``Xs`` holds one matrix per view, ``None`` for a missing view. With every
    view present the projections are fused as in training. When views are
    missing, MvCCAE/MvMDAE score the present views with their slices of the
    scorer, while DMvDR fills each missing fused slot with the mean of the
    present projections (one present view is replicated into every slot).
    """
    if len(Xs) != model.n_views:
        raise InputError(f"expected {model.n_views} view slots, got {len(Xs)}")
    present = [v for v, X in enumerate(Xs) if X is not None]
    if not present:
        raise InputError("at least one view must be present")
    E = embed(model, Xs)
    rows = {E[v].shape[0] for v in present}
    if len(rows) != 1:
        raise ShapeError(f"present views disagree on pair count: {sorted(rows)}")
    if len(present) == model.n_views:
        scenario = FUSED
    else:
        scenario = SINGLE_VIEW if len(present) == 1 else PARTIAL
    if model.kind == DMVDR:
        fill = sum(E[v] for v in present) / len(present)
        S = np.hstack([fill if e is None else e for e in E])
        out, _ = mlp_forward(model.H, S)
        return np.clip(out[:, 0], PROB_CLAMP, 1.0 - PROB_CLAMP), scenario
    k = model.projection.k
    a = model.scorer.a
    score = model.scorer.bias + sum(E[v] @ a[v * k:(v + 1) * k] for v in present)
    return rank_probability(score), scenario


def config_dict(cfg):
    return asdict(cfg)
