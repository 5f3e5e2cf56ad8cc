import logging

import numpy as np
import pytest

from mvrank import gradcheck, graphs
from mvrank.errors import InputError, ShapeError, TrainingError
from mvrank.models import (
    DMVDR,
    FUSED,
    METHODS,
    MVCCAE,
    MVMDAE,
    PARTIAL,
    PROB_CLAMP,
    SINGLE_VIEW,
    RankModel,
    ScoringFunction,
    Topology,
    TrainConfig,
    autoencoder_loss_and_grads,
    dmvdr_batch_objective,
    embed,
    fit_scoring,
    mvsl2r_batch_objective,
    predict,
    rank_loss_and_grad,
    rank_probability,
    scorer_loss,
    subspace_dim,
    train,
)
from mvrank.netcore import (
    IDENTITY,
    Layer,
    MlpNetwork,
    init_mlp,
    l2_penalty,
    mlp_backward,
    mlp_forward,
)
from mvrank.pairdata import PairDataset
from mvrank.pipeline.benchmark import prepare
from mvrank.pipeline.synth import LINEAR, SynthSpec, synth_generate
from mvrank.subspace import EmbeddingProjection, solve_projection

FAST = dict(epochs=3, batch=100, ref_size=300, scorer_epochs=200)


def params(model):
    return [p for net in model.networks() for p in net.params()]


def identity_net(d, name="F", view=None):
    return MlpNetwork([Layer(np.eye(d), np.zeros(d), IDENTITY)], name=name, view=view)


# --- ranking probability and loss ----------------------------------------------

def test_rank_probability_examples():
    assert rank_probability(0.0) == 0.5
    assert rank_probability(1e6) == 1.0 - PROB_CLAMP
    assert rank_probability(-1e6) == PROB_CLAMP
    assert rank_probability(2.0) == pytest.approx(0.8807970779778823, abs=1e-15)
    assert rank_probability(np.array([0.0, 2.0])).shape == (2,)


def test_rank_loss_examples():
    loss, g = rank_loss_and_grad([0.5], [1])
    assert loss == pytest.approx(np.log(2), abs=1e-15)
    assert g[0] == pytest.approx(-2.0)
    loss, _ = rank_loss_and_grad([1.0, 0.0], [1, 0])
    assert loss == pytest.approx(0.0, abs=1e-10)
    _, g = rank_loss_and_grad([0.7, 0.9], [0, 0])
    assert np.all(g > 0)
    with pytest.raises(ShapeError):
        rank_loss_and_grad([0.5, 0.5], [1])


# --- autoencoder ------------------------------------------------------------------

def test_autoencoder_identity_reconstruction(rng):
    X = rng.standard_normal((6, 3))
    F, G = identity_net(3), identity_net(3, "G")
    loss, _, grads_G, dZ = autoencoder_loss_and_grads(X, F, G, rho=0.01)
    assert loss == pytest.approx(0.01 * l2_penalty(F), abs=1e-15)
    assert not dZ.any()
    assert all(not dW.any() for dW, _ in grads_G)


def test_autoencoder_zero_sigmoid_nets(rng):
    X = rng.standard_normal((8, 3))
    F = init_mlp([3, 2], rng)
    G = init_mlp([2, 3], rng)
    for net in (F, G):
        for layer in net.layers:
            layer.weight[:] = 0.0
    loss, *_ = autoencoder_loss_and_grads(X, F, G, rho=0.0)
    assert loss == pytest.approx(np.linalg.norm(X - 0.5) / np.sqrt(8), abs=1e-14)


def test_autoencoder_shape_error(rng):
    F, G = init_mlp([3, 2], rng), init_mlp([2, 4], rng)
    with pytest.raises(ShapeError):
        autoencoder_loss_and_grads(rng.standard_normal((5, 3)), F, G, 0.0)


def test_autoencoder_gradient_suite():
    results = gradcheck.autoencoder_suite(n=20, seed=2)
    assert all(r.passed for r in results)


# --- scorer -----------------------------------------------------------------------

def test_scorer_identical_labels_grow_monotonically(rng):
    E = np.abs(rng.standard_normal((20, 2))) + 0.1
    y = np.ones(20)
    losses, norms = [], []
    for epochs in (1, 5, 20, 100):
        s = fit_scoring(E, y, epochs=epochs)
        losses.append(scorer_loss(s, E, y))
        norms.append(np.linalg.norm(s.a))
    assert np.all(np.diff(losses) < 0) and np.all(np.diff(norms) > 0)


def test_scorer_separates_one_dimensional_data():
    E = np.r_[-np.linspace(0.1, 2, 10), np.linspace(0.1, 2, 10)][:, None]
    y = np.r_[np.zeros(10), np.ones(10)]
    s = fit_scoring(E, y)
    assert np.mean((s.score(E) >= 0) == y) == 1.0


def test_scorer_zero_features_stay_zero():
    s = fit_scoring(np.zeros((6, 3)), np.array([0, 1, 1, 0, 1, 0]))
    assert not s.a.any() and s.bias == 0.0
    assert np.all(rank_probability(s.score(np.zeros((4, 3)))) == 0.5)


def test_scorer_is_deterministic_and_acts_on_raw_features(rng):
    E = rng.standard_normal((30, 3)) * [1.0, 100.0, 0.01] + [0.0, 5.0, -1.0]
    y = (E[:, 0] > 0).astype(float)
    s1, s2 = fit_scoring(E, y, fit_bias=True), fit_scoring(E, y, fit_bias=True)
    assert np.array_equal(s1.a, s2.a) and s1.bias == s2.bias
    assert np.mean((s1.score(E) >= 0) == y) >= 0.95
    with pytest.raises(ShapeError):
        fit_scoring(E, y[:-1])


# --- batch objectives -------------------------------------------------------------

def _model(rng, kind, V=2, dims=(3, 4), z=3, k=1):
    F = [init_mlp([d, z], rng, [IDENTITY], name="F", view=v) for v, d in enumerate(dims)]
    if kind == DMVDR:
        G = [init_mlp([z, 2, 1], rng, name="G", view=v) for v in range(V)]
        H = init_mlp([k * V, 2, 1], rng, name="H")
    else:
        G = [init_mlp([z, d], rng, name="G", view=v) for v, d in enumerate(dims)]
        H = None
    return RankModel(kind, F, G, EmbeddingProjection([rng.standard_normal((z, k)) for _ in range(V)],
                                                     np.zeros(k), k), H=H)


def _batch(rng, dims=(3, 4), n=12):
    Xs = [rng.standard_normal((n, d)) for d in dims]
    y = np.array([0, 1] * (n // 2))
    return Xs, y


def test_alpha_zero_leaves_decoders_untouched(rng):
    model = _model(rng, MVMDAE)
    Xs, y = _batch(rng)
    _, _, grads_G, _ = mvsl2r_batch_objective(model, Xs, y, alpha=0.0, rho=0.0)
    assert all(not dW.any() and not db.any() for g in grads_G for dW, db in g)


def test_single_class_batch_is_degenerate_for_mda(rng):
    model = _model(rng, MVMDAE)
    Xs, _ = _batch(rng)
    assert mvsl2r_batch_objective(model, Xs, np.zeros(12, int), 0.1, 0.0) is None
    dmodel = _model(rng, DMVDR)
    assert dmvdr_batch_objective(dmodel, Xs, [np.zeros(12)] * 2, np.zeros(12, int), 0.1, 1.0, 0.0) is None


def test_dmvdr_without_rank_terms_keeps_only_embedding_gradient(rng):
    model = _model(rng, DMVDR)
    Xs, y = _batch(rng)
    out = dmvdr_batch_objective(model, Xs, [y, 1 - y], y, alpha=0.0, beta=0.0, rho=0.0)
    from mvrank.subspace import trace_ratio_grad_z

    Zs = [mlp_forward(F, X) for F, X in zip(model.F, Xs)]
    part = graphs.ClassPartition.from_labels(y)
    gz, _ = trace_ratio_grad_z([Z.T for Z, _ in Zs], model.projection, graphs.between_class_laplacian(part),
                               graphs.within_class_laplacian(part), True)
    for v, (_, cache) in enumerate(Zs):
        expect, _ = mlp_backward(model.F[v], cache, -gz[v].T)
        for (a, b), (c, d) in zip(out["grads_F"][v], expect):
            assert np.allclose(a, c, atol=1e-14) and np.allclose(b, d, atol=1e-14)
    # the heads still train against their own labels
    assert any(dW.any() for g in out["grads_G"] for dW, _ in g)
    assert any(dW.any() for dW, _ in out["grads_H"])


def test_single_view_dmvdr_reduces_to_ranknet(rng):
    """With one view and no fused term, the rank part of the F gradient is
    plain backprop of the cross-entropy through G after F."""
    F = init_mlp([4, 3], rng, [IDENTITY])
    G = init_mlp([3, 2, 1], rng)
    H = init_mlp([1, 1], rng)
    X = rng.standard_normal((10, 4))
    y = np.array([0, 1] * 5)
    Zt = mlp_forward(F, X)[0].T
    part = graphs.ClassPartition.from_labels(y)
    proj = solve_projection([Zt], graphs.between_class_laplacian(part), graphs.within_class_laplacian(part), 1,
                            include_self=True)
    model = RankModel(DMVDR, [F], [G], proj, H=H)
    with_rank = dmvdr_batch_objective(model, [X], [y], y, alpha=1.0, beta=0.0, rho=0.0)
    without = dmvdr_batch_objective(model, [X], [y], y, alpha=0.0, beta=0.0, rho=0.0)

    Z, cF = mlp_forward(F, X)
    p, cG = mlp_forward(G, Z)
    loss, dp = rank_loss_and_grad(p[:, 0], y)
    gG, dZ = mlp_backward(G, cG, dp[:, None])
    gF, _ = mlp_backward(F, cF, dZ)
    assert with_rank["view_losses"][0] == loss
    for (a, b), (c, d) in zip(with_rank["grads_G"][0], gG):
        assert np.array_equal(a, c) and np.array_equal(b, d)
    for (a, b), (c, d), (e, f) in zip(with_rank["grads_F"][0], without["grads_F"][0], gF):
        assert np.allclose(a - c, e, atol=1e-13) and np.allclose(b - d, f, atol=1e-13)


@pytest.mark.parametrize("kind", METHODS)
def test_composed_gradient_suites(kind):
    results = gradcheck.composed_suite(kind, n=20, seed=4)
    assert all(r.passed for r in results), max(r.rel_error for r in results)


def test_dmvdr_head_gradient_suite():
    assert all(r.passed for r in gradcheck.dmvdr_head_suite(n=20, seed=4))


# --- training ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained(small_prep):
    return {kind: train(kind, small_prep.train_pairs, cfg=TrainConfig(**FAST)) for kind in METHODS}


@pytest.mark.parametrize("kind", METHODS)
def test_trained_model_shape(trained, small_prep, kind):
    model = trained[kind]
    assert model.kind == kind and model.n_views == 3
    assert (model.H is not None) == (kind == DMVDR)
    assert (model.scorer is not None) == (kind != DMVDR)
    assert model.projection.k == subspace_dim(kind, model.config)
    assert len(model.history) == FAST["epochs"]
    for row in model.history:
        assert all(np.isfinite(v) for v in row.values())


@pytest.mark.parametrize("kind", METHODS)
def test_training_is_seed_deterministic(trained, small_prep, kind):
    again = train(kind, small_prep.train_pairs, cfg=TrainConfig(**FAST))
    assert all(np.array_equal(a, b) for a, b in zip(params(trained[kind]), params(again)))
    assert np.array_equal(trained[kind].projection.stacked, again.projection.stacked)
    p1, _ = predict(trained[kind], small_prep.test_pairs.X)
    p2, _ = predict(again, small_prep.test_pairs.X)
    assert np.array_equal(p1, p2)
    other = train(kind, small_prep.train_pairs, cfg=TrainConfig(**{**FAST, "seed": 1}))
    assert not all(np.array_equal(a, b) for a, b in zip(params(trained[kind]), params(other)))


def test_dmvdr_weights_have_unit_columns(trained):
    for net in trained[DMVDR].networks():
        for layer in net.layers:
            assert np.allclose(np.linalg.norm(layer.weight, axis=0), 1.0, atol=1e-9)


def test_degenerate_batches_are_skipped_with_warning(small_prep, caplog):
    # four-pair batches hold a single class about one time in eight
    cfg = TrainConfig(epochs=1, batch=4, ref_size=300, scorer_epochs=10)
    with caplog.at_level(logging.WARNING, logger="mvrank.models"):
        model = train(MVMDAE, small_prep.train_pairs, cfg=cfg)
    assert model.history[0]["skipped_batches"] > 0
    assert "degenerate" in caplog.text


def test_all_degenerate_data_fails(small_prep):
    data = small_prep.train_pairs
    ones = data.take(np.flatnonzero(data.y_bar == 1))
    with pytest.raises(TrainingError):
        train(MVMDAE, ones, cfg=TrainConfig(epochs=1))


def test_training_rejects_bad_input(small_prep):
    data = small_prep.train_pairs
    single = PairDataset([data.X[0]], [data.y[0]], data.y_bar, data.query_of_pair, data.pairs)
    with pytest.raises(InputError):
        train(MVMDAE, single)
    with pytest.raises(InputError):
        train("ranksvm", data)
    with pytest.raises(InputError):
        TrainConfig(batch=1)
    with pytest.raises(InputError):
        TrainConfig(k=0)
    with pytest.raises(InputError):
        train(MVCCAE, data, topology=Topology(encoder=(2,)), cfg=TrainConfig(k=7, epochs=1))


def test_correlation_objective_climbs_with_small_steps():
    views = synth_generate(SynthSpec(V=2, N=60, dims=(6, 6), latent_dim=3, noise_sigma=0.5, seed=3))
    prep = prepare(views, 0.25, 0)
    model = train(MVCCAE, prep.train_pairs, cfg=TrainConfig(epochs=5, eta=0.02))
    trace = [row["ref_objective"] for row in model.history]
    assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:])), trace


def test_dmvdr_fused_loss_decreases(small_prep):
    model = train(DMVDR, small_prep.train_pairs, cfg=TrainConfig(epochs=10))
    fused = [row["fused_rank_loss"] for row in model.history]
    assert fused[-1] < fused[0]
    assert np.mean(fused[5:]) < np.mean(fused[:5])


def test_mvmdae_scorer_fits_separable_pairs():
    views = synth_generate(SynthSpec(V=2, N=60, dims=(6, 6), latent_dim=3, noise_sigma=0.0,
                                     nonlinearity=LINEAR, seed=3))
    prep = prepare(views, 0.25, 0)
    model = train(MVMDAE, prep.train_pairs)
    p, _ = predict(model, prep.train_pairs.X)
    assert np.mean((p >= 0.5) == prep.train_pairs.y_bar) >= 0.95


def _fisher(E, y):
    a, b = E[y == 1], E[y == 0]
    return float(np.mean((a.mean(0) - b.mean(0)) ** 2 / (a.var(0) + b.var(0))))


def test_mvmdae_embedding_separates_classes(small_prep):
    model = train(MVMDAE, small_prep.train_pairs)
    y = small_prep.train_pairs.y_bar
    E = np.hstack(embed(model, small_prep.train_pairs.X))
    assert _fisher(E, y) > _fisher(np.hstack(small_prep.train_pairs.X), y)


# --- prediction -------------------------------------------------------------------

def test_zero_scorer_predicts_half(trained, small_prep):
    model = trained[MVCCAE]
    saved = model.scorer
    model.scorer = ScoringFunction(np.zeros_like(saved.a), 0.0)
    try:
        p, scenario = predict(model, small_prep.test_pairs.X)
    finally:
        model.scorer = saved
    assert scenario == FUSED and np.all(p == 0.5)


def test_linear_scorer_is_antisymmetric(rng):
    s = ScoringFunction(rng.standard_normal(4))
    E = rng.standard_normal((10, 4))
    assert np.allclose(rank_probability(s.score(E)) + rank_probability(s.score(-E)), 1.0, atol=1e-15)


def _tied_model(rng, kind):
    """Two views with identical encoders and projections."""
    F = init_mlp([3, 4], rng, [IDENTITY])
    W = rng.standard_normal((4, 1))
    proj = EmbeddingProjection([W, W.copy()], np.zeros(1), 1)
    G = [init_mlp([4, 1], rng) for _ in range(2)]
    if kind == DMVDR:
        return RankModel(kind, [F, F.copy()], G, proj, H=init_mlp([2, 3, 1], rng))
    return RankModel(kind, [F, F.copy()], G, proj, scorer=ScoringFunction(np.array([0.7, 0.7]), 0.1))


@pytest.mark.parametrize("kind", [MVMDAE, DMVDR])
def test_fused_and_single_view_agree_on_identical_views(rng, kind):
    model = _tied_model(rng, kind)
    X = rng.standard_normal((15, 3))
    fused, s1 = predict(model, [X, X])
    single, s2 = predict(model, [X, None])
    assert (s1, s2) == (FUSED, SINGLE_VIEW)
    if kind == DMVDR:
        assert np.array_equal(fused, single)
    else:
        # the slice score is a monotone image of the fused score
        assert np.array_equal(np.argsort(fused, kind="stable"), np.argsort(single, kind="stable"))


@pytest.mark.parametrize("kind", METHODS)
def test_missing_view_scenarios(trained, small_prep, kind):
    X = small_prep.test_pairs.X
    p, scenario = predict(trained[kind], [X[0], None, None])
    assert scenario == SINGLE_VIEW and np.all((p > 0) & (p < 1))
    p, scenario = predict(trained[kind], [X[0], None, X[2]])
    assert scenario == PARTIAL and np.all(np.isfinite(p))


def test_predict_errors(trained, small_prep):
    model = trained[MVMDAE]
    X = small_prep.test_pairs.X
    with pytest.raises(InputError):
        predict(model, [None, None, None])
    with pytest.raises(InputError):
        predict(model, X[:2])
    with pytest.raises(ShapeError):
        predict(model, [X[1], X[1], X[2]])
    with pytest.raises(ShapeError):
        predict(model, [X[0][:5], X[1], X[2]])
