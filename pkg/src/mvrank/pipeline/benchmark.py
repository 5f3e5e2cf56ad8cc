"""Split, pair, train and score: the end-to-end synthetic benchmark."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .. import metrics
from ..models import fit_scoring, predict, rank_probability, train
from ..pairdata import align_views, balance_classes, pairwise_transform
from .data import split_samples, standardize_aligned
from .synth import DEFAULT_SPEC, synth_generate

logger = logging.getLogger(__name__)


@dataclass
class Prepared:
    train: object  # AlignedViews
    test: object
    train_pairs: object  # PairDataset
    test_pairs: object
    stats: list  # per-view (means, stds)


def prepare(views, test_fraction=0.2, seed=0, max_pairs_per_query=None):
    """Align, split samples, standardize on the training part, pair both parts.

    Every sample serves as a query. Training pairs are class-balanced; test
    pairs are left as generated.
    """
    aligned = align_views(views)
    train_idx, test_idx = split_samples(aligned.n, test_fraction, seed)
    train_raw, test_raw = aligned.subset(train_idx), aligned.subset(test_idx)
    train_al, stats = standardize_aligned(train_raw)
    test_al, _ = standardize_aligned(test_raw, stats)
    rng = np.random.default_rng(seed) if max_pairs_per_query else None
    train_pairs = balance_classes(
        pairwise_transform(train_al, max_pairs_per_query=max_pairs_per_query, rng=rng), seed
    )
    test_pairs = pairwise_transform(test_al)
    return Prepared(train_al, test_al, train_pairs, test_pairs, stats)


def evaluate(p, pairs, r_bar, map_k=100):
    """Metrics dict for pairwise probabilities ``p`` against joint truth."""
    y = pairs.y_bar
    scores = metrics.pair_scores(pairs.pairs, p, r_bar.size)
    grouped = metrics.group_by_query(pairs.query_of_pair, p, y)
    map_value, excluded = metrics.map_at_k(grouped, map_k, return_excluded=True)
    has_both = 0 < y.sum() < y.size
    return {
        "kendall_tau": float(metrics.kendall_tau(scores, -r_bar)),
        "accuracy": metrics.accuracy(p, y),
        f"map_at_{map_k}": map_value,
        "roc_auc": metrics.roc_auc(p, y) if has_both else float("nan"),
        "n_pairs": int(y.size),
        "excluded_queries": int(excluded),
    }


def concat_baseline(prep, cfg):
    """Logistic regression on the concatenated raw pair features."""
    E = np.hstack(prep.train_pairs.X)
    scorer = fit_scoring(E, prep.train_pairs.y_bar, cfg.scorer_eta, cfg.scorer_epochs, fit_bias=True)
    return rank_probability(scorer.score(np.hstack(prep.test_pairs.X)))


def run(methods, cfg, topology=None, spec=DEFAULT_SPEC, views=None, test_fraction=0.2,
        max_pairs_per_query=None, single_view=None):
    """Train each method and evaluate on held-out pairs.

    Returns ``{name: metrics}`` including a ``concat`` baseline entry; each
    model entry also carries ``seconds``. With ``single_view`` set, the
    model is additionally scored with only that view present.
    """
    views = views if views is not None else synth_generate(spec)
    prep = prepare(views, test_fraction, cfg.seed, max_pairs_per_query)
    r_bar = prep.test.r_bar
    results = {"concat": evaluate(concat_baseline(prep, cfg), prep.test_pairs, r_bar)}
    models = {}
    for method in methods:
        t0 = time.perf_counter()
        model = train(method, prep.train_pairs, topology, cfg)
        p, _ = predict(model, prep.test_pairs.X)
        res = evaluate(p, prep.test_pairs, r_bar)
        res["seconds"] = time.perf_counter() - t0
        if single_view is not None:
            Xs = [X if v == single_view else None for v, X in enumerate(prep.test_pairs.X)]
            p1, scenario = predict(model, Xs)
            res["single_view"] = evaluate(p1, prep.test_pairs, r_bar)
            res["single_view"]["scenario"] = scenario
        results[method] = res
        models[method] = model
    return results, models, prep
