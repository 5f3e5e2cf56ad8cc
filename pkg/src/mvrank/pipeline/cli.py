"""Command-line entry point: synth, train, predict, evaluate, gradcheck.

Every command is a pure function of its flags and input files, so
re-running it reproduces the same artifacts byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .. import gradcheck, metrics
from ..errors import InputError, MvRankError, ParseError
from ..models import DMVDR, METHODS, PRESETS, TrainConfig, predict, train
from ..pairdata import align_views, balance_classes, pairwise_transform
from .benchmark import evaluate
from .data import DatasetManifest, ViewSource, load_views, split_samples, standardize_aligned, write_view_csv
from .persist import load_model, save_model
from .synth import DEFAULT_SPEC, SynthSpec, synth_generate

logger = logging.getLogger("mvrank")

MODEL_FILE = "model.json"
LOG_FILE = "training_log.csv"
SPLIT_FILE = "split.json"
PRED_FILE = "predictions.csv"
METRICS_FILE = "metrics.json"
PR_FILE = "pr11.csv"
ROC_FILE = "roc.csv"


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _add_data_flags(p, required=True):
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--manifest", help="JSON manifest listing one CSV per view")
    group.add_argument("--synth", help="'default' or a JSON synthetic spec")


def _views(args):
    if args.manifest:
        return load_views(DatasetManifest.load(args.manifest))
    if args.synth == "default":
        return synth_generate(DEFAULT_SPEC)
    return synth_generate(SynthSpec.from_json(args.synth))


# --- synth -----------------------------------------------------------------------

def cmd_synth(args):
    spec = DEFAULT_SPEC if args.spec == "default" else SynthSpec.from_json(args.spec)
    os.makedirs(args.out, exist_ok=True)
    sources = []
    for view in synth_generate(spec):
        name = f"view{view.view_id}.csv"
        write_view_csv(view, os.path.join(args.out, name))
        sources.append(ViewSource(view.view_id, os.path.join(args.out, name), "key", "rank"))
    DatasetManifest(sources, name="synthetic", notes=json.dumps(spec.to_dict(), sort_keys=True)).dump(
        os.path.join(args.out, "manifest.json")
    )
    print(f"wrote {len(sources)} views to {args.out}")
    return 0


# --- train -----------------------------------------------------------------------

def cmd_train(args):
    cfg = TrainConfig(
        alpha=args.alpha, beta=args.beta, rho=args.rho, eta=args.lr, epochs=args.epochs,
        batch=args.batch, k=args.dim, seed=args.seed,
    )
    topology = PRESETS[args.preset]
    aligned = align_views(_views(args))
    train_idx, test_idx = split_samples(aligned.n, args.test_fraction, args.seed)
    train_al, stats = standardize_aligned(aligned.subset(train_idx))
    rng = np.random.default_rng(args.seed) if args.max_pairs else None
    pairs = balance_classes(pairwise_transform(train_al, max_pairs_per_query=args.max_pairs, rng=rng), args.seed)
    model = train(args.method, pairs, topology, cfg)

    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, MODEL_FILE))
    if model.history:
        with open(os.path.join(args.out, LOG_FILE), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(model.history[0]))
            writer.writeheader()
            writer.writerows(model.history)
    _write_json(os.path.join(args.out, SPLIT_FILE), {
        "seed": args.seed,
        "test_fraction": args.test_fraction,
        "train_keys": [aligned.keys[i] for i in train_idx],
        "test_keys": [aligned.keys[i] for i in test_idx],
        "means": [m.tolist() for m, _ in stats],
        "stds": [s.tolist() for _, s in stats],
    })
    print(f"trained {args.method} on {pairs.n_pairs} pairs; wrote {args.out}")
    return 0


# --- predict ---------------------------------------------------------------------

def _load_split(path):
    try:
        with open(path) as fh:
            split = json.load(fh)
        stats = [(np.array(m), np.array(s)) for m, s in zip(split["means"], split["stds"])]
        return split, stats
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read split file {path}: {exc}") from None


def cmd_predict(args):
    model = load_model(args.model)
    split_path = args.split or os.path.join(os.path.dirname(os.path.abspath(args.model)), SPLIT_FILE)
    split, stats = _load_split(split_path)
    aligned = align_views(_views(args))
    if args.subset == "all":
        idx = np.arange(aligned.n)
    else:
        position = {key: i for i, key in enumerate(aligned.keys)}
        wanted = split[f"{args.subset}_keys"]
        missing = [k for k in wanted if k not in position]
        if missing:
            raise InputError(f"{len(missing)} {args.subset} keys are absent from the data, e.g. {missing[0]!r}")
        idx = np.array([position[k] for k in wanted], dtype=int)
    part, _ = standardize_aligned(aligned.subset(idx), stats)
    pairs = pairwise_transform(part)

    Xs = list(pairs.X)
    if args.views:
        keep = {int(v) for v in args.views.split(",")}
        bad = keep - set(range(model.n_views))
        if bad:
            raise InputError(f"view index out of range: {sorted(bad)}")
        Xs = [X if v in keep else None for v, X in enumerate(Xs)]
    p, scenario = predict(model, Xs)
    logger.info("prediction scenario: %s", scenario)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, PRED_FILE), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "item", "query_index", "item_index", "probability", "label",
                         "query_r_bar", "item_r_bar"])
        for (q, i), pq, y in zip(pairs.pairs, p, pairs.y_bar):
            writer.writerow([part.keys[q], part.keys[i], int(q), int(i), repr(float(pq)), int(y),
                             repr(float(part.r_bar[q])), repr(float(part.r_bar[i]))])
    print(f"{scenario}: wrote {p.size} pair probabilities to {args.out}")
    return 0


# --- evaluate --------------------------------------------------------------------

class _PairTable:
    def __init__(self, pairs, y_bar, query_of_pair):
        self.pairs, self.y_bar, self.query_of_pair = pairs, y_bar, query_of_pair


def _read_predictions(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        q = np.array([int(r["query_index"]) for r in rows], dtype=int)
        i = np.array([int(r["item_index"]) for r in rows], dtype=int)
        p = np.array([float(r["probability"]) for r in rows])
        y = np.array([int(r["label"]) for r in rows], dtype=np.int64)
        rq = np.array([float(r["query_r_bar"]) for r in rows])
        ri = np.array([float(r["item_r_bar"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ParseError(f"cannot read predictions {path}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no prediction rows")
    n = int(max(q.max(), i.max())) + 1
    r_bar = np.full(n, np.nan)
    r_bar[q], r_bar[i] = rq, ri
    if np.isnan(r_bar).any():
        raise ParseError(f"{path}: sample indices are not contiguous")
    return p, _PairTable(np.column_stack([q, i]), y, q), r_bar


def cmd_evaluate(args):
    p, pairs, r_bar = _read_predictions(args.predictions)
    result = evaluate(p, pairs, r_bar)
    if not np.isfinite(result["roc_auc"]):
        raise InputError("ROC-AUC needs both label classes among the pairs")
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, METRICS_FILE), result)
    for name, kind, header in ((PR_FILE, metrics.PR11, "recall,precision"), (ROC_FILE, metrics.ROC, "fpr,tpr")):
        series = metrics.curve(p, pairs.y_bar, kind)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(header + "\n")
            for x, y in series.points:
                fh.write(f"{x!r},{y!r}\n")
    print(json.dumps(result, sort_keys=True))
    return 0


# --- gradcheck -------------------------------------------------------------------

def cmd_gradcheck(args):
    results = gradcheck.run_all(args.instances, args.seed)
    failed = 0
    for suite, (passed, total, worst) in gradcheck.summarize(results).items():
        status = "PASS" if passed == total else "FAIL"
        failed += total - passed
        print(f"{status} {suite}: {passed}/{total} within tolerance, worst rel. error {worst:.2e}")
    return 1 if failed else 0


# --- parser ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="mvrank", description="Multi-view learning to rank.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSVs plus a manifest")
    p.add_argument("--spec", default="default", help="'default' or a JSON synthetic spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_data_flags(p)
    p.add_argument("--method", choices=METHODS, default=DMVDR)
    p.add_argument("--alpha", type=float, default=TrainConfig.alpha)
    p.add_argument("--beta", type=float, default=TrainConfig.beta)
    p.add_argument("--rho", type=float, default=TrainConfig.rho)
    p.add_argument("--lr", type=float, default=TrainConfig.eta)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch", type=int, default=TrainConfig.batch)
    p.add_argument("--dim", type=int, default=None, help="embedding size k (default: per method)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="synthetic")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--max-pairs", type=int, default=None, help="sample at most this many pairs per query")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="pair probabilities from a trained model")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--split", help="split file (default: split.json next to the model)")
    p.add_argument("--subset", choices=("test", "train", "all"), default="test")
    p.add_argument("--views", help="comma-separated view indices to keep; others are treated as missing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics and PR/ROC series for a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every analytic gradient")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MvRankError, OSError, ValueError) as exc:
        print(f"mvrank {args.command}: error: {exc}", file=sys.stderr)
        return 1
