"""JSON model files.

Floats are written with Python's shortest round-trip repr, so a saved and
reloaded model predicts bit-for-bit the same probabilities. Keys are
sorted, which makes the file bytes a function of the model alone.
"""
from __future__ import annotations

import json

import numpy as np

from ..errors import FormatVersionError, MvRankError, ParseError
from ..models import RankModel, ScoringFunction, Topology, TrainConfig
from ..netcore import Layer, MlpNetwork
from ..subspace import EmbeddingProjection

FORMAT_VERSION = 1


def _net_to_dict(net):
    return {
        "name": net.name,
        "view": net.view,
        "layers": [
            {"activation": layer.activation, "weight": layer.weight.tolist(), "bias": layer.bias.tolist()}
            for layer in net.layers
        ],
    }


def _net_from_dict(d):
    layers = [
        Layer(np.array(l["weight"], dtype=np.float64).reshape(len(l["bias"]), -1),
              np.array(l["bias"], dtype=np.float64), l["activation"])
        for l in d["layers"]
    ]
    return MlpNetwork(layers, name=d["name"], view=d["view"])


def model_to_dict(model):
    P = model.projection
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "topology": {k: list(v) for k, v in vars(model.topology).items()},
        "config": vars(model.config).copy(),
        "seed": model.config.seed,
        "F": [_net_to_dict(n) for n in model.F],
        "G": [_net_to_dict(n) for n in model.G],
        "H": None if model.H is None else _net_to_dict(model.H),
        "projection": {
            "k": P.k,
            "values": P.values.tolist(),
            "W": [W.tolist() for W in P.W],
        },
        "scorer": None if model.scorer is None else {
            "a": model.scorer.a.tolist(),
            "bias": model.scorer.bias,
        },
        "history": model.history,
    }


def model_from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"model file format_version {version!r} is not supported (expected {FORMAT_VERSION})"
        )
    P = d["projection"]
    k = int(P["k"])
    projection = EmbeddingProjection(
        [np.array(W, dtype=np.float64).reshape(-1, k) for W in P["W"]],
        np.array(P["values"], dtype=np.float64),
        k,
    )
    scorer = None
    if d["scorer"] is not None:
        scorer = ScoringFunction(np.array(d["scorer"]["a"], dtype=np.float64), float(d["scorer"]["bias"]))
    return RankModel(
        d["kind"],
        [_net_from_dict(n) for n in d["F"]],
        [_net_from_dict(n) for n in d["G"]],
        projection,
        H=None if d["H"] is None else _net_from_dict(d["H"]),
        scorer=scorer,
        topology=Topology(**{k: tuple(v) for k, v in d["topology"].items()}),
        config=TrainConfig(**d["config"]),
        history=list(d.get("history", [])),
    )


def dumps_model(model):
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_model(model, path):
    text = dumps_model(model)
    with open(path, "w") as fh:
        fh.write(text)


def load_model(path):
    """Read a model file; malformed content raises :class:`ParseError`."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a model file ({exc})") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: not a model file (top level is not an object)")
    try:
        return model_from_dict(raw)
    except FormatVersionError:
        raise
    except (KeyError, TypeError, ValueError, MvRankError) as exc:
        raise ParseError(f"{path}: malformed model file ({type(exc).__name__}: {exc})") from None
