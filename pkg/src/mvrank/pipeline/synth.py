"""Seeded synthetic multi-view ranking data."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import InputError
from ..netcore import sigmoid
from ..pairdata import RankedView

LINEAR = "Linear"
SIGMOID = "Sigmoid"


@dataclass
class SynthSpec:
    V: int = 3
    N: int = 300
    dims: tuple = (10, 12, 8)
    latent_dim: int = 5
    noise_sigma: float = 0.3
    nonlinearity: str = SIGMOID
    seed: int = 42

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if self.V < 2:
            raise InputError("synthetic data needs V >= 2")
        if len(self.dims) != self.V:
            raise InputError(f"{len(self.dims)} view dims given for V={self.V}")
        if self.N < 2 or self.latent_dim < 1 or min(self.dims) < 1:
            raise InputError("dimensions must be positive (N >= 2)")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be >= 0")
        if self.nonlinearity not in (LINEAR, SIGMOID):
            raise InputError(f"unknown nonlinearity {self.nonlinearity!r}")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_dict(self):
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


DEFAULT_SPEC = SynthSpec()


def synth_generate(spec=DEFAULT_SPEC):
    """Draw ``spec.V`` views of the same ``spec.N`` samples.

    A latent feature matrix ``h`` (N x latent_dim) and a unit direction ``u``
    give the latent score ``h @ u``. View ``v`` observes
    ``phi(h @ A_v)`` with ``A_v`` entries drawn N(0, 1/latent_dim) and
    ``phi`` identity or sigmoid, each column scaled to zero mean and unit
    variance before Gaussian noise is added, so ``noise_sigma`` is a
    noise-to-signal ratio for either warp. Its rank list orders the latent
    score perturbed by view-specific noise of the same ``noise_sigma``.
    """
    rng = np.random.default_rng(spec.seed)
    h = rng.standard_normal((spec.N, spec.latent_dim))
    u = rng.standard_normal(spec.latent_dim)
    u /= np.linalg.norm(u)
    score = h @ u
    keys = [f"s{i:05d}" for i in range(spec.N)]
    views = []
    for v, d in enumerate(spec.dims):
        A = rng.standard_normal((spec.latent_dim, d)) / np.sqrt(spec.latent_dim)
        base = h @ A
        if spec.nonlinearity == SIGMOID:
            base = sigmoid(base)
        sd = base.std(axis=0)
        base = (base - base.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        X = base + spec.noise_sigma * rng.standard_normal((spec.N, d))
        noisy_score = score + spec.noise_sigma * rng.standard_normal(spec.N)
        r = rankdata(-noisy_score, method="min")
        views.append(RankedView(v, keys, X, r))
    return views
