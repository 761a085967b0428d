"""Synthetic latent class data with known generating parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import CategoricalDataset, save_dataset


@dataclass(frozen=True)
class GenerativeSpec:
    """Class weights ``weights`` (length G) and ``theta[m]`` of shape (G, C_m)."""

    weights: tuple
    theta: tuple
    n_items: int
    name: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1 or (w < 0).any() or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must lie on the simplex")
        thetas = tuple(np.asarray(t, dtype=float) for t in self.theta)
        for m, t in enumerate(thetas):
            if t.ndim != 2 or t.shape[0] != w.size:
                raise ValueError(f"theta for variable {m + 1} must have one row per group")
            if t.shape[1] < 2:
                raise ValueError(f"variable {m + 1} needs at least 2 categories")
            if (t < 0).any() or (np.abs(t.sum(axis=1) - 1) > 1e-12).any():
                raise ValueError(f"theta rows of variable {m + 1} must lie on the simplex")
        if self.n_items < 1:
            raise ValueError("n_items must be positive")
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "theta", thetas)

    @property
    def g(self) -> int:
        return len(self.weights)

    @property
    def categories(self) -> tuple:
        return tuple(t.shape[1] for t in self.theta)

    def to_dict(self) -> dict:
        return {"name": self.name, "n_items": self.n_items, "g": self.g,
                "weights": list(self.weights),
                "theta": [t.tolist() for t in self.theta]}


@dataclass(frozen=True)
class LabeledDataset:
    data: CategoricalDataset
    truth: np.ndarray
    oracle: np.ndarray


def _binary(p1):
    return [[p, 1 - p] for p in p1]


# probability of category 1 in class 1 and class 2, variables 1..13
_DR_BINARY = [(0.6, 0.2), (0.8, 0.5), (0.7, 0.4), (0.6, 0.9),
              (0.5, 0.5), (0.4, 0.4), (0.3, 0.3), (0.2, 0.2), (0.9, 0.9),
              (0.6, 0.6), (0.7, 0.7), (0.8, 0.8), (0.1, 0.1)]

# rows are classes 1..3, columns categories
_DR_NONBINARY_INFORMATIVE = [
    [[0.1, 0.1, 0.8], [0.3, 0.5, 0.2], [0.6, 0.2, 0.2]],
    [[0.5, 0.5], [0.1, 0.9], [0.7, 0.3]],
    [[0.2, 0.2, 0.3, 0.3], [0.7, 0.1, 0.1, 0.1], [0.2, 0.6, 0.1, 0.1]],
    [[0.1, 0.5, 0.4], [0.6, 0.1, 0.3], [0.4, 0.4, 0.2]],
]
_DR_NONBINARY_NOISE = [
    [0.4, 0.5, 0.1],
    [0.2, 0.4, 0.1, 0.3],
    [0.2, 0.3, 0.3, 0.1, 0.1],
    [0.2, 0.8],
    [0.7, 0.1, 0.2],
    [0.1, 0.2, 0.1, 0.6],
]


def builtin_spec(name: str, n_items: Optional[int] = None) -> GenerativeSpec:
    """The two Dean and Raftery benchmark designs.

    ``dr-binary``: 13 binary variables, 2 classes, weights (0.6, 0.4),
    variables 1-4 informative, default N = 500. ``dr-nonbinary``: 10
    variables with 2-5 categories, 3 classes, weights (0.3, 0.4, 0.3),
    variables 1-4 informative, default N = 1000.
    """
    if name == "dr-binary":
        theta = [np.array(_binary(pair)) for pair in _DR_BINARY]
        return GenerativeSpec((0.6, 0.4), tuple(theta), n_items or 500, name)
    if name == "dr-nonbinary":
        theta = [np.array(t) for t in _DR_NONBINARY_INFORMATIVE]
        theta += [np.tile(np.array(p), (3, 1)) for p in _DR_NONBINARY_NOISE]
        return GenerativeSpec((0.3, 0.4, 0.3), tuple(theta), n_items or 1000, name)
    raise ValueError(f"unknown builtin spec {name!r}; choose dr-binary or dr-nonbinary")


def _categorical(rng, probs, size):
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(size)
    return np.minimum((u[..., None] >= cdf[..., :-1]).sum(axis=-1), probs.shape[-1] - 1)


def bayes_oracle(spec: GenerativeSpec, cells) -> np.ndarray:
    """0-based argmax of the class posterior under the generating parameters."""
    cells = np.asarray(cells)
    with np.errstate(divide="ignore"):
        score = np.log(np.asarray(spec.weights))[None, :].repeat(cells.shape[0], axis=0)
        for m, t in enumerate(spec.theta):
            score = score + np.log(t[:, cells[:, m] - 1]).T
    return np.argmax(score, axis=1)


def generate(spec: GenerativeSpec, seed) -> LabeledDataset:
    """Draw memberships from the weights, then each variable independently given class."""
    rng = np.random.default_rng(seed)
    n = spec.n_items
    z = _categorical(rng, np.asarray(spec.weights), n)
    cells = np.empty((n, len(spec.theta)), dtype=np.int64)
    for m, t in enumerate(spec.theta):
        cells[:, m] = _categorical(rng, t[z], n) + 1
    data = CategoricalDataset(cells, spec.categories)
    return LabeledDataset(data, z, bayes_oracle(spec, cells))


def write_labeled(out_dir, labeled: LabeledDataset, spec: GenerativeSpec) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(out_dir / "data.csv", labeled.data)
    for fname, labels in (("truth.csv", labeled.truth), ("oracle.csv", labeled.oracle)):
        with open(out_dir / fname, "w") as fh:
            fh.write("item,group\n")
            for n, g in enumerate(labels):
                fh.write(f"{n + 1},{int(g) + 1}\n")
    with open(out_dir / "spec.json", "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")
    return ["data.csv", "truth.csv", "oracle.csv", "spec.json"]
