"""Categorical data loading, priors and run configuration."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DatasetError(ValueError):
    """Base class for problems with an input data file."""


class ParseError(DatasetError):
    pass


class RangeError(DatasetError):
    pass


class DegenerateVariableError(DatasetError):
    pass


class ConfigError(ValueError):
    """Raised when a configuration field violates its invariant.

    The offending field name is available as ``field``.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True, eq=False)
class CategoricalDataset:
    """An N x M matrix of 1-based category codes.

    Parameters
    ----------
    cells : array of shape (n_items, n_vars)
        Category codes, ``1 <= cells[n, m] <= categories[m]``.
    categories : sequence of int
        Number of categories ``C_m`` of each variable, each at least 2.
    names : sequence of str, optional
        Variable names; defaults to ``var1 .. varM``.
    """

    cells: np.ndarray
    categories: tuple
    names: tuple = field(default=())

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64, copy=True)
        if cells.ndim != 2:
            raise DatasetError("cells must be a two-dimensional matrix")
        cats = tuple(int(c) for c in self.categories)
        n_items, n_vars = cells.shape
        if n_items < 1 or n_vars < 1:
            raise DatasetError("a dataset needs at least one item and one variable")
        if len(cats) != n_vars:
            raise DatasetError(
                f"got {len(cats)} category counts for {n_vars} variables")
        for m, c in enumerate(cats):
            if c < 2:
                raise DegenerateVariableError(
                    f"variable {m + 1} has {c} categories; at least 2 are required")
        bad = (cells < 1) | (cells > np.asarray(cats))
        if bad.any():
            n, m = np.argwhere(bad)[0]
            raise RangeError(
                f"row {n + 1}, column {m + 1}: code {cells[n, m]} outside 1..{cats[m]}")
        names = tuple(self.names) or tuple(f"var{m + 1}" for m in range(n_vars))
        if len(names) != n_vars:
            raise DatasetError("one name per variable is required")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "names", names)

    @property
    def n_items(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vars(self) -> int:
        return self.cells.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        """Start of each variable's block in the concatenated category axis."""
        return np.concatenate([[0], np.cumsum(self.categories)[:-1]]).astype(np.int64)

    @property
    def total_categories(self) -> int:
        return int(sum(self.categories))

    def flat_codes(self) -> np.ndarray:
        """0-based column index of every cell in the concatenated category axis."""
        return (self.cells - 1 + self.offsets[None, :]).astype(np.int64)

    def subset(self, items) -> "CategoricalDataset":
        return CategoricalDataset(self.cells[np.asarray(items)], self.categories, self.names)

    def __eq__(self, other):
        if not isinstance(other, CategoricalDataset):
            return NotImplemented
        return (self.categories == other.categories
                and np.array_equal(self.cells, other.cells))


def _parse_int(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return None


def load_dataset(path, declared_categories: Optional[Sequence[int]] = None) -> CategoricalDataset:
    """Read a comma-separated file of integer category codes.

    A first row containing any non-integer field is taken as a header of
    variable names. Blank cells are rejected; there is no missing-data
    mechanism.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(s.strip() for s in r)]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    names = ()
    if any(_parse_int(s) is None for s in rows[0]):
        names = tuple(s.strip() for s in rows[0])
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")

    width = len(rows[0])
    cells = np.empty((len(rows), width), dtype=np.int64)
    for i, row in enumerate(rows):
        lineno = i + 1 + bool(names)
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        for j, text in enumerate(row):
            value = _parse_int(text)
            if value is None:
                raise ParseError(
                    f"{path}: row {lineno}, column {j + 1}: {text!r} is not an integer")
            if not -2**62 < value < 2**62:
                raise RangeError(f"{path}: row {lineno}, column {j + 1}: code {value} is too large")
            cells[i, j] = value

    if (cells < 1).any():
        i, j = np.argwhere(cells < 1)[0]
        raise RangeError(
            f"{path}: row {i + 1 + bool(names)}, column {j + 1}: code {cells[i, j]} "
            "is below 1 (codes are 1-based)")

    if declared_categories is not None:
        cats = tuple(int(c) for c in declared_categories)
        if len(cats) != width:
            raise DatasetError(f"{len(cats)} declared category counts for {width} columns")
    else:
        cats = tuple(int(c) for c in cells.max(axis=0))
        for j, c in enumerate(cats):
            if c < 2:
                raise DegenerateVariableError(
                    f"{path}: column {j + 1} only takes the value 1")
    if names and len(names) != width:
        raise ParseError(f"{path}: header has {len(names)} fields, expected {width}")
    return CategoricalDataset(cells, cats, names)


def save_dataset(path, data: CategoricalDataset, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(data.names)
        writer.writerows(data.cells.tolist())


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the collapsed model.

    ``pi_mode`` is ``"fixed"`` (prior inclusion probability ``pi``) or
    ``"hyper"`` (``pi ~ Beta(a0, b0)``).
    """

    alpha: float = 0.5
    beta: float = 1.0
    pi_mode: str = "fixed"
    pi: float = 0.5
    a0: float = 1.0
    b0: float = 1.0
    g_max: int = 30
    poisson_rate: float = 1.0

    @property
    def hyper(self) -> bool:
        return self.pi_mode == "hyper"

    def validate(self) -> None:
        if not self.alpha > 0:
            raise ConfigError("alpha", f"must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ConfigError("beta", f"must be positive, got {self.beta}")
        if int(self.g_max) != self.g_max or self.g_max < 1:
            raise ConfigError("g_max", f"must be an integer >= 1, got {self.g_max}")
        if not self.poisson_rate > 0:
            raise ConfigError("poisson_rate", f"must be positive, got {self.poisson_rate}")
        if self.pi_mode == "fixed":
            if not 0 < self.pi < 1:
                raise ConfigError("pi", f"must lie in (0, 1), got {self.pi}")
        elif self.pi_mode == "hyper":
            if not self.a0 > 0:
                raise ConfigError("a0", f"must be positive, got {self.a0}")
            if not self.b0 > 0:
                raise ConfigError("b0", f"must be positive, got {self.b0}")
        else:
            raise ConfigError("pi_mode", f"must be 'fixed' or 'hyper', got {self.pi_mode!r}")


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 50_000
    burn_in: int = 1_000
    thin: int = 10
    seed: int = 0
    initial_g: int = 1
    store_z: bool = False

    def validate(self) -> None:
        for name in ("iterations", "burn_in", "thin", "initial_g"):
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigError(name, f"must be an integer, got {value!r}")
        if self.iterations < 0:
            raise ConfigError("iterations", f"must be non-negative, got {self.iterations}")
        if self.burn_in < 0:
            raise ConfigError("burn_in", f"must be non-negative, got {self.burn_in}")
        if self.thin < 1:
            raise ConfigError("thin", f"must be at least 1, got {self.thin}")
        if self.initial_g < 1:
            raise ConfigError("initial_g", f"must be at least 1, got {self.initial_g}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")


def validate_config(cfg: RunConfig, priors: Priors, data: Optional[CategoricalDataset] = None) -> None:
    """Check every invariant of ``cfg`` and ``priors`` jointly.

    Raises
    ------
    ConfigError
        Naming the first field found in violation.
    """
    priors.validate()
    cfg.validate()
    if cfg.initial_g > priors.g_max:
        raise ConfigError(
            "initial_g", f"{cfg.initial_g} exceeds g_max = {priors.g_max}")
    if data is not None and cfg.initial_g > data.n_items:
        raise ConfigError(
            "initial_g", f"{cfg.initial_g} exceeds the number of items {data.n_items}")


_RUN_FIELDS = {f.name for f in fields(RunConfig)}
_PRIOR_FIELDS = {f.name for f in fields(Priors)}


def config_from_dict(doc: dict, extra_ok: Sequence[str] = ()):
    """Split a flat JSON-style mapping into ``(RunConfig, Priors, extras)``."""
    unknown = set(doc) - _RUN_FIELDS - _PRIOR_FIELDS - set(extra_ok)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration field")
    cfg = RunConfig(**{k: v for k, v in doc.items() if k in _RUN_FIELDS})
    priors = Priors(**{k: v for k, v in doc.items() if k in _PRIOR_FIELDS})
    extras = {k: v for k, v in doc.items() if k in set(extra_ok)}
    return cfg, priors, extras


def load_config(path, extra_ok: Sequence[str] = ()):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", f"{path}: expected a JSON object")
    return config_from_dict(doc, extra_ok)


def config_to_dict(cfg: RunConfig, priors: Priors) -> dict:
    return {**asdict(cfg), **asdict(priors)}
