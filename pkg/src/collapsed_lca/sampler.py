"""Trans-dimensional collapsed Gibbs sampler over groups, memberships and variables.

Each sweep runs, in order: (a) a Gibbs update of every membership,
(b) an eject or absorb proposal changing the number of groups by one,
(c) a flip proposal for one variable's inclusion, and (d) in hyper mode
a draw of the inclusion probability from its full conditional.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .dataset import CategoricalDataset, ConfigError, Priors, RunConfig, validate_config
from .posterior import log_collapsed_posterior, log_prior_g, log_prior_pi
from .suffstats import SuffStats, build

MOVE_KINDS = ("eject", "absorb", "include", "exclude")


@dataclass(frozen=True)
class MoveParams:
    """Tuning of the eject/absorb pair.

    ``eject_shape_table`` optionally maps the size of the ejecting (or
    merged) component to the Beta shape ``a``; sizes missing from the table
    fall back to ``eject_shape_a``. Keying on that size keeps the shape
    identical for a move and its reverse.
    """

    p_g: float = 0.5
    eject_shape_a: float = 1.0
    eject_shape_table: Optional[Mapping[int, float]] = None

    def __post_init__(self):
        if not 0 < self.p_g < 1:
            raise ConfigError("p_g", f"must lie in (0, 1), got {self.p_g}")
        if not self.eject_shape_a > 0:
            raise ConfigError("eject_shape_a", f"must be positive, got {self.eject_shape_a}")

    def shape_for(self, n_k: int) -> float:
        if self.eject_shape_table is not None:
            return float(self.eject_shape_table.get(int(n_k), self.eject_shape_a))
        return self.eject_shape_a

    def eject_probability(self, g: int, g_max: int) -> float:
        if g >= g_max:
            return 0.0
        if g <= 1:
            return 1.0
        return self.p_g


class MoveOutcome(NamedTuple):
    kind: str
    accepted: bool
    log_ratio: float


@dataclass
class SamplerState:
    g: int
    z: np.ndarray
    included: np.ndarray
    pi: float
    stats: SuffStats

    def included_vars(self) -> np.ndarray:
        """Indices of the included variables (cached until the mask changes)."""
        key = self.included.tobytes()
        cache = self.__dict__.get("_incl_cache")
        if cache is None or cache[0] != key:
            cache = (key, np.flatnonzero(self.included).astype(np.int64))
            self.__dict__["_incl_cache"] = cache
        return cache[1]

    def copy(self) -> "SamplerState":
        return SamplerState(self.g, self.z.copy(), self.included.copy(), self.pi, self.stats.copy())

    def check(self, data: CategoricalDataset, g_max: int) -> None:
        if not 1 <= self.g <= g_max:
            raise AssertionError(f"G = {self.g} outside 1..{g_max}")
        if self.z.min() < 0 or self.z.max() >= self.g:
            raise AssertionError("membership label out of range")
        if not 0 < self.pi < 1:
            raise AssertionError("pi outside (0, 1)")
        self.stats.check()
        if build(data, self.z, self.g) != self.stats:
            raise AssertionError("count tables drifted from memberships")


@dataclass
class Trace:
    """Retained sweeps of one chain.

    ``included`` is a T x M 0/1 matrix; ``z`` (when stored) is T x N with
    0-based labels. ``snapshots`` holds ``(N_g, N_gmc)`` copies when the
    chain was run with ``store_stats``.
    """

    n_vars: int
    g_max: int
    sweeps: list = field(default_factory=list)
    log_posterior: list = field(default_factory=list)
    g: list = field(default_factory=list)
    included: list = field(default_factory=list)
    pi: list = field(default_factory=list)
    z: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    accept_counts: dict = field(default_factory=lambda: {k: [0, 0] for k in MOVE_KINDS})
    names: tuple = ()
    elapsed: float = 0.0
    sampling_elapsed: float = 0.0
    sweeps_run: int = 0
    final_state: Optional[SamplerState] = None

    def __len__(self):
        return len(self.sweeps)

    def record(self, sweep, state: SamplerState, log_post, store_z, store_stats):
        self.sweeps.append(sweep)
        self.log_posterior.append(log_post)
        self.g.append(state.g)
        self.included.append(state.included.astype(np.int8))
        self.pi.append(state.pi)
        if store_z:
            self.z.append(state.z.copy())
        if store_stats:
            sizes, counts = state.stats.active()
            self.snapshots.append((sizes.copy(), counts.copy()))

    def tally(self, outcome: MoveOutcome):
        counts = self.accept_counts[outcome.kind]
        counts[0] += 1
        counts[1] += int(outcome.accepted)

    def g_array(self) -> np.ndarray:
        return np.asarray(self.g, dtype=np.int64)

    def inclusion_matrix(self) -> np.ndarray:
        if not self.included:
            return np.zeros((0, self.n_vars), dtype=np.int8)
        return np.vstack(self.included)

    def z_matrix(self) -> np.ndarray:
        return np.vstack(self.z) if self.z else np.zeros((0, 0), dtype=np.int64)

    def acceptance_rates(self) -> dict:
        return {k: (a / p if p else None) for k, (p, a) in self.accept_counts.items()}


def initial_state(data: CategoricalDataset, priors: Priors, cfg: RunConfig,
                  rng: np.random.Generator, included=None) -> SamplerState:
    z = rng.integers(cfg.initial_g, size=data.n_items).astype(np.int64)
    mask = (np.ones(data.n_vars, dtype=bool) if included is None
            else np.asarray(included, dtype=bool).copy())
    pi = priors.a0 / (priors.a0 + priors.b0) if priors.hyper else priors.pi
    stats = build(data, z, cfg.initial_g, capacity=priors.g_max)
    return SamplerState(cfg.initial_g, z, mask, pi, stats)


def current_log_posterior(state: SamplerState, priors: Priors) -> float:
    return log_collapsed_posterior(state.stats, state.included, state.g, priors, state.pi)


class MoveTables:
    """Lookup tables shared by every move of a chain on one dataset.

    Built once per run; the move functions build a fresh one when none is
    passed, which is convenient for one-off calls and slow in loops.
    """

    def __init__(self, data: CategoricalDataset, priors: Priors):
        n = data.n_items
        self.n_items = n
        self.codes = data.flat_codes()
        self.cats = np.asarray(data.categories, dtype=np.int64)
        self.offsets = np.asarray(data.offsets, dtype=np.int64)
        self.consts = gammaln(self.cats * priors.beta) - self.cats * gammaln(priors.beta)
        self.log = _kernels.log_tables(n, data.categories, priors.alpha, priors.beta)
        self.lg = _kernels.lgamma_tables(n, data.categories, priors.alpha, priors.beta)
        self.lg_alpha = float(gammaln(priors.alpha))
        gs = np.arange(1, priors.g_max + 1)
        # terms depending on G alone, indexed by G (entry 0 unused)
        self.g_terms = np.concatenate([[np.nan], [
            log_prior_g(int(g), priors) + gammaln(g * priors.alpha) - gammaln(n + g * priors.alpha)
            for g in gs]])


    def log_posterior(self, state: SamplerState, priors: Priors) -> float:
        """Same value as :func:`log_collapsed_posterior`, from the lookup tables."""
        s = state.stats
        value = _kernels.partition_terms(s.group_sizes, s.group_var_cat, state.g, state.included,
                                         self.cats, self.offsets, self.consts, s.marginal_var_cat,
                                         self.n_items, *self.lg, self.lg_alpha)
        n_in = int(state.included.sum())
        value += (self.g_terms[state.g] + n_in * math.log(state.pi)
                  + (state.included.size - n_in) * math.log1p(-state.pi))
        if priors.hyper:
            value += log_prior_pi(state.pi, priors)
        return float(value)


def _tables(tables, data, priors):
    return tables if tables is not None else MoveTables(data, priors)


def gibbs_sweep_memberships(state: SamplerState, data: CategoricalDataset, priors: Priors,
                            rng: np.random.Generator, tables: Optional[MoveTables] = None) -> None:
    """Redraw every membership from its full conditional, items in ascending order."""
    if state.g == 1:
        return
    t = _tables(tables, data, priors)
    incl_vars = state.included_vars()
    uniforms = rng.random(data.n_items)
    _kernels.gibbs_sweep(t.codes, state.z, state.stats.group_sizes, state.stats.group_var_cat,
                         state.g, incl_vars, *t.log, uniforms)


def log_split_proposal(n_k: int, n_left: int, n_right: int, a: float) -> float:
    """``log`` of the eject proposal correction for a Beta(a, a) split."""
    return (2 * math.lgamma(a) - math.lgamma(2 * a) + math.lgamma(2 * a + n_k)
            - math.lgamma(a + n_left) - math.lgamma(a + n_right))


def _eject_log_a(t: MoveTables, priors: Priors, mp: MoveParams, g: int, incl_vars,
                 size_k: int, row_k, size_new: int, row_new) -> float:
    # log A for a G -> G+1 eject taking (size_new, row_new) out of (size_k, row_k)
    a = mp.shape_for(size_k)
    p_fwd = mp.eject_probability(g, priors.g_max)
    p_back = 1.0 - mp.eject_probability(g + 1, priors.g_max)
    change = _kernels.split_block_change(size_k, row_k, size_new, row_new, incl_vars, t.cats,
                                         t.offsets, t.consts, *t.lg, t.lg_alpha)
    return float(change + t.g_terms[g + 1] - t.g_terms[g]
                 + math.log(p_back) - math.log(p_fwd)
                 + log_split_proposal(size_k, size_k - size_new, size_new, a))


def log_eject_acceptance(stats: SuffStats, proposed: SuffStats, k: int, included,
                         priors: Priors, mp: MoveParams, data: Optional[CategoricalDataset] = None,
                         tables: Optional[MoveTables] = None) -> float:
    """``log A`` for ejecting the new group ``stats.g`` out of group ``k``.

    ``proposed`` holds the split tables. Without ``tables``, the dataset
    must be given (only its shape and categories are used).
    """
    if tables is None:
        if data is None:
            raise ValueError("pass the dataset or precomputed tables")
        tables = MoveTables(data, priors)
    g = stats.g
    incl_vars = np.flatnonzero(included).astype(np.int64)
    return _eject_log_a(tables, priors, mp, g, incl_vars, int(stats.group_sizes[k]),
                        stats.group_var_cat[k], int(proposed.group_sizes[g]),
                        proposed.group_var_cat[g])


def _absorb_log_a(t: MoveTables, priors: Priors, mp: MoveParams, g: int, incl_vars, sizes, counts,
                  k: int, k_to: int) -> float:
    # reverse view: the merged component ejects k's items
    return -_eject_log_a(t, priors, mp, g - 1, incl_vars, int(sizes[k] + sizes[k_to]),
                         counts[k] + counts[k_to], int(sizes[k]), counts[k])


def log_absorb_acceptance(stats: SuffStats, k: int, k_to: int, included, priors: Priors,
                          mp: MoveParams, data: Optional[CategoricalDataset] = None,
                          tables: Optional[MoveTables] = None) -> float:
    """``log A^-1`` for absorbing group ``k`` into ``k_to``."""
    if tables is None:
        if data is None:
            raise ValueError("pass the dataset or precomputed tables")
        tables = MoveTables(data, priors)
    return _absorb_log_a(tables, priors, mp, stats.g, np.flatnonzero(included).astype(np.int64),
                         stats.group_sizes, stats.group_var_cat, k, k_to)


def _swap_labels(state: SamplerState, a: int, b: int) -> None:
    if a == b:
        return
    za = state.z == a
    zb = state.z == b
    state.z[za] = b
    state.z[zb] = a
    s = state.stats
    s.group_sizes[[a, b]] = s.group_sizes[[b, a]]
    s.group_var_cat[[a, b]] = s.group_var_cat[[b, a]]


def eject_or_absorb(state: SamplerState, data: CategoricalDataset, priors: Priors,
                    mp: MoveParams, rng: np.random.Generator,
                    tables: Optional[MoveTables] = None) -> Optional[MoveOutcome]:
    """Propose G -> G+1 by ejecting part of a component, or G -> G-1 by absorbing one.

    Returns None when ``g_max == 1`` and no move is possible.
    """
    g = state.g
    if g == 1 and priors.g_max == 1:
        return None
    t = _tables(tables, data, priors)
    p_eject = mp.eject_probability(g, priors.g_max)
    stats = state.stats
    sizes, counts = stats.group_sizes, stats.group_var_cat
    incl_vars = state.included_vars()

    if rng.random() < p_eject:
        k = int(rng.integers(g))
        size_k = int(sizes[k])
        a = mp.shape_for(size_k)
        u = rng.beta(a, a)
        moved, row_new = _kernels.eject_select(state.z, k, t.codes, u, rng.random(size_k),
                                               counts.shape[1])
        log_a = _eject_log_a(t, priors, mp, g, incl_vars, size_k, counts[k], moved.size, row_new)
        accepted = bool(math.log1p(-rng.random()) < log_a)
        if accepted:
            stats.reserve(g + 1)
            sizes, counts = stats.group_sizes, stats.group_var_cat
            sizes[k] -= moved.size
            counts[k] -= row_new
            sizes[g] = moved.size
            counts[g] = row_new
            stats.g = g + 1
            state.z[moved] = g
            state.g = g + 1
            _swap_labels(state, g, int(rng.integers(g + 1)))
        return MoveOutcome("eject", accepted, log_a)

    k = int(rng.integers(g))
    k_to = int(rng.integers(g - 1))
    if k_to >= k:
        k_to += 1
    size_m = int(sizes[k] + sizes[k_to])
    row_m = counts[k] + counts[k_to]
    log_a = _absorb_log_a(t, priors, mp, g, incl_vars, sizes, counts, k, k_to)
    accepted = bool(math.log1p(-rng.random()) < log_a)
    if accepted:
        last = g - 1
        sizes[k_to] = size_m
        counts[k_to] = row_m
        state.z[state.z == k] = k_to
        if k != last:
            sizes[k] = sizes[last]
            counts[k] = counts[last]
            state.z[state.z == last] = k
        sizes[last] = 0
        counts[last] = 0
        stats.g = g - 1
        state.g = g - 1
    return MoveOutcome("absorb", accepted, log_a)


def variable_log_ratio(state: SamplerState, j: int, tables: MoveTables) -> float:
    """``log R`` for flipping variable ``j`` (negated when ``j`` is currently included)."""
    s = state.stats
    log_r = (_kernels.variable_log_ratio(s.group_sizes, s.group_var_cat, state.g, j, tables.cats,
                                         tables.offsets, tables.consts, s.marginal_var_cat,
                                         tables.n_items, tables.lg[1], tables.lg[2])
             + math.log(state.pi) - math.log1p(-state.pi))
    return float(-log_r if state.included[j] else log_r)


def variable_move(state: SamplerState, data: CategoricalDataset, priors: Priors,
                  rng: np.random.Generator, tables: Optional[MoveTables] = None) -> MoveOutcome:
    """Pick a variable uniformly and propose flipping its inclusion."""
    t = _tables(tables, data, priors)
    j = int(rng.integers(data.n_vars))
    kind = "exclude" if state.included[j] else "include"
    log_r = variable_log_ratio(state, j, t)
    accepted = bool(math.log1p(-rng.random()) < log_r)
    if accepted:
        state.included[j] = not state.included[j]
    return MoveOutcome(kind, accepted, float(log_r))


def update_pi(state: SamplerState, priors: Priors, rng: np.random.Generator) -> None:
    """Draw pi from Beta(|included| + a0, |excluded| + b0)."""
    if not priors.hyper:
        raise ConfigError("pi_mode", "pi is only sampled under a Beta hyperprior")
    n_in = int(state.included.sum())
    state.pi = float(rng.beta(n_in + priors.a0, state.included.size - n_in + priors.b0))


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a SeedSequence (for chain streams)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def chain_seeds(seed: int, n_chains: int):
    return np.random.SeedSequence(int(seed)).spawn(n_chains)


def run(data: CategoricalDataset, priors: Priors, cfg: RunConfig, mp: Optional[MoveParams] = None,
        *, included=None, fixed_g: bool = False, fixed_variables: bool = False,
        store_stats: bool = False, rng: Optional[np.random.Generator] = None,
        check_every: int = 0) -> Trace:
    """Run ``burn_in + iterations`` sweeps and keep every ``thin``-th post-burn-in one.

    Parameters
    ----------
    data, priors, cfg, mp
        Inputs; ``mp`` defaults to ``MoveParams()``.
    included : bool array, optional
        Starting inclusion mask (default: every variable included).
    fixed_g, fixed_variables : bool
        Disable the eject/absorb step or the variable step. With both set
        the chain is an ordinary collapsed Gibbs sampler at ``cfg.initial_g``.
    store_stats : bool
        Keep ``(N_g, N_gmc)`` snapshots for post-hoc estimation.
    rng : Generator, optional
        Overrides the generator seeded from ``cfg.seed``.
    check_every : int
        If positive, validate the full state every that many sweeps.
    """
    mp = mp or MoveParams()
    validate_config(cfg, priors, data)
    rng = rng or make_rng(cfg.seed)
    tables = MoveTables(data, priors)
    state = initial_state(data, priors, cfg, rng, included)
    trace = Trace(n_vars=data.n_vars, g_max=priors.g_max, names=data.names)

    start = time.perf_counter()
    total = cfg.burn_in + cfg.iterations
    sampling_start = start if cfg.burn_in == 0 else None
    for sweep in range(1, total + 1):
        gibbs_sweep_memberships(state, data, priors, rng, tables)
        if not fixed_g:
            outcome = eject_or_absorb(state, data, priors, mp, rng, tables)
            if outcome is not None:
                trace.tally(outcome)
        if not fixed_variables:
            trace.tally(variable_move(state, data, priors, rng, tables))
        if priors.hyper:
            update_pi(state, priors, rng)
        if check_every and sweep % check_every == 0:
            state.check(data, priors.g_max)
        kept = sweep - cfg.burn_in
        if kept == 0:
            sampling_start = time.perf_counter()
        if kept > 0 and kept % cfg.thin == 0:
            trace.record(sweep, state, tables.log_posterior(state, priors),
                         cfg.store_z, store_stats)
    end = time.perf_counter()
    trace.elapsed = end - start
    trace.sampling_elapsed = end - sampling_start if sampling_start is not None else 0.0
    trace.sweeps_run = total
    trace.final_state = state
    return trace


def _fmt(x) -> str:
    return repr(float(x))


def write_trace(trace: Trace, out_dir, store_z: Optional[bool] = None) -> list:
    """Write ``trace.csv``, ``inclusion.csv`` and, if present, ``z.csv``.

    Returns the list of written file names.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "log_posterior", "g", "n_included", "pi"])
        for s, lp, g, inc, pi in zip(trace.sweeps, trace.log_posterior, trace.g,
                                     trace.included, trace.pi):
            w.writerow([s, _fmt(lp), g, int(np.sum(inc)), _fmt(pi)])
    names = list(trace.names) or [f"var{m + 1}" for m in range(trace.n_vars)]
    with open(out_dir / "inclusion.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for inc in trace.included:
            w.writerow([int(v) for v in inc])
    written = ["trace.csv", "inclusion.csv"]
    if (store_z if store_z is not None else bool(trace.z)) and trace.z:
        with open(out_dir / "z.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for z in trace.z:
                w.writerow((np.asarray(z) + 1).tolist())
        written.append("z.csv")
    return written


class TraceFormatError(ValueError):
    pass


def read_trace(out_dir, g_max: int, accept_counts: Optional[dict] = None) -> Trace:
    """Load a trace written by :func:`write_trace`."""
    out_dir = Path(out_dir)
    try:
        with open(out_dir / "trace.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        with open(out_dir / "inclusion.csv", newline="") as fh:
            inc_rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise TraceFormatError(f"missing trace file: {exc.filename}") from None
    if not rows or rows[0] != ["sweep", "log_posterior", "g", "n_included", "pi"]:
        raise TraceFormatError("trace.csv: bad or missing header")
    if not inc_rows:
        raise TraceFormatError("inclusion.csv: missing header")
    body, inc_body = rows[1:], inc_rows[1:]
    if not body:
        raise TraceFormatError("trace.csv: no records")
    if len(body) != len(inc_body):
        raise TraceFormatError("trace.csv and inclusion.csv disagree in length")
    names = tuple(inc_rows[0])
    trace = Trace(n_vars=len(names), g_max=g_max, names=names)
    try:
        for row, inc in zip(body, inc_body):
            if len(row) != 5 or len(inc) != len(names):
                raise ValueError("wrong number of fields")
            mask = np.array([int(v) for v in inc], dtype=np.int8)
            if ((mask != 0) & (mask != 1)).any() or int(row[3]) != int(mask.sum()):
                raise ValueError("inclusion row inconsistent")
            g = int(row[2])
            if not 1 <= g <= g_max:
                raise ValueError(f"G = {g} outside 1..{g_max}")
            trace.sweeps.append(int(row[0]))
            trace.log_posterior.append(float(row[1]))
            trace.g.append(g)
            trace.included.append(mask)
            trace.pi.append(float(row[4]))
    except ValueError as exc:
        raise TraceFormatError(f"corrupt trace: {exc}") from None
    if accept_counts:
        trace.accept_counts = {k: list(v) for k, v in accept_counts.items()}
    return trace


def read_z(path) -> np.ndarray:
    """0-based membership matrix from a ``z.csv`` file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise TraceFormatError(f"{path}: empty")
    return np.array([[int(v) for v in r] for r in rows], dtype=np.int64) - 1
