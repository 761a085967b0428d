"""Command-line entry point: simulate, fit, posthoc, summarize, rjmcmc.

Every command writes ``manifest.json`` into its output directory, also on
failure (with an ``error`` field). Exit codes: 0 success, 1 invalid data or
configuration, 2 missing input or bad usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (ConfigError, DatasetError, Priors, RunConfig, config_from_dict,
                      config_to_dict, load_dataset, validate_config)
from .posthoc import fit_fixed, read_clustering, write_clustering, write_params
from .rjmcmc import ACCEPTANCE_RULES, run_fixed_g
from .sampler import (MOVE_KINDS, MoveParams, Trace, TraceFormatError, make_rng, read_trace,
                      run, write_trace, chain_seeds)
from .simulate import builtin_spec, generate, write_labeled
from .summaries import (agreement, diagnostics, group_posterior, modal_model, rand_index,
                        write_summaries)


class MissingInput(Exception):
    def __init__(self, path):
        super().__init__(f"input not found: {path}")
        self.path = str(path)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _digest(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _need(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    return path


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _parse_ints(text: Optional[str]):
    if text is None:
        return None
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError("list", f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------- configuration

_FLAG_FIELDS = {"iterations": "iterations", "burn_in": "burn_in", "thin": "thin",
                "initial_g": "initial_g", "g_max": "g_max", "alpha": "alpha", "beta": "beta",
                "pi": "pi", "pi_mode": "pi_mode", "a0": "a0", "b0": "b0"}


def _resolve_config(args, defaults: Optional[dict] = None):
    """Defaults, then the JSON config, then explicit flags, then ``--seed``."""
    doc = dict(defaults or {})
    if getattr(args, "config", None):
        path = _need(args.config)
        with open(path, encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path}: invalid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", f"{path}: expected a JSON object")
        doc.update(loaded)
    for flag, key in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "store_z", False):
        doc["store_z"] = True
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    cfg, priors, _ = config_from_dict(doc)
    return cfg, priors


def _load_data(args):
    return load_dataset(_need(args.data), _parse_ints(getattr(args, "categories", None)))


# ---------------------------------------------------------------- commands

def cmd_simulate(args, manifest) -> list:
    spec = builtin_spec(args.spec, args.n)
    seed = 0 if args.seed is None else args.seed
    labeled = generate(spec, seed)
    manifest["seed"] = seed
    manifest["truth_oracle_rand"] = rand_index(labeled.truth, labeled.oracle)
    return write_labeled(args.out, labeled, spec)


def _chain_job(job):
    data, priors, cfg, mp, seed_seq, out_dir = job
    rng = make_rng(seed_seq) if seed_seq is not None else None
    trace = run(data, priors, cfg, mp, rng=rng)
    write_trace(trace, out_dir, cfg.store_z)
    write_summaries(out_dir, trace, _names(data))
    trace.final_state = None
    return trace


def _names(data):
    return list(data.names) or [f"var{m + 1}" for m in range(data.n_vars)]


def _pooled(traces) -> Trace:
    first = traces[0]
    pooled = Trace(n_vars=first.n_vars, g_max=first.g_max, names=first.names)
    for t in traces:
        pooled.sweeps += t.sweeps
        pooled.log_posterior += t.log_posterior
        pooled.g += t.g
        pooled.included += t.included
        pooled.pi += t.pi
        for k in MOVE_KINDS:
            pooled.accept_counts[k][0] += t.accept_counts[k][0]
            pooled.accept_counts[k][1] += t.accept_counts[k][1]
    return pooled


def cmd_fit(args, manifest) -> list:
    data = _load_data(args)
    manifest["inputs"] = {str(args.data): _sha256(args.data)}
    cfg, priors = _resolve_config(args)
    validate_config(cfg, priors, data)
    mp = MoveParams(p_g=args.p_g, eject_shape_a=args.eject_shape_a)
    manifest.update(seed=cfg.seed, config=config_to_dict(cfg, priors),
                    config_digest=_digest(config_to_dict(cfg, priors)), g_max=priors.g_max)
    out = Path(args.out)
    if args.chains <= 1:
        trace = run(data, priors, cfg, mp)
        written = write_trace(trace, out, cfg.store_z) + write_summaries(out, trace, _names(data))
        traces = [trace]
    else:
        seeds = chain_seeds(cfg.seed, args.chains)
        jobs = [(data, priors, cfg, mp, s, out / f"chain_{i + 1}") for i, s in enumerate(seeds)]
        with ProcessPoolExecutor(max_workers=min(args.chains, args.workers or args.chains)) as ex:
            traces = list(ex.map(_chain_job, jobs))
        written = []
        for i, t in enumerate(traces):
            sub = f"chain_{i + 1}"
            _write_json(out / sub / "manifest.json", _chain_manifest(t, cfg, priors, i + 1))
            written += [f"{sub}/{f}" for f in ("trace.csv", "inclusion.csv", "gprobs.json",
                                                 "coincidence.csv", "diagnostics.json",
                                                 "manifest.json")]
        pooled = _pooled(traces)
        written += write_summaries(out, pooled, _names(data))
        traces = [pooled]
    manifest["accept_counts"] = {k: list(v) for k, v in traces[0].accept_counts.items()}
    manifest["acceptance"] = traces[0].acceptance_rates()
    manifest["chains"] = args.chains
    return written


def _chain_manifest(trace, cfg, priors, index) -> dict:
    return {"command": "fit", "chain": index, "g_max": priors.g_max,
            "accept_counts": {k: list(v) for k, v in trace.accept_counts.items()},
            "acceptance": trace.acceptance_rates(), "error": None}


def _read_manifest(fit_dir) -> dict:
    path = _need(Path(fit_dir) / "manifest.json")
    with open(path) as fh:
        return json.load(fh)


def cmd_posthoc(args, manifest) -> list:
    data = _load_data(args)
    manifest["inputs"] = {str(args.data): _sha256(args.data)}
    cfg, priors = _resolve_config(args)
    if args.fit:
        fit_dir = _need(args.fit)
        fm = _read_manifest(fit_dir)
        trace = read_trace(fit_dir, int(fm.get("g_max", priors.g_max)))
        g, variables = modal_model(trace)
        manifest["selection"] = "modal"
    else:
        if args.g is None:
            raise ConfigError("g", "give --fit or --g")
        g = args.g
        given = _parse_ints(args.variables)
        variables = ([v - 1 for v in given] if given is not None else list(range(data.n_vars)))
        manifest["selection"] = "explicit"
    if not 1 <= g <= priors.g_max:
        raise ConfigError("g", f"G = {g} outside 1..{priors.g_max}")
    if not variables or min(variables) < 0 or max(variables) >= data.n_vars:
        raise ConfigError("variables", f"need a non-empty subset of 1..{data.n_vars}")
    cfg = dataclasses.replace(cfg, initial_g=g, store_z=True)
    validate_config(cfg, priors, data)
    manifest.update(seed=cfg.seed, config=config_to_dict(cfg, priors),
                    config_digest=_digest(config_to_dict(cfg, priors)),
                    g=g, variables=[v + 1 for v in variables])
    res = fit_fixed(data, priors, cfg, g, variables)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _names(data)
    write_params(out / "params.json", res.estimates, names)
    write_clustering(out / "clustering.csv", res.labels, res.probs)
    written = ["params.json", "clustering.csv"]
    comparison = {}
    for key, path in (("truth", args.truth), ("oracle", args.oracle)):
        if path:
            ref = read_clustering(_need(path))
            comparison[key] = {"rand_index": rand_index(res.labels, ref),
                               "agreement": agreement(res.labels, ref)}
    if comparison:
        _write_json(out / "comparison.json", comparison)
        written.append("comparison.json")
    return written


def cmd_summarize(args, manifest) -> list:
    src = _need(args.trace_dir)
    fm = _read_manifest(src)
    if "g_max" not in fm:
        raise TraceFormatError(f"{src}/manifest.json lacks g_max")
    trace = read_trace(src, int(fm["g_max"]), fm.get("accept_counts"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest["inputs"] = {f: _sha256(src / f) for f in ("trace.csv", "inclusion.csv")}
    manifest["g_max"] = fm["g_max"]
    manifest["accept_counts"] = fm.get("accept_counts")
    return write_summaries(out, trace, list(trace.names))


def cmd_rjmcmc(args, manifest) -> list:
    data = _load_data(args)
    manifest["inputs"] = {str(args.data): _sha256(args.data)}
    cfg, priors = _resolve_config(args)
    if not 1 <= args.g <= priors.g_max:
        raise ConfigError("g", f"G = {args.g} outside 1..{priors.g_max}")
    cfg = dataclasses.replace(cfg, initial_g=args.g)
    validate_config(cfg, priors, data)
    manifest.update(seed=cfg.seed, config=config_to_dict(cfg, priors),
                    config_digest=_digest(config_to_dict(cfg, priors)),
                    g=args.g, epsilon=args.epsilon, rule=args.rule, g_max=priors.g_max)
    trace, est = run_fixed_g(data, priors, cfg, args.g, args.epsilon, rule=args.rule)
    out = Path(args.out)
    written = write_trace(trace, out, cfg.store_z)
    inc = trace.inclusion_matrix()
    names = _names(data)
    probs = inc.mean(axis=0) if len(trace) else np.full(data.n_vars, np.nan)
    _write_json(out / "inclusion_probs.json",
                {n: (float(p) if len(trace) else None) for n, p in zip(names, probs)})
    written.append("inclusion_probs.json")
    if len(trace):
        _write_json(out / "diagnostics.json", diagnostics(trace))
        written.append("diagnostics.json")
    if est is not None and est.variables:
        write_params(out / "params.json", est, names)
        written.append("params.json")
    manifest["accept_counts"] = {k: list(v) for k, v in trace.accept_counts.items()}
    manifest["acceptance"] = trace.acceptance_rates()
    return written


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run/prior config")

    def sampling(p):
        p.add_argument("data", help="CSV of 1-based category codes")
        p.add_argument("--categories", help="declared C_m, comma-separated")
        p.add_argument("--iterations", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--g-max", dest="g_max", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--pi", type=float)
        p.add_argument("--pi-mode", dest="pi_mode", choices=("fixed", "hyper"))
        p.add_argument("--a0", type=float)
        p.add_argument("--b0", type=float)
        p.add_argument("--store-z", dest="store_z", action="store_true")

    parser = argparse.ArgumentParser(
        prog="collapsed-lca",
        description="Bayesian latent class analysis with a collapsed trans-dimensional sampler.")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--config", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a benchmark dataset")
    p.add_argument("--spec", required=True, choices=("dr-binary", "dr-nonbinary"))
    p.add_argument("--n", type=int, default=None, help="number of items")

    p = sub.add_parser("fit", parents=[common], help="run the trans-dimensional sampler")
    sampling(p)
    p.add_argument("--initial-g", dest="initial_g", type=int)
    p.add_argument("--p-g", dest="p_g", type=float, default=0.5)
    p.add_argument("--eject-shape-a", dest="eject_shape_a", type=float, default=1.0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("posthoc", parents=[common],
                       help="frozen-(G, variables) run: parameter estimates and clustering")
    sampling(p)
    p.add_argument("--fit", help="fit output directory (modal G and variables)")
    p.add_argument("--g", type=int)
    p.add_argument("--variables", help="1-based clustering variables, comma-separated")
    p.add_argument("--truth", help="reference labels (item,group CSV)")
    p.add_argument("--oracle", help="Bayes-oracle labels (item,group CSV)")

    p = sub.add_parser("summarize", parents=[common], help="recompute summaries from a trace")
    p.add_argument("trace_dir")

    p = sub.add_parser("rjmcmc", parents=[common],
                       help="full-parameter sampler with reversible-jump variable moves")
    sampling(p)
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--rule", choices=ACCEPTANCE_RULES, default="exact")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "posthoc": cmd_posthoc,
            "summarize": cmd_summarize, "rjmcmc": cmd_rjmcmc}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = args.trace_dir if args.command == "summarize" else "lca_out"
    out = Path(args.out)
    manifest = {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
                "seed": args.seed, "inputs": {}, "outputs": [], "error": None}
    start = time.perf_counter()
    code = 0
    try:
        manifest["outputs"] = COMMANDS[args.command](args, manifest)
    except MissingInput as exc:
        manifest["error"] = str(exc)
        code = 2
    except (ConfigError, DatasetError, TraceFormatError, ValueError, OSError) as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = 1
    manifest["wall_time"] = time.perf_counter() - start
    manifest["outputs"] = sorted(set(manifest["outputs"]) | {"manifest.json"})
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "manifest.json", manifest)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
    if manifest["error"]:
        print(f"error: {manifest['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
