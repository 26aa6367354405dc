"""Command-line entry point.

Every command writes its artifacts plus a ``manifest.json`` (input hashes,
resolved configuration and output hashes) into ``--out``.  Settings come
from flags, optionally layered over a JSON ``--config`` file; flags win.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import PohmmError
from .latent import HyperParams
from .pipeline import Dataset, load, load_json, register, window_select, write_csv
from .plackett import (
    ElpdConfig,
    PLConfig,
    PLMixConfig,
    elpd_loo,
    paired_difference,
    pl_curves,
    pl_fit,
    plmix_dic,
    plmix_fit,
    select_D,
)
from .poset import uniform_depth_reference
from .sampler import MCMCConfig, SampleStore, run_chains
from .summaries import (
    authority_curves,
    bf_effects,
    bf_row,
    bf_structure,
    simulate_prior_orders,
    write_consensus,
    write_curves_csv,
    write_depth_csv,
)
from .synth import make_template, simulate

# defaults for every setting a command may read; flags and config files override
DEFAULTS: dict[str, Any] = {
    "data": None,
    "actors": None,
    "lists": None,
    "window": None,
    "K": None,
    "gamma": 1.0 / 6.0,
    "delta": 9.0,
    "noise_mode": "up",
    "beta_constrained": False,
    "no_covariates": False,
    "iterations": 2000,
    "burn_in": None,
    "thin": 10,
    "beta_bandwidth": 0.2,
    "init": "ordered",
    "prior_only": False,
    "fixed_time": False,
    "scaled_proposals": False,
    "debug_every": 0,
    "chains": 1,
    "workers": 1,
    "xi": 0.5,
    "highlight": 0.9,
    "samples": None,
    "s_prime": [2, 3, 4],
    "ess_deflated": False,
    "classes": ["vsp", "bucket"],
    "prior_draws": 4000,
    "n_draws": 2000,
    "reference": False,
    "D": None,
    "D_range": [1, 2, 3],
    "method": "gibbs",
    "models": ["po", "plmix", "uniform"],
    "conservative": False,
    "n_actors": 10,
    "n_years": 20,
    "n_lists": 80,
    "rho": 0.9,
    "theta": 0.9,
    "p": 0.1,
    "beta": None,
    "seed": None,
}

STOCHASTIC = {"simulate-prior", "fit", "bf-structure", "pl-fit", "plmix-fit", "elpd", "synth"}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _resolve(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            extra = json.load(fh)
        unknown = set(extra) - set(DEFAULTS)
        if unknown:
            raise PohmmError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    return cfg


def _dataset(cfg: dict) -> Dataset:
    window = tuple(cfg["window"]) if cfg["window"] else None
    if cfg["actors"] and cfg["lists"]:
        return register(load(cfg["actors"], cfg["lists"]), window)
    if cfg["data"]:
        raw, file_window = load_json(cfg["data"])
        ds = register(raw, file_window)
        return window_select(ds, window) if window else ds
    raise PohmmError("give --data, or --actors and --lists")


def _hyper(cfg: dict, dataset: Dataset | None, K: int | None = None) -> HyperParams:
    if cfg["K"] is not None:
        K = int(cfg["K"])
    elif K is None:
        K = dataset.default_K
    return HyperParams(K=K, gamma=float(cfg["gamma"]), delta=float(cfg["delta"]),
                       beta_constrained=bool(cfg["beta_constrained"]), noise_mode=cfg["noise_mode"],
                       covariates=not cfg["no_covariates"])


def _mcmc(cfg: dict) -> MCMCConfig:
    return MCMCConfig(iterations=int(cfg["iterations"]), burn_in=cfg["burn_in"], thin=int(cfg["thin"]),
                      seed=int(cfg["seed"]), beta_bandwidth=float(cfg["beta_bandwidth"]), init=cfg["init"],
                      prior_only=bool(cfg["prior_only"]), fixed_time=bool(cfg["fixed_time"]),
                      scaled_proposals=bool(cfg["scaled_proposals"]), debug_every=int(cfg["debug_every"]))


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    raise TypeError(type(x).__name__)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    (out / "dataset.json").write_text(ds.to_json())
    write_csv(ds.to_raw(), out / "actors.csv", out / "lists.csv")
    _write_json(out / "stats.json", {"N": ds.N, "M": ds.M, "D": ds.D, "K": ds.default_K, "S": ds.S,
                                     "B": ds.B, "E": ds.E})


def cmd_simulate_prior(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    hyper = _hyper(cfg, ds)
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg["seed"])))
    draws = simulate_prior_orders(ds, hyper, int(cfg["n_draws"]), rng)
    write_depth_csv(draws, out / "prior_depth.csv")
    if cfg["reference"]:
        sizes = sorted({len(draws.actors_by_year[t]) for t in draws.years if len(draws.actors_by_year[t]) <= 6})
        rows = []
        for m in sizes:
            for d, f in uniform_depth_reference(m).items():
                rows.append((m, d, f))
        _write_rows(out / "uniform_depth_reference.csv", ["m", "depth", "fraction"], rows)


def _summarize(store: SampleStore, cfg: dict, out: Path, dataset: Dataset | None = None) -> None:
    write_consensus(store, out / "consensus", float(cfg["xi"]), float(cfg["highlight"]))
    curves = authority_curves(store, dataset)
    write_curves_csv(curves, out / "authority.csv", "authority")
    write_curves_csv(curves, out / "status.csv", "status")
    write_depth_csv(store, out / "depth.csv")


def _prior_recovery(store: SampleStore, hyper: HyperParams) -> dict:
    traces = store.scalar_traces()
    report = {}

    def check(name, values, target, sd_target=None):
        n_eff = _safe_ess(values)
        mean = float(np.mean(values))
        se = float(np.std(values) / np.sqrt(n_eff)) if n_eff > 0 else float("nan")
        report[name] = {"mean": mean, "target": target, "se": se, "ess": n_eff,
                        "pass": bool(abs(mean - target) <= 3 * se)}

    check("rho", traces["rho"], 1.0 / (1.0 + hyper.gamma))
    check("p", traces["p"], 1.0 / (1.0 + hyper.delta))
    if "theta" in traces and not store.meta.get("config", {}).get("fixed_time"):
        check("theta", traces["theta"], 0.5)
    beta = store.arrays()["beta"]
    if beta.size and not hyper.beta_constrained:
        for r in range(beta.shape[1]):
            check(f"beta_{r + 1}", beta[:, r], 0.0)
    report["all_pass"] = all(v["pass"] for v in report.values() if isinstance(v, dict))
    return report


def _safe_ess(x) -> float:
    from .sampler import ess

    try:
        return ess(x)
    except ValueError:
        return float(len(x))


def cmd_fit(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    hyper = _hyper(cfg, ds)
    mcmc = _mcmc(cfg)
    store = run_chains(ds, hyper, mcmc, int(cfg["chains"]), int(cfg["workers"]))
    store.write_jsonl(out / "samples.jsonl")
    store.write_trace_csv(out / "trace.csv")
    _write_json(out / "ess.json", {"ess": store.ess_report(), "accept": store.accept,
                                   "n_samples": len(store)})
    if mcmc.prior_only:
        _write_json(out / "prior_recovery.json", _prior_recovery(store, hyper))
    _summarize(store, cfg, out, ds)


def cmd_summarize(cfg: dict, out: Path) -> None:
    if not cfg["samples"]:
        raise PohmmError("--samples is required")
    _summarize(SampleStore.read_jsonl(cfg["samples"]), cfg, out)


def cmd_bf_effects(cfg: dict, out: Path) -> None:
    if not cfg["samples"]:
        raise PohmmError("--samples is required")
    store = SampleStore.read_jsonl(cfg["samples"])
    rows = []
    for s in cfg["s_prime"]:
        bf = bf_effects(store, int(s), bool(cfg["ess_deflated"]))
        rows.append((int(s), bf.fraction, bf.estimate, bf.se, bf.ess, bf.n, int(bf.zero_count)))
    _write_rows(out / "bf_effects.csv",
                ["s_prime", "posterior_fraction", "bayes_factor", "se", "ess", "n", "zero_count"], rows)


def cmd_bf_structure(cfg: dict, out: Path) -> None:
    if not cfg["samples"]:
        raise PohmmError("--samples is required")
    store = SampleStore.read_jsonl(cfg["samples"])
    ds = _dataset(cfg)
    hyper = _hyper(cfg, ds, K=store.K)
    window = tuple(cfg["window"]) if cfg["window"] else (ds.B, ds.E)
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg["seed"])))
    prior = simulate_prior_orders(ds, hyper, int(cfg["prior_draws"]), rng, window=window)
    rows = []
    for cls in cfg["classes"]:
        row = bf_row(bf_structure(store, prior, cls, window, bool(cfg["ess_deflated"])))
        row["window"] = f"{window[0]}-{window[1]}"
        rows.append(row)
    header = ["class", "window", "prior_fraction", "posterior_fraction", "bayes_factor", "se", "ess", "n",
              "zero_count"]
    _write_rows(out / "bf_structure.csv", header, ([r[k] for k in header] for r in rows))


def cmd_pl_fit(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    pcfg = PLConfig(iterations=int(cfg["iterations"]), burn_in=cfg["burn_in"], thin=int(cfg["thin"]),
                    seed=int(cfg["seed"]), prior_only=bool(cfg["prior_only"]))
    samples = pl_fit(ds, pcfg)
    _write_rows(out / "pl_strength.csv", ["year", "actor", "mean", "sd"], pl_curves(samples, ds))
    header = ["sample", "theta", "sigma", "loglik"] + [f"beta_{r + 1}" for r in range(samples.beta.shape[1])]
    _write_rows(out / "pl_trace.csv", header,
                ([k, samples.theta[k], samples.sigma[k], samples.loglik[k], *samples.beta[k]]
                 for k in range(len(samples.theta))))
    _write_json(out / "pl_ess.json", {"ess": samples.ess_report(), "accept": samples.accept})


def _mix_cfg(cfg: dict) -> PLMixConfig:
    return PLMixConfig(iterations=int(cfg["iterations"]), burn_in=cfg["burn_in"], thin=int(cfg["thin"]),
                       seed=int(cfg["seed"]), method=cfg["method"])


def cmd_plmix_fit(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    mcfg = _mix_cfg(cfg)
    if cfg["D"]:
        D, scores = int(cfg["D"]), None
    else:
        D, scores = select_D(ds, [int(d) for d in cfg["D_range"]], mcfg)
    samples = plmix_fit(ds, D, mcfg)
    value, p_d = plmix_dic(samples, ds)
    order = np.argsort(-samples.omega.mean(axis=0), kind="stable")
    _write_json(out / "plmix.json", {
        "D": D,
        "dic": value,
        "p_d": p_d,
        "dic_by_D": scores,
        "actors": list(samples.actors),
        "weights": samples.omega.mean(axis=0)[order],
        "log_strength_mean": samples.lam.mean(axis=0)[order],
    })


def cmd_elpd(cfg: dict, out: Path) -> None:
    ds = _dataset(cfg)
    hyper = _hyper(cfg, ds)
    ecfg = ElpdConfig(
        po=MCMCConfig(iterations=int(cfg["iterations"]), burn_in=cfg["burn_in"], thin=int(cfg["thin"]),
                      beta_bandwidth=float(cfg["beta_bandwidth"]), init=cfg["init"]),
        po_hyper=hyper,
        mix=_mix_cfg(cfg),
        D=int(cfg["D"]) if cfg["D"] else None,
        D_range=tuple(int(d) for d in cfg["D_range"]),
        seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
        conservative=bool(cfg["conservative"]),
    )
    results = {m: elpd_loo(m, ds, ecfg) for m in cfg["models"]}
    period = f"{ds.B}-{ds.E}"
    rows = [(period, r.model, r.n_lists, "" if r.D is None else r.D, r.estimate, r.se) for r in results.values()]
    _write_rows(out / "elpd.csv", ["period", "model", "n_lists", "D", "elpd", "se"], rows)
    diffs = {}
    if "po" in results and "plmix" in results:
        d, se = paired_difference(results["po"], results["plmix"])
        diffs["po_minus_plmix"] = {"difference": d, "se": se}
    _write_json(out / "elpd_terms.json", {"terms": {m: r.terms for m, r in results.items()}, "paired": diffs})


def cmd_synth(cfg: dict, out: Path) -> None:
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg["seed"])))
    if cfg["data"] or (cfg["actors"] and cfg["lists"]):
        template = _dataset(cfg)
    else:
        template = make_template(int(cfg["n_actors"]), int(cfg["n_years"]), int(cfg["n_lists"]), rng)
    K = int(cfg["K"]) if cfg["K"] is not None else template.default_K
    beta = cfg["beta"]
    if beta is not None:
        beta = [float(b) for b in beta][: template.S]
        beta += [beta[-1]] * (template.S - len(beta))
    data, truth = simulate(template, rng, rho=float(cfg["rho"]), theta=float(cfg["theta"]), p=float(cfg["p"]),
                           K=K, beta=beta, mode=cfg["noise_mode"])
    write_csv(data.to_raw(), out / "actors.csv", out / "lists.csv")
    truth.write(out / "truth.json")


COMMANDS: dict[str, Callable[[dict, Path], None]] = {
    "ingest": cmd_ingest,
    "simulate-prior": cmd_simulate_prior,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "bf-effects": cmd_bf_effects,
    "bf-structure": cmd_bf_structure,
    "pl-fit": cmd_pl_fit,
    "plmix-fit": cmd_plmix_fit,
    "elpd": cmd_elpd,
    "synth": cmd_synth,
}


# ---------------------------------------------------------------------------
# parser


def _add_data(p):
    p.add_argument("--data", help="JSON dataset file")
    p.add_argument("--actors", help="actors CSV")
    p.add_argument("--lists", help="lists CSV")
    p.add_argument("--window", type=int, nargs=2, metavar=("FIRST", "LAST"))


def _add_hyper(p):
    p.add_argument("--K", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--noise-mode", choices=["up", "down"])
    p.add_argument("--beta-constrained", action="store_true", default=None)
    p.add_argument("--no-covariates", action="store_true", default=None)


def _add_mcmc(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)


def _add_summary(p):
    p.add_argument("--xi", type=float, help="consensus support threshold")
    p.add_argument("--highlight", type=float, help="support at which consensus edges are highlighted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pohmm", description="Time-evolving partial orders from rank lists")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON file of settings; flags take precedence")
        if name in STOCHASTIC:
            p.add_argument("--seed", type=int, required=True)
        return p

    p = command("ingest", "register raw records into a dataset")
    _add_data(p)

    p = command("simulate-prior", "prior depth histograms per year")
    _add_data(p)
    _add_hyper(p)
    p.add_argument("--n-draws", type=int)
    p.add_argument("--reference", action="store_true", default=None,
                   help="also write the uniform-poset depth law for years with at most 6 actors")

    p = command("fit", "run the hierarchy sampler")
    _add_data(p)
    _add_hyper(p)
    _add_mcmc(p)
    _add_summary(p)
    p.add_argument("--beta-bandwidth", type=float)
    p.add_argument("--init", choices=["ordered", "disordered"])
    p.add_argument("--prior-only", action="store_true", default=None)
    p.add_argument("--fixed-time", action="store_true", default=None)
    p.add_argument("--scaled-proposals", action="store_true", default=None)
    p.add_argument("--debug-every", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--workers", type=int)

    p = command("summarize", "consensus orders, curves and depths from saved samples")
    p.add_argument("--samples")
    _add_summary(p)

    p = command("bf-effects", "Bayes factors for decreasing seniority effects")
    p.add_argument("--samples")
    p.add_argument("--s-prime", type=int, nargs="+")
    p.add_argument("--ess-deflated", action="store_true", default=None)

    p = command("bf-structure", "Bayes factors for VSP and bucket structure in a window")
    p.add_argument("--samples")
    _add_data(p)
    _add_hyper(p)
    p.add_argument("--classes", nargs="+", choices=["vsp", "bucket"])
    p.add_argument("--prior-draws", type=int)
    p.add_argument("--ess-deflated", action="store_true", default=None)

    p = command("pl-fit", "Plackett-Luce time-series baseline")
    _add_data(p)
    _add_mcmc(p)
    p.add_argument("--prior-only", action="store_true", default=None)

    p = command("plmix-fit", "Plackett-Luce mixture for a window")
    _add_data(p)
    _add_mcmc(p)
    p.add_argument("--D", type=int)
    p.add_argument("--D-range", type=int, nargs="+")
    p.add_argument("--method", choices=["gibbs", "mh"])

    p = command("elpd", "leave-one-list-out predictive comparison")
    _add_data(p)
    _add_hyper(p)
    _add_mcmc(p)
    p.add_argument("--beta-bandwidth", type=float)
    p.add_argument("--init", choices=["ordered", "disordered"])
    p.add_argument("--models", nargs="+", choices=["po", "plmix", "uniform"])
    p.add_argument("--D", type=int)
    p.add_argument("--D-range", type=int, nargs="+")
    p.add_argument("--method", choices=["gibbs", "mh"])
    p.add_argument("--workers", type=int)
    p.add_argument("--conservative", action="store_true", default=None)

    p = command("synth", "simulate a dataset with known parameters")
    _add_data(p)
    p.add_argument("--n-actors", type=int)
    p.add_argument("--n-years", type=int)
    p.add_argument("--n-lists", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--beta", type=float, nargs="+")
    p.add_argument("--noise-mode", choices=["up", "down"])
    return parser


def _input_hashes(cfg: dict) -> dict[str, str]:
    out = {}
    for key in ("data", "actors", "lists", "samples"):
        if cfg.get(key):
            out[key] = _sha256(Path(cfg[key]))
    return out


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = _resolve(args)
        for key in ("data", "actors", "lists", "samples"):
            if cfg.get(key) and not Path(cfg[key]).exists():
                raise PohmmError(f"{key} file not found: {cfg[key]}")
        inputs = _input_hashes(cfg)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except (PohmmError, ValueError, KeyError, OSError) as exc:
        print(f"pohmm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    outputs = {str(p.relative_to(out)): _sha256(p) for p in sorted(out.rglob("*"))
               if p.is_file() and p.name != "manifest.json"}
    _write_json(out / "manifest.json", {"command": args.command, "version": __version__,
                                        "config": cfg, "inputs": inputs, "outputs": outputs})
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
