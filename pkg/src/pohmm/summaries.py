"""Posterior summaries: edge support, consensus orders, centred authority
curves, depth histograms and Bayes factors for ordered effects and for
order classes."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import factorial, sqrt
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InactiveActor, ZeroPriorMass
from .latent import HyperParams, dominance, var1_sample
from .pipeline import Dataset
from .poset import closure_matrix, depth_matrix, is_bucket_matrix, is_vsp_matrix
from .sampler import SampleStore, ess

CLASS_TESTS = {"vsp": is_vsp_matrix, "bucket": is_bucket_matrix}


@dataclass
class ConsensusOrder:
    year: int
    actors: tuple[int, ...]
    support: dict[tuple[int, int], float]
    threshold: float
    highlight: float
    acyclic: bool
    reduction: set[tuple[int, int]] | None = None

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "actors": list(self.actors),
            "threshold": self.threshold,
            "highlight": self.highlight,
            "acyclic": self.acyclic,
            "edges": [[a, b, s] for (a, b), s in sorted(self.support.items())],
            "reduction": None if self.reduction is None else [list(e) for e in sorted(self.reduction)],
        }

    def to_dot(self) -> str:
        lines = [f"digraph year_{self.year} {{"]
        for a in self.actors:
            lines.append(f"  {a};")
        shown = self.reduction if self.reduction is not None else set(self.support)
        for a, b in sorted(shown):
            s = self.support[(a, b)]
            style = ' color="red", penwidth=2' if s >= self.highlight else ""
            lines.append(f'  {a} -> {b} [label="{s:.2f}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass
class AuthorityCurve:
    actor: int
    years: list[int]
    mean: np.ndarray
    sd: np.ndarray
    status_mean: np.ndarray
    status_sd: np.ndarray


@dataclass
class BayesFactor:
    estimate: float
    se: float
    fraction: float
    count: int
    n: int
    ess: float
    zero_count: bool = False
    prior_fraction: float | None = None
    extra: dict = field(default_factory=dict)


def _pair_index(store, t: int, i: int, j: int) -> tuple[int, int]:
    actors = store.actors_by_year.get(t)
    if actors is None or i not in actors or j not in actors:
        raise InactiveActor(f"actors {i}, {j} not both active in {t}")
    return actors.index(i), actors.index(j)


def edge_support(store: SampleStore, t: int, i: int, j: int) -> float:
    a, b = _pair_index(store, t, i, j)
    return float(store.edge_array(t)[:, a, b].mean())


def consensus(store: SampleStore, t: int, xi: float = 0.5, highlight: float = 0.9) -> ConsensusOrder:
    if not (0.0 < xi <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    actors = store.actors_by_year[t]
    xi_hat = store.edge_array(t).mean(axis=0)
    keep = xi_hat >= xi
    support = {(actors[a], actors[b]): float(xi_hat[a, b]) for a, b in zip(*np.nonzero(keep))}
    C = closure_matrix(keep)
    acyclic = not np.diagonal(C).any()
    reduction = None
    if acyclic:
        implied = (C.astype(int) @ C.astype(int)) > 0
        R = keep & ~implied
        reduction = {(actors[a], actors[b]) for a, b in zip(*np.nonzero(R))}
    return ConsensusOrder(t, actors, support, xi, highlight, acyclic, reduction)


def _centred_by_year(values: np.ndarray, site_year: np.ndarray) -> np.ndarray:
    out = values.copy()
    for t in np.unique(site_year):
        cols = site_year == t
        out[:, cols] -= values[:, cols].mean(axis=1, keepdims=True)
    return out


def authority_curves(store: SampleStore, dataset: Dataset | None = None) -> list[AuthorityCurve]:
    """Per-actor year-centred mean authority and status over the samples."""
    arr = store.arrays()
    ubar = _centred_by_year(arr["ubar"], store.site_year)
    zraw = arr["ubar"] + (arr["beta"][:, store.site_level] if store.S else 0.0)
    zbar = _centred_by_year(zraw, store.site_year)
    curves = []
    for a in sorted(set(store.site_actor.tolist())):
        cols = np.nonzero(store.site_actor == a)[0]
        curves.append(
            AuthorityCurve(
                int(a),
                [int(t) for t in store.site_year[cols]],
                ubar[:, cols].mean(axis=0),
                ubar[:, cols].std(axis=0),
                zbar[:, cols].mean(axis=0),
                zbar[:, cols].std(axis=0),
            )
        )
    return curves


def depth_samples(store, t: int) -> np.ndarray:
    return np.array([depth_matrix(A) for A in store.edges[t]], dtype=int)


def depth_distribution(store, t: int) -> dict[int, float]:
    d = depth_samples(store, t)
    values, counts = np.unique(d, return_counts=True)
    return {int(v): float(c) / d.size for v, c in zip(values, counts)}


def bf_effects(store: SampleStore, S_prime: int, ess_deflated: bool = False) -> BayesFactor:
    """Ratio of posterior to prior probability that the first S' effects are decreasing."""
    beta = store.arrays()["beta"]
    if not (2 <= S_prime <= store.S):
        raise ValueError(f"S' must lie in [2, {store.S}]")
    ind = np.all(np.diff(beta[:, :S_prime], axis=1) < 0, axis=1).astype(float)
    return _bf_from_indicator(ind, 1.0 / factorial(S_prime), ess_deflated)


def _bf_from_indicator(ind: np.ndarray, prior_prob: float, ess_deflated: bool,
                       prior_se: float = 0.0) -> BayesFactor:
    n = ind.size
    frac = float(ind.mean())
    count = int(ind.sum())
    n_eff = ess(ind) if (n >= 10 and 0 < count < n) else float(n)
    denom = n_eff if ess_deflated else n
    post_se = sqrt(frac * (1.0 - frac) / denom) if denom > 0 else float("nan")
    est = frac / prior_prob
    se = sqrt((post_se / prior_prob) ** 2 + (frac * prior_se / prior_prob ** 2) ** 2)
    return BayesFactor(est, se if count else float("nan"), frac, count, n, n_eff, zero_count=(count == 0))


def class_indicator(samples, cls: str, window: Sequence[int] | None = None) -> np.ndarray:
    """1 for each draw whose order is in the class in every year of the window."""
    test = CLASS_TESTS[cls]
    years = [t for t in samples.years if window is None or window[0] <= t <= window[1]]
    n = len(samples.edges[years[0]]) if years else 0
    out = np.ones(n, dtype=float)
    for k in range(n):
        for t in years:
            if not test(samples.edges[t][k]):
                out[k] = 0.0
                break
    return out


def bf_structure(post_samples, prior_samples, cls: str, window: Sequence[int] | None = None,
                 ess_deflated: bool = False) -> BayesFactor:
    post = class_indicator(post_samples, cls, window)
    prior = class_indicator(prior_samples, cls, window)
    prior_frac = float(prior.mean()) if prior.size else 0.0
    if prior_frac == 0.0:
        raise ZeroPriorMass(f"no prior draw is in class {cls!r}")
    prior_n = ess(prior) if (prior.size >= 10 and 0 < prior.sum() < prior.size and ess_deflated) else prior.size
    prior_se = sqrt(prior_frac * (1.0 - prior_frac) / prior_n)
    bf = _bf_from_indicator(post, prior_frac, ess_deflated, prior_se)
    bf.prior_fraction = prior_frac
    bf.extra = {"class": cls, "window": list(window) if window else None, "prior_n": int(prior.size)}
    return bf


# ---------------------------------------------------------------------------
# prior simulation


class OrderSamples:
    """Per-year order draws in the same shape as a SampleStore's edge lists."""

    def __init__(self, years: Sequence[int], actors_by_year: dict[int, tuple[int, ...]]):
        self.years = tuple(years)
        self.actors_by_year = actors_by_year
        self.edges: dict[int, list[np.ndarray]] = {t: [] for t in self.years}

    def __len__(self) -> int:
        return len(self.edges[self.years[0]]) if self.years else 0


def simulate_prior_orders(dataset: Dataset, hyper: HyperParams, n: int, rng: np.random.Generator,
                          window: Sequence[int] | None = None, rho: float | None = None) -> OrderSamples:
    """Independent draws of the per-year orders from the prior."""
    lo, hi = (dataset.B, dataset.E) if window is None else (int(window[0]), int(window[1]))
    years = [t for t in dataset.years if lo <= t <= hi]
    out = OrderSamples(years, {t: dataset.active[t] for t in years})
    S = dataset.S if hyper.covariates else 0
    spans = {}
    for a in dataset.actor_ids:
        b, e = dataset.window_of(a)
        b, e = max(b, lo), min(e, hi)
        if b <= e:
            spans[a] = (b, e)
    for _ in range(n):
        r = min(float(rng.beta(1.0, hyper.gamma)), 1.0 - 1e-12) if rho is None else rho
        th = float(rng.random())
        beta = rng.standard_normal(S)
        if hyper.beta_constrained and S:
            beta = np.sort(beta)[::-1]
        U = {a: var1_sample(b, e, r, th, rng, hyper.K) for a, (b, e) in spans.items()}
        for t in years:
            actors = dataset.active[t]
            Z = np.array([U[a][t - spans[a][0]] for a in actors]).reshape(len(actors), hyper.K)
            if S:
                Z = Z + beta[[dataset.seniority[(t, a)] - 1 for a in actors]][:, None]
            out.edges[t].append(dominance(Z))
    return out


# ---------------------------------------------------------------------------
# writers


def write_curves_csv(curves: Iterable[AuthorityCurve], path: str | Path, kind: str = "authority"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "actor", "mean", "sd"])
        rows = []
        for c in curves:
            mean, sd = (c.mean, c.sd) if kind == "authority" else (c.status_mean, c.status_sd)
            for t, m, s in zip(c.years, mean, sd):
                rows.append((t, c.actor, repr(float(m)), repr(float(s))))
        for row in sorted(rows, key=lambda r: (r[0], r[1])):
            w.writerow(row)


def write_depth_csv(samples, path: str | Path, years: Sequence[int] | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "m", "depth", "count", "fraction"])
        for t in years or samples.years:
            d = depth_samples(samples, t)
            if d.size == 0:
                continue
            values, counts = np.unique(d, return_counts=True)
            for v, c in zip(values, counts):
                w.writerow([t, len(samples.actors_by_year[t]), int(v), int(c), repr(float(c) / d.size)])


def write_consensus(store: SampleStore, outdir: str | Path, xi: float = 0.5, highlight: float = 0.9):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {}
    for t in store.years:
        if len(store.actors_by_year[t]) == 0:
            continue
        c = consensus(store, t, xi, highlight)
        doc[str(t)] = c.to_dict()
        (outdir / f"consensus_{t}.dot").write_text(c.to_dot())
    (outdir / "consensus.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def bf_row(bf: BayesFactor) -> dict:
    return {
        "class": bf.extra.get("class"),
        "window": bf.extra.get("window"),
        "prior_fraction": bf.prior_fraction,
        "posterior_fraction": bf.fraction,
        "bayes_factor": bf.estimate,
        "se": bf.se,
        "ess": bf.ess,
        "n": bf.n,
        "zero_count": int(bf.zero_count),
    }
