"""Synthetic datasets drawn from the generative model with known parameters."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .latent import dominance, var1_sample
from .obsmodel import NoiseModel, sample_list
from .pipeline import ActorRecord, Dataset, ListRecord, RawRecords
from .poset import PartialOrder, depth


@dataclass
class Truth:
    rho: float
    theta: float
    p: float
    beta: np.ndarray
    K: int
    mode: str
    U: dict[int, np.ndarray]
    tau: dict[int, int]
    orders: dict[int, PartialOrder]

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "theta": self.theta,
            "p": self.p,
            "beta": [float(b) for b in self.beta],
            "K": self.K,
            "noise_mode": self.mode,
            "tau": {str(k): v for k, v in sorted(self.tau.items())},
            "orders": {str(t): H.to_dict() for t, H in sorted(self.orders.items())},
            "depth": {str(t): depth(H) for t, H in sorted(self.orders.items())},
            "m": {str(t): H.m for t, H in sorted(self.orders.items())},
        }

    def write(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")


def make_template(n_actors: int, n_years: int, n_lists: int, rng: np.random.Generator,
                  start: int = 0, min_len: int = 2, max_len: int | None = None,
                  max_width: int = 2, min_tenure: int | None = None) -> Dataset:
    """Random actor windows and list memberships with every actor in at least two lists."""
    E = start + n_years - 1
    min_tenure = min_tenure or max(2, n_years // 3)
    actors = []
    for j in range(n_actors):
        b = start + int(rng.integers(-n_years // 4, n_years - min_tenure + 1))
        length = int(rng.integers(min_tenure, n_years + 1))
        e = max(b + length - 1, start)
        actors.append(ActorRecord(j + 1, f"actor{j + 1}", "", b, e))
    years = [t for t in range(start, E + 1) if sum(a.begin <= t <= a.end for a in actors) >= 2]
    if not years:
        raise ValueError("template has no year with two active actors")
    lists = []
    lid = 1
    while len(lists) < n_lists:
        t = int(rng.choice(years))
        lo = max(start, t - int(rng.integers(0, max_width + 1)))
        hi = min(E, t + int(rng.integers(0, max_width + 1)))
        pool = [a.id for a in actors if a.begin <= lo and hi <= a.end]
        if len(pool) < 2:
            continue
        top = len(pool) if max_len is None else min(max_len, len(pool))
        n = int(rng.integers(min(min_len, top), top + 1))
        members = tuple(int(x) for x in rng.choice(pool, size=n, replace=False))
        lists.append(ListRecord(lid, lo, hi, members))
        lid += 1
    ds = Dataset(actors, lists, start, E)
    counts = {a: 0 for a in ds.actor_ids}
    for r in lists:
        for a in r.actors:
            counts[a] += 1
    used = [a for a in actors if counts[a.id] >= 2]
    kept = [r for r in lists if all(counts[a] >= 2 for a in r.actors)]
    return Dataset(used, kept, start, E)


def simulate(template: Dataset, rng: np.random.Generator, *, rho: float, theta: float, p: float,
             K: int, beta: Sequence[float] | Callable[[int], float] | None = None,
             mode: str = "up") -> tuple[Dataset, Truth]:
    """Resample list orders on a template's memberships and date intervals."""
    if callable(beta):
        beta = np.array([beta(r) for r in range(1, template.S + 1)], dtype=float)
    beta = np.zeros(0) if beta is None else np.asarray(beta, dtype=float)
    U = {}
    for a in template.actor_ids:
        b, e = template.window_of(a)
        U[a] = var1_sample(b, e, rho, theta, rng, K)
    orders = {}
    for t in template.years:
        actors = template.active[t]
        rows = [U[a][t - template.window_of(a)[0]] for a in actors]
        Z = np.array(rows).reshape(len(actors), K)
        if beta.size:
            Z = Z + beta[[template.seniority[(t, a)] - 1 for a in actors]][:, None]
        A = dominance(Z)
        orders[t] = PartialOrder(actors, ((actors[i], actors[j]) for i, j in zip(*np.nonzero(A))), check=False)
    noise = NoiseModel(mode, p)
    tau = {}
    lists = []
    for rec in template.lists:
        t = int(rng.integers(rec.tau_minus, rec.tau_plus + 1))
        tau[rec.list_id] = t
        H = orders[t]
        sub = PartialOrder(rec.actors, ((a, b) for a, b in H.edges if a in rec.actors and b in rec.actors), check=False)
        y = sample_list(sub, noise, rng)
        lists.append(ListRecord(rec.list_id, rec.tau_minus, rec.tau_plus, y))
    data = Dataset(template.actors.values(), lists, template.B, template.E)
    truth = Truth(rho, theta, p, beta, K, mode, U, tau, orders)
    return data, truth


def as_raw(dataset: Dataset) -> RawRecords:
    return dataset.to_raw()
