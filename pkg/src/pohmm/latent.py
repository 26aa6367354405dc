"""Latent status matrices and the prior over them.

Each active actor carries a K-vector of authority values per year that
follows a stationary vector autoregression.  Adding the actor's covariate
effect to every component gives the status row; an actor sits above another
when its status is strictly larger in every component.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log, pi
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, MissingAuthority, MissingCovariate
from .poset import PartialOrder, bucket_partition, linear_extensions

LOG_2PI = log(2 * pi)


@dataclass
class HyperParams:
    K: int = 1
    gamma: float = 1.0 / 6.0
    delta: float = 9.0
    beta_constrained: bool = False
    noise_mode: str = "up"
    covariates: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be at least 1")
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")
        if self.delta < 1:
            raise DomainError("delta must be at least 1")
        if self.noise_mode not in ("up", "down"):
            raise DomainError("noise_mode must be 'up' or 'down'")


@dataclass
class StatusMatrix:
    year: int
    actors: tuple[int, ...]
    Z: np.ndarray


@dataclass
class LatentParams:
    """Full parameter tuple in actor-keyed form (used for reference computations)."""

    rho: float
    theta: float
    U: dict[int, np.ndarray]
    beta: np.ndarray
    tau: dict[int, int]
    p: float
    windows: dict[int, tuple[int, int]] = field(default_factory=dict)


def _check_rho(rho: float) -> None:
    if not (0.0 <= rho < 1.0):
        raise DomainError(f"rho={rho} outside [0, 1)")


def _check_theta(theta: float) -> None:
    if not (0.0 <= theta <= 1.0):
        raise DomainError(f"theta={theta} outside [0, 1]")


def sigma_rho(rho: float, K: int) -> np.ndarray:
    _check_rho(rho)
    if K < 1:
        raise DomainError("K must be at least 1")
    S = np.full((K, K), float(rho))
    np.fill_diagonal(S, 1.0)
    return S


def sigma_logdet(rho: float, K: int) -> float:
    return (K - 1) * log(1.0 - rho) + log(1.0 + (K - 1) * rho)


def sigma_quad(X: np.ndarray, rho: float) -> np.ndarray:
    """Row-wise x' inv(Sigma(rho)) x using the closed-form inverse."""
    X = np.atleast_2d(X)
    K = X.shape[1]
    sq = np.einsum("ij,ij->i", X, X)
    s = X.sum(axis=1)
    return (sq - rho / (1.0 + (K - 1) * rho) * s * s) / (1.0 - rho)


def gauss_logpdf_rows(X: np.ndarray, rho: float, scale: float | np.ndarray = 1.0) -> np.ndarray:
    """log N(x; 0, scale * Sigma(rho)) for each row of X."""
    X = np.atleast_2d(X)
    K = X.shape[1]
    scale = np.asarray(scale, dtype=float)
    return -0.5 * (K * LOG_2PI + K * np.log(scale) + sigma_logdet(rho, K) + sigma_quad(X, rho) / scale)


def var1_logpdf(U_j: np.ndarray, rho: float, theta: float) -> float:
    """Log density of one actor's authority series (rows are consecutive years)."""
    _check_rho(rho)
    _check_theta(theta)
    U_j = np.atleast_2d(np.asarray(U_j, dtype=float))
    if not np.isfinite(U_j).all():
        raise DomainError("authority values must be finite")
    if theta >= 1.0:
        return float("-inf")
    total = gauss_logpdf_rows(U_j[:1], rho, 1.0 / (1.0 - theta * theta)).sum()
    if U_j.shape[0] > 1:
        total += gauss_logpdf_rows(U_j[1:] - theta * U_j[:-1], rho).sum()
    return float(total)


def var1_sample(b: int, e: int, rho: float, theta: float, rng: np.random.Generator, K: int = 1) -> np.ndarray:
    """Draw a stationary series of K-vectors for years b..e inclusive."""
    if b > e:
        raise DomainError("window start after window end")
    _check_rho(rho)
    _check_theta(theta)
    if theta >= 1.0:
        raise DomainError("theta=1 has no stationary law")
    L = np.linalg.cholesky(sigma_rho(rho, K))
    n = e - b + 1
    eps = rng.standard_normal((n, K)) @ L.T
    out = np.empty((n, K))
    out[0] = eps[0] / np.sqrt(1.0 - theta * theta)
    for t in range(1, n):
        out[t] = theta * out[t - 1] + eps[t]
    return out


def dominance(Z: np.ndarray) -> np.ndarray:
    """Boolean matrix with entry (i, j) set when row i strictly beats row j everywhere."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] == 0:
        return np.zeros((0, 0), dtype=bool)
    return (Z[:, None, :] > Z[None, :, :]).all(axis=2)


def status_from(U: Mapping[int, tuple[int, np.ndarray]], beta: Sequence[float],
                s: Mapping[tuple[int, int], int], t: int, actors: Sequence[int]) -> StatusMatrix:
    """Status rows for the given active actors at year t.

    ``U`` maps actor -> (first year, series array); ``s`` maps (year, actor)
    to a 1-based covariate level.  An empty ``beta`` means no covariate lift.
    """
    beta = np.asarray(beta, dtype=float)
    rows = []
    for a in actors:
        if a not in U:
            raise MissingAuthority(a)
        b0, series = U[a]
        k = t - b0
        if k < 0 or k >= len(series):
            raise MissingAuthority((a, t))
        row = np.asarray(series[k], dtype=float)
        if beta.size:
            level = s.get((t, a))
            if level is None or not (1 <= level <= beta.size):
                raise MissingCovariate((t, a))
            row = row + beta[level - 1]
        rows.append(row)
    Z = np.array(rows, dtype=float).reshape(len(actors), -1)
    return StatusMatrix(t, tuple(actors), Z)


def order_from_status(Z: StatusMatrix) -> PartialOrder:
    actors = list(Z.actors)
    A = dominance(Z.Z)
    # the sorted ground in PartialOrder may differ from the row order
    return PartialOrder(actors, ((actors[i], actors[j]) for i, j in zip(*np.nonzero(A))), check=False)


def beta1_logpdf(x: float, shape: float) -> float:
    """Log density of Beta(1, shape) at x."""
    if not (0.0 <= x < 1.0):
        return float("-inf")
    return log(shape) + (shape - 1.0) * log(1.0 - x)


def effects_logprior(beta: np.ndarray, constrained: bool) -> float:
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0:
        return 0.0
    if constrained and np.any(np.diff(beta) >= 0):
        return float("-inf")
    return float(-0.5 * (beta.size * LOG_2PI + beta @ beta))


def log_prior(params: LatentParams, hyper: HyperParams, dataset) -> float:
    """Joint log prior of all parameters for a registered dataset."""
    lp = beta1_logpdf(params.rho, hyper.gamma)
    if not (0.0 <= params.theta <= 1.0):
        return float("-inf")
    lp += beta1_logpdf(params.p, hyper.delta) if params.p < 1.0 else float("-inf")
    if not np.isfinite(lp):
        return float("-inf")
    for a in dataset.actor_ids:
        lp += var1_logpdf(params.U[a], params.rho, params.theta)
    if hyper.covariates:
        lp += effects_logprior(params.beta, hyper.beta_constrained)
    for rec in dataset.lists:
        t = params.tau[rec.list_id]
        if not (rec.tau_minus <= t <= rec.tau_plus):
            return float("-inf")
        lp -= log(rec.tau_plus - rec.tau_minus + 1)
    return float(lp)


def represent(H: PartialOrder, K: int) -> np.ndarray | None:
    """Status matrix with K columns whose dominance order is ``H``, or None.

    One column can only produce bucket orders.  With more columns, each
    column ranks the actors along a linear extension, and the search looks
    for K extensions that between them reverse every incomparable pair.
    Rows follow ``H.ground``.
    """
    m = H.m
    if K < 1:
        raise DomainError("K must be at least 1")
    buckets = bucket_partition(H)
    if buckets is not None:
        level = {a: len(buckets) - r for r, b in enumerate(buckets) for a in b}
        return np.tile(np.array([[level[a]] for a in H.ground], dtype=float), (1, K))
    if K == 1:
        return None
    A = H.matrix()
    pairs = [(i, j) for i in range(m) for j in range(m) if i != j and not A[i, j] and not A[j, i]]
    bit = {pr: 1 << n for n, pr in enumerate(pairs)}
    full = (1 << len(pairs)) - 1
    exts = []
    for L in linear_extensions(H):
        pos = [0] * m
        for r, a in enumerate(L):
            pos[H.index(a)] = r
        covered = 0
        for (i, j), b in bit.items():
            if pos[i] < pos[j]:
                covered |= b
        exts.append((covered, pos))
    # distinct coverage sets only
    by_cover: dict[int, list[int]] = {}
    for covered, pos in exts:
        by_cover.setdefault(covered, pos)
    covers = list(by_cover.items())
    failed: set[tuple[int, int]] = set()

    def search(done: int, left: int) -> list[list[int]] | None:
        if done == full:
            return []
        if left == 0 or (done, left) in failed:
            return None
        missing = full & ~done
        target = missing & -missing
        for covered, pos in covers:
            if covered & target:
                rest = search(done | covered, left - 1)
                if rest is not None:
                    return [pos] + rest
        failed.add((done, left))
        return None

    chosen = search(0, K)
    if chosen is None:
        return None
    while len(chosen) < K:
        chosen.append(chosen[-1])
    # earlier position in an extension means higher status
    return np.array([[m - pos[k] for pos in chosen] for k in range(m)], dtype=float)

