"""Likelihoods for rank lists given a partial order, and the matching sampler.

A list is built one position at a time.  At each step, with probability p
the next entry is a uniform pick from the actors not yet placed; otherwise
it is drawn from the uniform distribution on linear extensions of the
order restricted to those actors.  In ``down`` mode the list is filled from
the top, in ``up`` mode from the bottom.

Every factor is ``p / n_remaining + (1 - p) * r`` where ``r`` is a ratio of
linear-extension counts.  The ratios depend only on the order among list
positions, so they are cached per relation matrix and reused across p.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from math import log
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, GroundMismatch, SizeLimit, UnknownActor
from .poset import DEFAULT_CACHE_SIZE, DEFAULT_SIZE_LIMIT, PartialOrder, count_le, count_subset, suborder

MODES = ("up", "down")


@dataclass(frozen=True)
class NoiseModel:
    mode: str = "up"
    p: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"noise mode {self.mode!r}")
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"p={self.p} outside [0, 1]")


@dataclass(frozen=True)
class ListObservation:
    list_id: int
    entries: tuple[int, ...]
    tau: int

    @property
    def membership(self) -> frozenset[int]:
        return frozenset(self.entries)


@lru_cache(maxsize=None)
def uniform_weights(n: int, mode: str) -> np.ndarray:
    """Per-position probability of the uniform pick: 1/(n-j) top-down, 1/(j+1) bottom-up."""
    j = np.arange(n)
    w = 1.0 / (n - j) if mode == "down" else 1.0 / (j + 1)
    w.setflags(write=False)
    return w


def _masks_from_matrix(A: np.ndarray) -> tuple[list[int], list[int]]:
    n = A.shape[0]
    above = [0] * n
    below = [0] * n
    for i, j in zip(*np.nonzero(A)):
        above[j] |= 1 << int(i)
        below[i] |= 1 << int(j)
    return above, below


def count_ratios(A: np.ndarray, mode: str) -> np.ndarray:
    """Ratios r_j for a list whose j-th entry is position j of ``A``.

    ``A[i, k]`` says list entry i is above entry k.  Top-down,
    r_j = C(entries after j) / C(entries from j) when entry j is a top
    element of the latter, else 0.  Bottom-up mirrors this with prefixes.
    Counts are exact integers and each ratio is rounded once.
    """
    n = A.shape[0]
    above, below = _masks_from_matrix(A)
    comparable = [a | b for a, b in zip(above, below)]
    memo: dict[int, int] = {}
    out = np.zeros(n)
    full = (1 << n) - 1
    if mode == "down":
        prev = 1  # count of the empty suffix
        for j in range(n - 1, -1, -1):
            S = full ^ ((1 << j) - 1)
            c = count_subset(S, above, comparable, memo)
            if above[j] & S == 0:
                out[j] = prev / c
            prev = c
    else:
        prev = 1
        for j in range(n):
            P = (1 << (j + 1)) - 1
            c = count_subset(P, above, comparable, memo)
            if below[j] & P == 0:
                out[j] = prev / c
            prev = c
    return out


class RatioCache:
    """Bounded LRU map from (mode, relation matrix bytes) to count ratios."""

    def __init__(self, maxsize: int = DEFAULT_CACHE_SIZE, size_limit: int = DEFAULT_SIZE_LIMIT):
        self.maxsize = maxsize
        self.size_limit = size_limit
        self._store: OrderedDict[tuple[str, bytes], np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def ratios(self, A: np.ndarray, mode: str) -> np.ndarray:
        n = A.shape[0]
        if n > self.size_limit:
            raise SizeLimit(f"list of length {n} exceeds limit {self.size_limit}")
        key = (mode, np.ascontiguousarray(A, dtype=bool).tobytes())
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            self._store.move_to_end(key)
            return hit
        self.misses += 1
        r = count_ratios(A, mode)
        r.setflags(write=False)
        self._store[key] = r
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return r


_default_cache = RatioCache()


def loglik_from_ratios(r: np.ndarray, p: float, mode: str) -> float:
    w = uniform_weights(len(r), mode)
    with np.errstate(divide="ignore"):
        return float(np.log(p * w + (1.0 - p) * r).sum())


def _position_matrix(Y: Sequence[int], H: PartialOrder) -> np.ndarray:
    pos = [H.index(a) for a in Y]
    return H.matrix()[np.ix_(pos, pos)]


def loglik_noise_free(Y: Sequence[int], H: PartialOrder) -> float:
    if len(Y) != H.m or set(Y) != set(H.ground):
        raise GroundMismatch("list entries must equal the ground set")
    pos = {a: k for k, a in enumerate(Y)}
    if any(pos[a] > pos[b] for a, b in H.edges):
        return float("-inf")
    return -log(count_le(H))


def loglik_queue(Y: Sequence[int], H: PartialOrder, noise: NoiseModel,
                 cache: RatioCache | None = None) -> float:
    if len(Y) != H.m or set(Y) != set(H.ground):
        raise GroundMismatch("list entries must equal the ground set")
    r = (cache or _default_cache).ratios(_position_matrix(Y, H), noise.mode)
    return loglik_from_ratios(r, noise.p, noise.mode)


def loglik_list(obs: ListObservation, h_t: PartialOrder, noise: NoiseModel,
                cache: RatioCache | None = None) -> float:
    missing = obs.membership.difference(h_t.ground)
    if missing:
        raise UnknownActor(sorted(missing))
    return loglik_queue(obs.entries, suborder(h_t, obs.entries), noise, cache)


def loglik_total(dataset, h: Mapping[int, PartialOrder], tau: Mapping[int, int], noise: NoiseModel,
                 cache: RatioCache | None = None) -> float:
    total = 0.0
    for rec in dataset.lists:
        t = tau[rec.list_id]
        total += loglik_list(ListObservation(rec.list_id, rec.actors, t), h[t], noise, cache)
    return total


def sample_list(H_sub: PartialOrder, noise: NoiseModel, rng: np.random.Generator,
                size_limit: int = DEFAULT_SIZE_LIMIT) -> tuple[int, ...]:
    """Draw a list over ``H_sub.ground`` from the queue-jumping model."""
    m = H_sub.m
    if m == 0:
        raise ValueError("cannot sample a list over an empty ground set")
    if m > size_limit:
        raise SizeLimit(f"ground size {m} exceeds limit {size_limit}")
    above = list(H_sub.above_masks())
    below = list(H_sub.below_masks())
    comparable = [a | b for a, b in zip(above, below)]
    # in up mode the list is built from the bottom, so blockers are the elements below
    blockers = above if noise.mode == "down" else below
    memo: dict[int, int] = {}
    T = (1 << m) - 1
    picked = []
    while T:
        if noise.p > 0 and rng.random() < noise.p:
            members = [k for k in range(m) if T >> k & 1]
            choice = 1 << members[int(rng.integers(len(members)))]
        else:
            total = count_subset(T, above, comparable, memo)
            u = rng.random()
            acc = 0.0
            choice = 0
            t = T
            while t:
                b = t & -t
                t ^= b
                if blockers[b.bit_length() - 1] & T == 0:
                    choice = b
                    acc += count_subset(T ^ b, above, comparable, memo) / total
                    if u < acc:
                        break
        picked.append(H_sub.ground[choice.bit_length() - 1])
        T ^= choice
    if noise.mode == "up":
        picked.reverse()
    return tuple(picked)


def all_list_probabilities(H: PartialOrder, noise: NoiseModel) -> dict[tuple[int, ...], float]:
    """Probability of every permutation of the ground set (small grounds only)."""
    from itertools import permutations

    return {Y: float(np.exp(loglik_queue(Y, H, noise))) for Y in permutations(H.ground)}


def lists_probability_sum(H: PartialOrder, noise: NoiseModel) -> float:
    return sum(all_list_probabilities(H, noise).values())


def iter_observations(dataset, tau: Mapping[int, int]) -> Iterable[ListObservation]:
    for rec in dataset.lists:
        yield ListObservation(rec.list_id, rec.actors, tau[rec.list_id])
