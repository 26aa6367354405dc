"""Brute-force oracles and random generators shared by the tests."""
from __future__ import annotations

from itertools import permutations

import numpy as np

from pohmm.poset import PartialOrder, closure_matrix


def random_order(m: int, rng: np.random.Generator, density: float | None = None, labels=None) -> PartialOrder:
    """Random order: closure of random forward edges under a random relabelling."""
    density = rng.uniform(0.05, 0.6) if density is None else density
    A = np.triu(rng.random((m, m)) < density, k=1)
    C = closure_matrix(A)
    perm = rng.permutation(m)
    labels = list(range(1, m + 1)) if labels is None else list(labels)
    g = [labels[k] for k in perm]
    return PartialOrder(g, ((g[i], g[j]) for i, j in zip(*np.nonzero(C))))


def brute_extensions(H: PartialOrder) -> list[tuple[int, ...]]:
    return [Y for Y in permutations(H.ground) if all(Y.index(a) < Y.index(b) for a, b in H.edges)]


def brute_depth(H: PartialOrder) -> int:
    best = 1 if H.m else 0
    # longest chain by DP over a linear extension
    Y = brute_extensions(H)[0] if H.m else ()
    longest = {}
    for a in Y:
        longest[a] = 1 + max((longest[b] for b in longest if (b, a) in H.edges), default=0)
        best = max(best, longest[a])
    return best


def has_induced_n(H: PartialOrder) -> bool:
    """Search all 4-tuples for the induced N shape: a>b, c>b, c>d, nothing else."""
    E = H.edges
    want = {(0, 1), (2, 1), (2, 3)}
    for quad in permutations(H.ground, 4):
        got = {(i, j) for i in range(4) for j in range(4) if (quad[i], quad[j]) in E}
        if got == want:
            return True
    return False


def all_bucket_orders(ground) -> set[frozenset]:
    """Edge sets of every ordered partition of the ground set."""
    ground = list(ground)
    out = set()

    def rec(rest, blocks):
        if not rest:
            edges = frozenset((a, b) for i, hi in enumerate(blocks) for lo in blocks[i + 1:] for a in hi for b in lo)
            out.add(edges)
            return
        n = len(rest)
        for mask in range(1, 1 << n):
            block = [rest[k] for k in range(n) if mask >> k & 1]
            rec([rest[k] for k in range(n) if not mask >> k & 1], blocks + [block])

    rec(ground, [])
    return out


def random_vsp(m: int, rng: np.random.Generator) -> PartialOrder:
    """Random binary decomposition tree with series and parallel nodes."""

    def build(items):
        if len(items) == 1:
            return set()
        k = int(rng.integers(1, len(items)))
        left, right = items[:k], items[k:]
        edges = build(left) | build(right)
        if rng.random() < 0.5:
            edges |= {(a, b) for a in left for b in right}
        return edges

    items = [int(x) for x in rng.permutation(np.arange(1, m + 1))]
    return PartialOrder(items, build(items))


FIVE_ELEMENT = PartialOrder(range(1, 6), [(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 5), (3, 5), (4, 5)])
