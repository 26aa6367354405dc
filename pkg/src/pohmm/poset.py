"""Partial orders on small integer ground sets.

A :class:`PartialOrder` stores its relation as a set of pairs ``(i, j)``
meaning ``i`` is above ``j``.  Orders are always transitively closed and
irreflexive, hence acyclic.  Internally most algorithms work on a boolean
adjacency matrix indexed by position in the sorted ground set, or on
per-element bitmasks of those positions.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from fractions import Fraction
from itertools import combinations
from math import factorial
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CycleError, SizeLimit, UnknownActor

DEFAULT_SIZE_LIMIT = 22
DEFAULT_CACHE_SIZE = 2 ** 20

Pair = tuple[int, int]


class PartialOrder:
    """Transitively closed, irreflexive relation over a sorted ground set."""

    __slots__ = ("ground", "edges", "_index")

    def __init__(self, ground: Iterable[int], edges: Iterable[Pair] = (), *, check: bool = True):
        g = tuple(sorted(int(x) for x in ground))
        e = frozenset((int(a), int(b)) for a, b in edges)
        self.ground = g
        self.edges = e
        self._index = {a: k for k, a in enumerate(g)}
        if check:
            if len(self._index) != len(g):
                raise ValueError("ground set ids must be distinct")
            for a, b in e:
                if a not in self._index or b not in self._index:
                    raise UnknownActor((a, b))
                if a == b:
                    raise CycleError(f"self-loop on {a}")
            A = self.matrix()
            if (A & A.T).any():
                raise CycleError("relation is not antisymmetric")
            if (_bool_matmul(A, A) & ~A).any():
                raise ValueError("relation is not transitively closed")

    @classmethod
    def from_matrix(cls, ground: Sequence[int], A: np.ndarray) -> "PartialOrder":
        """Build from a closed adjacency matrix without re-validating it."""
        rows, cols = np.nonzero(A)
        g = list(ground)
        return cls(g, ((g[i], g[j]) for i, j in zip(rows.tolist(), cols.tolist())), check=False)

    @property
    def m(self) -> int:
        return len(self.ground)

    def index(self, actor: int) -> int:
        try:
            return self._index[actor]
        except KeyError:
            raise UnknownActor(actor) from None

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.m, self.m), dtype=bool)
        for a, b in self.edges:
            A[self._index[a], self._index[b]] = True
        return A

    def above_masks(self) -> tuple[int, ...]:
        """For each position k, bitmask of positions strictly above k."""
        masks = [0] * self.m
        for a, b in self.edges:
            masks[self._index[b]] |= 1 << self._index[a]
        return tuple(masks)

    def below_masks(self) -> tuple[int, ...]:
        masks = [0] * self.m
        for a, b in self.edges:
            masks[self._index[a]] |= 1 << self._index[b]
        return tuple(masks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartialOrder):
            return NotImplemented
        return self.ground == other.ground and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.ground, self.edges))

    def __repr__(self) -> str:
        return f"PartialOrder(ground={list(self.ground)}, edges={sorted(self.edges)})"

    def to_dict(self) -> dict:
        return {"ground": list(self.ground), "edges": [list(e) for e in sorted(self.edges)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PartialOrder":
        return cls(d["ground"], (tuple(e) for e in d["edges"]))

    def to_dot(self, name: str = "H") -> str:
        lines = [f"digraph {name} {{"]
        for a in self.ground:
            lines.append(f"  {a};")
        for a, b in sorted(transitive_reduction(self)):
            lines.append(f"  {a} -> {b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _bool_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (A.astype(np.int32) @ B.astype(np.int32)) > 0


def closure_matrix(A: np.ndarray) -> np.ndarray:
    """Warshall closure of a boolean relation matrix."""
    C = A.copy()
    for k in range(C.shape[0]):
        C |= C[:, k : k + 1] & C[k : k + 1, :]
    return C


def transitive_closure(edges: Iterable[Pair], ground: Iterable[int]) -> PartialOrder:
    g = sorted(set(int(x) for x in ground))
    idx = {a: k for k, a in enumerate(g)}
    A = np.zeros((len(g), len(g)), dtype=bool)
    for a, b in edges:
        if a not in idx or b not in idx:
            raise UnknownActor((a, b))
        A[idx[a], idx[b]] = True
    C = closure_matrix(A)
    if np.diagonal(C).any():
        raise CycleError("relation contains a directed cycle")
    return PartialOrder.from_matrix(g, C)


def transitive_reduction(H: PartialOrder) -> set[Pair]:
    A = H.matrix()
    R = A & ~_bool_matmul(A, A)
    g = H.ground
    return {(g[i], g[j]) for i, j in zip(*np.nonzero(R))}


def suborder(H: PartialOrder, O: Iterable[int]) -> PartialOrder:
    keep = set(O)
    missing = keep.difference(H.ground)
    if missing:
        raise UnknownActor(sorted(missing))
    return PartialOrder(keep, ((a, b) for a, b in H.edges if a in keep and b in keep), check=False)


def empty_order(ground: Iterable[int]) -> PartialOrder:
    return PartialOrder(ground, (), check=False)


def chain(items: Sequence[int]) -> PartialOrder:
    """Total order with ``items[0]`` on top."""
    return PartialOrder(items, combinations(items, 2), check=False)


# ---------------------------------------------------------------------------
# linear-extension counting


def _components(T: int, comparable: Sequence[int]) -> list[int]:
    comps = []
    rest = T
    while rest:
        seed = rest & -rest
        comp = seed
        frontier = seed
        while frontier:
            b = frontier & -frontier
            frontier ^= b
            new = comparable[b.bit_length() - 1] & T & ~comp
            comp |= new
            frontier |= new
        comps.append(comp)
        rest &= ~comp
    return comps


def count_subset(T: int, above: Sequence[int], comparable: Sequence[int], memo: dict[int, int]) -> int:
    """Number of linear extensions of the suborder on the positions in ``T``.

    Removes a maximal element at a time; disconnected pieces of the
    comparability graph are counted separately and interleaved with a
    multinomial coefficient.
    """
    hit = memo.get(T)
    if hit is not None:
        return hit
    n = T.bit_count()
    if n <= 1:
        return 1
    comps = _components(T, comparable)
    if len(comps) > 1:
        total = factorial(n)
        inner = 1
        for c in comps:
            k = c.bit_count()
            total //= factorial(k)
            if k > 1:
                inner *= count_subset(c, above, comparable, memo)
        total *= inner
    else:
        total = 0
        t = T
        while t:
            b = t & -t
            t ^= b
            if above[b.bit_length() - 1] & T == 0:
                total += count_subset(T ^ b, above, comparable, memo)
    memo[T] = total
    return total


class ExtensionCounter:
    """Exact counter with a bounded LRU cache keyed by canonical order form.

    The canonical form of an order is the tuple of above-masks over its
    sorted ground set, so isomorphic relabellings that preserve the sort
    order share entries.  One counter is meant to live inside one chain.
    """

    def __init__(self, maxsize: int = DEFAULT_CACHE_SIZE, size_limit: int = DEFAULT_SIZE_LIMIT):
        self.maxsize = maxsize
        self.size_limit = size_limit
        self._cache: OrderedDict[tuple[int, ...], int] = OrderedDict()

    def count_masks(self, above: tuple[int, ...]) -> int:
        n = len(above)
        if n > self.size_limit:
            raise SizeLimit(f"ground size {n} exceeds limit {self.size_limit}")
        hit = self._cache.get(above)
        if hit is not None:
            self._cache.move_to_end(above)
            return hit
        below = [0] * n
        for k, a in enumerate(above):
            t = a
            while t:
                b = t & -t
                t ^= b
                below[b.bit_length() - 1] |= 1 << k
        comparable = [a | b for a, b in zip(above, below)]
        value = count_subset((1 << n) - 1, above, comparable, {})
        self._cache[above] = value
        if len(self._cache) > self.maxsize:
            self._cache.popitem(last=False)
        return value

    def count(self, H: PartialOrder) -> int:
        return self.count_masks(H.above_masks())


_default_counter = ExtensionCounter()


def count_le(H: PartialOrder, counter: ExtensionCounter | None = None) -> int:
    return (counter or _default_counter).count(H)


def count_le_anchored(H: PartialOrder, j: int, end: str = "first",
                      counter: ExtensionCounter | None = None) -> int:
    """Extensions of ``H`` with ``j`` in the first (or last) position."""
    if j not in H._index:
        raise UnknownActor(j)
    if end == "first":
        blocked = any(b == j for _, b in H.edges)
    elif end == "last":
        blocked = any(a == j for a, _ in H.edges)
    else:
        raise ValueError("end must be 'first' or 'last'")
    if blocked:
        return 0
    rest = [a for a in H.ground if a != j]
    return count_le(suborder(H, rest), counter)


def sample_le_uniform(H: PartialOrder, rng: np.random.Generator,
                      size_limit: int = DEFAULT_SIZE_LIMIT) -> tuple[int, ...]:
    """Uniform draw from the linear extensions of ``H``, top element first."""
    m = H.m
    if m == 0:
        raise ValueError("cannot sample from an empty ground set")
    if m > size_limit:
        raise SizeLimit(f"ground size {m} exceeds limit {size_limit}")
    above = H.above_masks()
    below = H.below_masks()
    comparable = [a | b for a, b in zip(above, below)]
    memo: dict[int, int] = {}
    T = (1 << m) - 1
    out = []
    while T:
        total = count_subset(T, above, comparable, memo)
        u = rng.random()
        acc = 0.0
        choice = None
        t = T
        while t:
            b = t & -t
            t ^= b
            if above[b.bit_length() - 1] & T == 0:
                choice = b
                acc += count_subset(T ^ b, above, comparable, memo) / total
                if u < acc:
                    break
        out.append(H.ground[choice.bit_length() - 1])
        T ^= choice
    return tuple(out)


def linear_extensions(H: PartialOrder) -> Iterator[tuple[int, ...]]:
    """Enumerate all linear extensions (top element first)."""
    above = H.above_masks()
    g = H.ground

    def rec(T: int, prefix: list[int]):
        if not T:
            yield tuple(prefix)
            return
        t = T
        while t:
            b = t & -t
            t ^= b
            k = b.bit_length() - 1
            if above[k] & T == 0:
                prefix.append(g[k])
                yield from rec(T ^ b, prefix)
                prefix.pop()

    yield from rec((1 << len(g)) - 1, [])


def is_linear_extension(Y: Sequence[int], H: PartialOrder) -> bool:
    pos = {a: k for k, a in enumerate(Y)}
    return all(pos[a] < pos[b] for a, b in H.edges)


# ---------------------------------------------------------------------------
# structural queries


def depth_matrix(A: np.ndarray) -> int:
    m = A.shape[0]
    if m == 0:
        return 0
    # elements with fewer ancestors come first in any topological order
    order = np.argsort(A.sum(axis=0), kind="stable")
    longest = np.ones(m, dtype=int)
    for k in order:
        parents = np.nonzero(A[:, k])[0]
        if parents.size:
            longest[k] = longest[parents].max() + 1
    return int(longest.max())


def depth(H: PartialOrder) -> int:
    return depth_matrix(H.matrix())


def is_vsp_matrix(A: np.ndarray) -> bool:
    """True when no four elements induce the N-shaped order a>b<c>d."""
    m = A.shape[0]
    if m < 4:
        return True
    inc = ~(A | A.T)
    np.fill_diagonal(inc, False)
    for c, b in zip(*np.nonzero(A)):
        lefts = np.nonzero(A[:, b] & inc[:, c])[0]
        if lefts.size == 0:
            continue
        rights = np.nonzero(A[c, :] & inc[:, b])[0]
        if rights.size and inc[np.ix_(lefts, rights)].any():
            return False
    return True


def is_bucket_matrix(A: np.ndarray) -> bool:
    """True when incomparable elements always share up-set and down-set."""
    inc = ~(A | A.T)
    np.fill_diagonal(inc, False)
    for i, j in zip(*np.nonzero(np.triu(inc))):
        if not (np.array_equal(A[i], A[j]) and np.array_equal(A[:, i], A[:, j])):
            return False
    return True


def is_vsp(H: PartialOrder) -> bool:
    return is_vsp_matrix(H.matrix())


def is_bucket(H: PartialOrder) -> bool:
    return is_bucket_matrix(H.matrix())


def bucket_partition(H: PartialOrder) -> list[list[int]] | None:
    """Buckets from top to bottom, or None when ``H`` is not a bucket order."""
    if not is_bucket(H):
        return None
    A = H.matrix()
    groups: dict[int, list[int]] = {}
    ups = A.sum(axis=0)
    for k, a in enumerate(H.ground):
        groups.setdefault(int(ups[k]), []).append(a)
    return [groups[key] for key in sorted(groups)]


def intersection_order(lists: Iterable[Sequence[int]]) -> set[Pair]:
    """Precedences attested by at least one list and contradicted by none."""
    attested: set[Pair] = set()
    for y in lists:
        for a, b in combinations(y, 2):
            attested.add((a, b))
    return {(a, b) for a, b in attested if (b, a) not in attested}


# ---------------------------------------------------------------------------
# exhaustive families


def naturally_labelled_posets(m: int) -> Iterator[PartialOrder]:
    """All orders on {0..m-1} whose relations only point from lower to higher index.

    Every poset on m elements is isomorphic to at least one of these.
    """
    pairs = list(combinations(range(m), 2))
    for bits in range(1 << len(pairs)):
        A = np.zeros((m, m), dtype=bool)
        for k, (a, b) in enumerate(pairs):
            if bits >> k & 1:
                A[a, b] = True
        if (_bool_matmul(A, A) & ~A).any():
            continue
        yield PartialOrder.from_matrix(range(m), A)


def uniform_depth_reference(m: int) -> dict[int, float]:
    """Depth distribution of a uniformly drawn labelled poset on m elements.

    Weights each naturally labelled poset by m!/C(H), which is the number of
    labelled posets it stands for once natural labellings are accounted for.
    """
    weights: dict[int, float] = {}
    total = 0.0
    for H in naturally_labelled_posets(m):
        w = factorial(m) / count_le(H)
        d = depth(H)
        weights[d] = weights.get(d, 0.0) + w
        total += w
    return {d: w / total for d, w in sorted(weights.items())}


def count_labelled_posets(m: int) -> int:
    """Number of distinct labelled posets on m elements."""
    total = Fraction(0)
    for H in naturally_labelled_posets(m):
        total += Fraction(factorial(m), count_le(H))
    return int(total)
