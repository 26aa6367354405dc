from __future__ import annotations

from collections import Counter
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIVE_ELEMENT, brute_depth, brute_extensions, random_order
from pohmm.errors import CycleError, SizeLimit, UnknownActor
from pohmm.poset import (
    ExtensionCounter,
    PartialOrder,
    chain,
    count_labelled_posets,
    count_le,
    count_le_anchored,
    depth,
    empty_order,
    intersection_order,
    is_linear_extension,
    linear_extensions,
    naturally_labelled_posets,
    sample_le_uniform,
    suborder,
    transitive_closure,
    transitive_reduction,
    uniform_depth_reference,
)


def test_five_element_counts_and_depth():
    assert count_le(FIVE_ELEMENT) == 3
    assert depth(FIVE_ELEMENT) == 4
    assert count_le(suborder(FIVE_ELEMENT, [2, 4, 5])) == 2
    assert transitive_reduction(FIVE_ELEMENT) == {(1, 2), (1, 4), (2, 3), (3, 5), (4, 5)}


def test_edge_cases():
    assert count_le(empty_order([])) == 1
    assert count_le(empty_order(range(4))) == 24
    assert count_le(chain([3, 1, 2])) == 1
    assert depth(empty_order([7])) == 1
    assert depth(empty_order([])) == 0


def test_closure_rejects_cycles_and_unknowns():
    with pytest.raises(CycleError):
        transitive_closure([(1, 2), (2, 3), (3, 1)], [1, 2, 3])
    with pytest.raises(UnknownActor):
        transitive_closure([(1, 9)], [1, 2])
    with pytest.raises(ValueError):
        PartialOrder([1, 2, 3], [(1, 2), (2, 3)])


def test_closure_of_chain_edges():
    H = transitive_closure([(1, 2), (2, 3)], [1, 2, 3])
    assert H.edges == {(1, 2), (2, 3), (1, 3)}


def test_json_round_trip():
    H = PartialOrder.from_dict(FIVE_ELEMENT.to_dict())
    assert H == FIVE_ELEMENT and hash(H) == hash(FIVE_ELEMENT)
    assert "->" in FIVE_ELEMENT.to_dot()


def test_counts_match_enumeration_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        H = random_order(int(rng.integers(1, 7)), rng)
        exts = brute_extensions(H)
        assert count_le(H) == len(exts)
        assert sorted(linear_extensions(H)) == sorted(exts)
        for j in H.ground:
            assert count_le_anchored(H, j, "first") == sum(Y[0] == j for Y in exts)
            assert count_le_anchored(H, j, "last") == sum(Y[-1] == j for Y in exts)
        assert depth(H) == brute_depth(H)


def test_counter_cache_and_limit():
    counter = ExtensionCounter(maxsize=2, size_limit=5)
    assert counter.count(FIVE_ELEMENT) == 3
    assert counter.count(FIVE_ELEMENT) == 3
    with pytest.raises(SizeLimit):
        counter.count(empty_order(range(6)))


def test_uniform_extension_sampler():
    rng = np.random.default_rng(3)
    H = PartialOrder(range(1, 5), [(1, 2), (3, 4)])
    exts = brute_extensions(H)
    draws = Counter(sample_le_uniform(H, rng) for _ in range(6000))
    assert set(draws) == set(exts)
    expected = 6000 / len(exts)
    chi2 = sum((draws[y] - expected) ** 2 / expected for y in exts)
    assert chi2 < 20.5  # chi-square 0.999 quantile with 5 df


def test_intersection_order():
    rel = intersection_order([(1, 2, 3), (2, 3), (3, 1)])
    assert rel == {(1, 2), (2, 3)}


@pytest.mark.parametrize("m,expected", [(1, 1), (2, 3), (3, 19), (4, 219), (5, 4231)])
def test_labelled_poset_counts(m, expected):
    assert count_labelled_posets(m) == expected


def test_uniform_depth_reference_small():
    ref = uniform_depth_reference(3)
    # 19 labelled posets on 3 elements: 1 antichain, 6 with one relation,
    # 6 V or inverted-V shapes, 6 chains
    assert ref[1] == pytest.approx(1 / 19)
    assert ref[2] == pytest.approx(12 / 19)
    assert ref[3] == pytest.approx(6 / 19)


def test_natural_labelling_family_size():
    assert sum(1 for _ in naturally_labelled_posets(4)) == 40


@st.composite
def orders(draw, max_m=6):
    m = draw(st.integers(0, max_m))
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    labels = draw(st.permutations(list(range(10, 10 + m))))
    return transitive_closure([(labels[i], labels[j]) for i, j in chosen], labels)


@settings(max_examples=150, deadline=None)
@given(orders())
def test_closure_properties(H):
    A = H.matrix()
    assert not np.diagonal(A).any()
    assert not (A & A.T).any()
    assert transitive_closure(H.edges, H.ground) == H
    red = transitive_reduction(H)
    assert transitive_closure(red, H.ground) == H
    assert red <= H.edges


@settings(max_examples=100, deadline=None)
@given(orders(), st.data())
def test_suborder_and_extensions(H, data):
    keep = data.draw(st.sets(st.sampled_from(H.ground))) if H.m else set()
    sub = suborder(H, keep)
    assert sub.edges == {(a, b) for a, b in H.edges if a in keep and b in keep}
    n = count_le(H)
    assert 1 <= n <= factorial(H.m)
    # each extension of H restricts to an extension of the suborder
    for Y in list(linear_extensions(H))[:20]:
        assert is_linear_extension([a for a in Y if a in keep], sub)
    assert sum(count_le_anchored(H, j) for j in H.ground) == (n if H.m else 0)
