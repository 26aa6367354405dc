from __future__ import annotations

import numpy as np
import pytest

from pohmm.errors import InactiveActor, ZeroPriorMass
from pohmm.latent import HyperParams
from pohmm.pipeline import fixture_paths, load, register
from pohmm.sampler import MCMCConfig, run_chain
from pohmm.summaries import (
    OrderSamples,
    authority_curves,
    bf_effects,
    bf_structure,
    class_indicator,
    consensus,
    depth_distribution,
    edge_support,
    simulate_prior_orders,
    write_consensus,
    write_depth_csv,
)


class Draws(OrderSamples):
    def edge_array(self, t):
        m = len(self.actors_by_year[t])
        return np.asarray(self.edges[t], dtype=bool).reshape(len(self), m, m)


def draws_of(mats, actors=(1, 2)):
    d = Draws((0,), {0: tuple(actors)})
    d.edges[0] = [np.asarray(A, dtype=bool) for A in mats]
    return d


def test_consensus_cycle_flagged():
    d = draws_of([[[0, 1], [0, 0]], [[0, 0], [1, 0]]])
    c = consensus(d, 0, 0.5)
    assert set(c.support) == {(1, 2), (2, 1)}
    assert not c.acyclic and c.reduction is None
    assert edge_support(d, 0, 1, 2) == 0.5
    with pytest.raises(InactiveActor):
        edge_support(d, 0, 1, 3)


def test_consensus_monotone_and_reduced():
    chain3 = [[0, 1, 1], [0, 0, 1], [0, 0, 0]]
    part = [[0, 1, 0], [0, 0, 0], [0, 0, 0]]
    d = draws_of([chain3, chain3, part], actors=(1, 2, 3))
    lo, hi = consensus(d, 0, 0.5), consensus(d, 0, 0.9)
    assert set(hi.support) <= set(lo.support)
    assert lo.reduction == {(1, 2), (2, 3)}
    assert 'color="red"' in hi.to_dot()
    with pytest.raises(ValueError):
        consensus(d, 0, 0.0)


def test_depth_distribution():
    d = draws_of([[[0, 1], [0, 0]], [[0, 0], [0, 0]], [[0, 0], [1, 0]]])
    assert depth_distribution(d, 0) == {1: pytest.approx(1 / 3), 2: pytest.approx(2 / 3)}


def test_class_indicator_and_zero_prior():
    n_shape = np.zeros((4, 4), dtype=bool)
    n_shape[0, 1] = n_shape[2, 1] = n_shape[2, 3] = True
    post = draws_of([n_shape, np.zeros((4, 4))], actors=(1, 2, 3, 4))
    assert list(class_indicator(post, "vsp")) == [0.0, 1.0]
    prior = draws_of([n_shape], actors=(1, 2, 3, 4))
    with pytest.raises(ZeroPriorMass):
        bf_structure(post, prior, "vsp")


@pytest.fixture(scope="module")
def fixture_run():
    ds = register(load(*fixture_paths()))
    store = run_chain(ds, HyperParams(K=2), MCMCConfig(iterations=300, thin=3, seed=2))
    return ds, store


def test_curves_are_centred(fixture_run):
    ds, store = fixture_run
    curves = authority_curves(store, ds)
    by_year = {}
    for c in curves:
        for t, m in zip(c.years, c.mean):
            by_year.setdefault(t, []).append(m)
    assert all(abs(sum(v)) < 1e-9 for v in by_year.values())


def test_bf_effects_bounds(fixture_run):
    _, store = fixture_run
    bf = bf_effects(store, 2)
    assert 0.0 <= bf.fraction <= 1.0 and bf.estimate == pytest.approx(2 * bf.fraction)
    with pytest.raises(ValueError):
        bf_effects(store, store.S + 1)


def test_prior_orders_and_writers(fixture_run, tmp_path):
    ds, store = fixture_run
    prior = simulate_prior_orders(ds, HyperParams(K=2), 50, np.random.default_rng(0), window=(5, 7))
    assert prior.years == (5, 6, 7) and len(prior) == 50
    bf = bf_structure(store, prior, "vsp", (5, 7))
    assert bf.prior_fraction > 0
    write_consensus(store, tmp_path)
    write_depth_csv(store, tmp_path / "depth.csv")
    assert (tmp_path / "consensus.json").exists()
    assert (tmp_path / "depth.csv").read_text().startswith("year,m,depth,count,fraction")
