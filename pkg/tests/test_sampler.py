from __future__ import annotations

import numpy as np
import pytest

from pohmm.latent import HyperParams, dominance, var1_sample
from pohmm.obsmodel import NoiseModel, loglik_queue
from pohmm.pipeline import ActorRecord, Dataset, ListRecord
from pohmm.poset import PartialOrder
from pohmm.sampler import Chain, MCMCConfig, SampleStore, collapse_time, ess, run_chain, run_chains

ACTORS = [ActorRecord(k, f"a{k}", "", k - 3, 1) for k in (1, 2, 3)]  # distinct seniority levels
LISTS = [ListRecord(1, 0, 0, (1, 2, 3)), ListRecord(2, 0, 1, (1, 3)), ListRecord(3, 1, 1, (2, 1, 3)),
         ListRecord(4, 0, 1, (2, 3)), ListRecord(5, 1, 1, (1, 2))]
TOY = Dataset(ACTORS, LISTS, 0, 1)


def importance_oracle(ds: Dataset, hyper: HyperParams, n: int, rng, fixed_time: bool = False):
    """Posterior edge probabilities by prior sampling weighted with the likelihood."""
    years = ds.years
    ids = ds.actor_ids
    logw = np.empty(n)
    edges = np.empty((n, len(years) * len(ids) ** 2))
    for k in range(n):
        rho = min(rng.beta(1, hyper.gamma), 1 - 1e-12)
        theta = 0.0 if fixed_time else rng.random()
        p = rng.beta(1, hyper.delta)
        beta = rng.standard_normal(ds.S) if hyper.covariates else np.zeros(0)
        U = {a: var1_sample(years[0], years[-1], rho, theta, rng, hyper.K) for a in ids}
        orders = []
        for ti, t in enumerate(years):
            Z = np.array([U[a][ti] for a in ids])
            if beta.size:
                Z = Z + beta[[ds.seniority[(t, a)] - 1 for a in ids]][:, None]
            orders.append(dominance(Z))
        ll = 0.0
        for r in ds.lists:
            ti = int(rng.integers(r.tau_minus, r.tau_plus + 1)) - years[0]
            A = orders[ti]
            idx = [ids.index(a) for a in r.actors]
            H = PartialOrder(r.actors, [(r.actors[i], r.actors[j]) for i in range(len(idx)) for j in range(len(idx))
                                        if A[idx[i], idx[j]]], check=False)
            ll += loglik_queue(r.actors, H, NoiseModel(hyper.noise_mode, p))
        logw[k] = ll
        edges[k] = np.stack(orders).ravel()
    w = np.exp(logw - logw.max())
    w /= w.sum()
    est = w @ edges
    n_eff = 1.0 / np.sum(w ** 2)
    return est, np.sqrt(est * (1 - est) / n_eff)


def chain_edges(store: SampleStore):
    E = np.stack([store.edge_array(t) for t in store.years], axis=1).reshape(len(store), -1).astype(float)
    means = E.mean(axis=0)
    se = np.array([E[:, k].std() / np.sqrt(max(ess(E[:, k]), 1.0)) if E[:, k].std() > 0 else 0.0
                   for k in range(E.shape[1])])
    return means, se


def agree(a, a_se, b, b_se, z=4.0):
    return np.abs(a - b) <= z * np.sqrt(a_se ** 2 + b_se ** 2) + 1e-12


@pytest.mark.parametrize("scaled_proposals", [False, True])
def test_posterior_matches_importance_oracle(scaled_proposals):
    hyper = HyperParams(K=2)
    est, est_se = importance_oracle(TOY, hyper, 40000, np.random.default_rng(5))
    cfg = MCMCConfig(iterations=15000, thin=5, seed=3, debug_every=2500, scaled_proposals=scaled_proposals)
    means, se = chain_edges(run_chain(TOY, hyper, cfg))
    assert agree(means, se, est, est_se).all(), np.round(np.c_[means, est, se, est_se], 3)


def test_fixed_time_matches_oracle():
    hyper = HyperParams(K=2, covariates=False)
    flat = collapse_time(TOY)
    est, est_se = importance_oracle(flat, hyper, 40000, np.random.default_rng(6), fixed_time=True)
    store = run_chain(TOY, hyper, MCMCConfig(iterations=15000, thin=5, seed=4, fixed_time=True, debug_every=2500))
    assert store.years == (0,)
    assert np.allclose(store.arrays()["theta"], 0.0)
    means, se = chain_edges(store)
    assert agree(means, se, est, est_se).all()


def test_coherence_and_determinism():
    hyper = HyperParams(K=2)
    cfg = MCMCConfig(iterations=200, thin=2, seed=9)
    rng = np.random.default_rng(np.random.SeedSequence(9))
    chain = Chain(TOY, hyper, cfg, rng)
    chain.initialise()
    for _ in range(100):
        chain.sweep()
        chain.check_coherence()
    a = run_chain(TOY, hyper, cfg)
    b = run_chain(TOY, hyper, cfg)
    assert np.array_equal(a.arrays()["rho"], b.arrays()["rho"])


def test_ordered_init_realises_attested_relations():
    hyper = HyperParams(K=1, covariates=False)
    ds = Dataset(ACTORS, [ListRecord(1, 0, 0, (1, 2, 3)), ListRecord(2, 0, 0, (1, 2)),
                          ListRecord(3, 1, 1, (3, 2, 1)), ListRecord(4, 1, 1, (3, 1))], 0, 1)
    chain = Chain(ds, hyper, MCMCConfig(iterations=10, init_window=0), np.random.default_rng(0))
    chain.initialise()
    orders = chain.orders()
    assert {(1, 2), (2, 3), (1, 3)} <= orders[0].edges
    assert {(3, 2), (2, 1), (3, 1)} <= orders[1].edges


def test_disordered_init_is_empty():
    chain = Chain(TOY, HyperParams(K=2), MCMCConfig(iterations=10, init="disordered"), np.random.default_rng(0))
    chain.initialise()
    assert all(not H.edges for H in chain.orders().values())


def test_store_round_trip_and_merge(tmp_path):
    hyper = HyperParams(K=2)
    store = run_chains(TOY, hyper, MCMCConfig(iterations=100, thin=5, seed=1), n_chains=2)
    assert len(store) == 2 * 16
    store.write_jsonl(tmp_path / "s.jsonl")
    back = SampleStore.read_jsonl(tmp_path / "s.jsonl")
    assert len(back) == len(store)
    for t in store.years:
        assert np.array_equal(back.edge_array(t), store.edge_array(t))
    assert np.allclose(back.arrays()["beta"], store.arrays()["beta"])


def test_ess_of_iid_and_ar1():
    rng = np.random.default_rng(0)
    assert ess(rng.standard_normal(4000)) == pytest.approx(4000, rel=0.15)
    x = np.zeros(20000)
    for k in range(1, x.size):
        x[k] = 0.9 * x[k - 1] + rng.standard_normal()
    # integrated autocorrelation time of AR(1) is (1 + phi) / (1 - phi) = 19
    assert ess(x) == pytest.approx(20000 / 19, rel=0.25)
    with pytest.raises(ValueError):
        ess([1.0, 2.0])
