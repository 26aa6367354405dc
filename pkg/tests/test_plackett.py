from __future__ import annotations

from itertools import permutations
from math import lgamma

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pohmm.pipeline import ActorRecord, Dataset, ListRecord, fixture_paths, load, register, window_select
from pohmm.plackett import (
    ElpdConfig,
    PLConfig,
    PLMixConfig,
    PLMixState,
    PLModel,
    PLState,
    centring_projection,
    dic,
    elpd_loo,
    paired_difference,
    pl_fit,
    pl_list_loglik,
    plmix_fit,
    plmix_loglik,
)
from pohmm.sampler import ess


def toy(T=2, M=3):
    actors = [ActorRecord(k, f"a{k}", "", 0, T - 1) for k in range(1, M + 1)]
    lists = [ListRecord(1, 0, 0, tuple(range(1, M + 1))), ListRecord(2, T - 1, T - 1, tuple(range(M, 0, -1)))]
    return Dataset(actors, lists, 0, T - 1)


def test_pl_probabilities_sum_to_one():
    v = np.array([0.3, -1.0, 2.0, 0.1])
    total = sum(np.exp(pl_list_loglik(v[list(p)])) for p in permutations(range(4)))
    assert total == pytest.approx(1.0)
    assert np.exp(pl_list_loglik(np.zeros(3))) == pytest.approx(1 / 6)


def test_centring_projection():
    Q = centring_projection(4)
    assert np.allclose(Q @ Q, Q) and np.allclose(Q.sum(axis=1), 0)


def test_time_series_prior_matches_reduced_gaussian():
    ds = toy(T=3, M=3)
    model = PLModel(ds)
    rng = np.random.default_rng(0)
    lam = rng.standard_normal((3, 3))
    lam -= lam.mean(axis=1, keepdims=True)
    theta, sigma = 0.6, 0.8
    Qr = centring_projection(3)[1:, 1:]
    want = multivariate_normal(np.zeros(2), sigma ** 2 / (1 - theta ** 2) * Qr).logpdf(lam[0, 1:])
    for t in (1, 2):
        want += multivariate_normal(np.zeros(2), sigma ** 2 * Qr).logpdf(lam[t, 1:] - theta * lam[t - 1, 1:])
    assert model.prior_lam(lam, theta, sigma) == pytest.approx(want)
    beta = np.array([0.5, -0.5])
    assert model.prior_beta(beta) == pytest.approx(
        multivariate_normal(np.zeros(1), centring_projection(2)[1:, 1:]).logpdf(beta[1:]))


def test_pl_fit_keeps_centring_and_prior():
    ds = toy(T=3, M=3)
    s = pl_fit(ds, PLConfig(iterations=6000, thin=2, seed=1, prior_only=True))
    assert np.allclose(s.lam.sum(axis=2), 0.0, atol=1e-9)
    # theta ~ U(0, 1), sigma ~ Gamma(2, rate 2)
    for trace, mean, sd in ((s.theta, 0.5, np.sqrt(1 / 12)), (s.sigma, 1.0, np.sqrt(0.5))):
        se = sd / np.sqrt(ess(trace))
        assert abs(trace.mean() - mean) < 4 * se


def test_pl_fit_records_loglik():
    ds = register(load(*fixture_paths()))
    s = pl_fit(ds, PLConfig(iterations=600, thin=3, seed=2))
    state = PLState(s.lam[-1], s.beta[-1], float(s.theta[-1]), float(s.sigma[-1]))
    assert PLModel(ds).loglik(state) == pytest.approx(s.loglik[-1])


def test_mixture_likelihood_normalised():
    ds = toy(T=1, M=3)
    state = PLMixState(np.array([[0.0, 1.0, -1.0], [2.0, 0.0, 0.0]]), np.array([0.3, 0.7]))
    total = 0.0
    for p in permutations((1, 2, 3)):
        one = Dataset(ds.actors.values(), [ListRecord(1, 0, 0, p)], 0, 0)
        total += np.exp(plmix_loglik(one, state))
    assert total == pytest.approx(1.0)


def test_gibbs_and_mh_agree_single_component():
    ds = window_select(register(load(*fixture_paths())), (4, 7))
    a = plmix_fit(ds, 1, PLMixConfig(iterations=4000, thin=2, seed=1))
    b = plmix_fit(ds, 1, PLMixConfig(iterations=4000, thin=2, seed=2, method="mh"))

    def centred(s):
        x = s.lam[:, 0, :]
        return x - x.mean(axis=1, keepdims=True)

    ca, cb = centred(a), centred(b)
    se = np.sqrt(np.array([ca[:, k].var() / ess(ca[:, k]) + cb[:, k].var() / ess(cb[:, k]) for k in range(ca.shape[1])]))
    assert np.all(np.abs(ca.mean(axis=0) - cb.mean(axis=0)) < 4 * se)


def test_dic_formula():
    value, p_d = dic([-10.0, -12.0], -10.5)
    assert p_d == pytest.approx(22.0 - 21.0)
    assert value == pytest.approx(23.0)


def test_uniform_elpd_exact_and_paired():
    ds = register(load(*fixture_paths()))
    r = elpd_loo("uniform", ds, ElpdConfig())
    assert r.estimate == pytest.approx(-sum(lgamma(len(x.actors) + 1) for x in ds.lists), abs=1e-12)
    d, se = paired_difference(r, r)
    assert d == 0.0 and se == 0.0
    with pytest.raises(ValueError):
        elpd_loo("nonsense", ds)


def test_pl_worked_value_and_shift_invariance():
    assert np.exp(pl_list_loglik(np.log([2.0, 1.0, 1.0]))) == pytest.approx(0.25)
    ds = toy(T=2, M=3)
    model = PLModel(ds)
    rng = np.random.default_rng(3)
    lam = rng.standard_normal((2, 3))
    beta = rng.standard_normal(ds.S)
    base = model.loglik(PLState(lam, beta, 0.5, 1.0))
    assert model.loglik(PLState(lam + 1.7, beta - 0.4, 0.5, 1.0)) == pytest.approx(base)
    assert model.loglik(PLState(np.zeros((2, 3)), np.zeros(ds.S), 0.5, 1.0)) == pytest.approx(-2 * lgamma(4))


def test_dic_point_mass():
    value, p_d = dic([-7.0, -7.0], -7.0)
    assert p_d == 0.0 and value == 14.0
