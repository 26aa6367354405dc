"""Plackett-Luce baselines and predictive model comparison.

Two models: a Plackett-Luce time series whose per-year actor strengths
follow a centred AR(1) process plus centred seniority effects, and a
time-free mixture of D Plackett-Luce components for a short window.  Both
have their own samplers.  ``elpd_loo`` refits a model once per held-out
list and scores the held-out list under the refitted posterior.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import lgamma, log, sqrt
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InsufficientData
from .latent import HyperParams
from .obsmodel import RatioCache, loglik_from_ratios
from .pipeline import Dataset
from .sampler import MCMCConfig, SampleStore, ess, run_chain

SIGMA_SHAPE = 2.0
SIGMA_RATE = 2.0
MIX_SHAPE = 1.0
MIX_RATE = 0.001


def pl_list_loglik(values: np.ndarray) -> float:
    """log PL probability of a list whose j-th entry has log-strength values[j]."""
    v = np.asarray(values, dtype=float)
    # reverse cumulative log-sum-exp gives the log normaliser of each stage
    tail = np.logaddexp.accumulate(v[::-1])[::-1]
    return float((v - tail).sum())


# ---------------------------------------------------------------------------
# time series


@dataclass
class PLState:
    lam: np.ndarray  # (T, M), rows sum to zero
    beta: np.ndarray  # (S,), sums to zero
    theta: float
    sigma: float


@dataclass
class PLConfig:
    iterations: int = 2000
    burn_in: int | None = None
    thin: int = 10
    seed: int = 0
    bandwidth: float = 0.5
    beta_bandwidth: float = 0.2
    prior_only: bool = False

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.iterations // 5
        if not (self.iterations > self.burn_in >= 0) or self.thin < 1:
            raise ValueError("need iterations > burn_in >= 0 and thin >= 1")


def centring_projection(M: int) -> np.ndarray:
    Q = np.eye(M) - np.full((M, M), 1.0 / M)
    if not np.allclose(Q @ Q, Q):
        raise AssertionError("centring matrix is not idempotent")
    return Q


class PLModel:
    """Index structures shared by the time-series likelihood and prior."""

    def __init__(self, dataset: Dataset):
        self.data = dataset
        self.actors = dataset.actor_ids
        self.col = {a: k for k, a in enumerate(self.actors)}
        self.years = dataset.years
        self.T = len(self.years)
        self.M = len(self.actors)
        self.S = dataset.S
        self.Q = centring_projection(self.M) if self.M else np.zeros((0, 0))
        self.list_year = []
        self.list_cols = []
        self.list_levels = []
        for rec in dataset.lists:
            t = min(max(rec.midpoint, dataset.B), dataset.E)
            self.list_year.append(t - dataset.B)
            self.list_cols.append(np.array([self.col[a] for a in rec.actors], dtype=int))
            self.list_levels.append(np.array([dataset.seniority[(t, a)] - 1 for a in rec.actors], dtype=int))
        self.lists_in_year = [[i for i, y in enumerate(self.list_year) if y == ti] for ti in range(self.T)]

    def list_loglik(self, i: int, state: PLState) -> float:
        v = state.lam[self.list_year[i], self.list_cols[i]]
        if self.S:
            v = v + state.beta[self.list_levels[i]]
        return pl_list_loglik(v)

    def loglik(self, state: PLState) -> float:
        return float(sum(self.list_loglik(i, state) for i in range(len(self.list_year))))

    def prior_lam(self, lam: np.ndarray, theta: float, sigma: float) -> float:
        if not (0.0 <= theta < 1.0) or sigma <= 0:
            return float("-inf")
        M, T = self.M, self.T
        if M < 2:
            return 0.0
        dim = M - 1
        # on centred vectors the reduced-coordinate quadratic form is the plain sum of squares
        const = -0.5 * dim * log(2 * np.pi) + 0.5 * log(M)
        init_var = sigma * sigma / (1.0 - theta * theta)
        lp = const - 0.5 * dim * log(init_var) - 0.5 * float(lam[0] @ lam[0]) / init_var
        if T > 1:
            d = lam[1:] - theta * lam[:-1]
            lp += (T - 1) * (const - dim * log(sigma)) - 0.5 * float((d * d).sum()) / (sigma * sigma)
        return float(lp)

    def prior_beta(self, beta: np.ndarray) -> float:
        S = beta.size
        if S < 2:
            return 0.0
        return float(-0.5 * (S - 1) * log(2 * np.pi) + 0.5 * log(S) - 0.5 * beta @ beta)

    @staticmethod
    def prior_scalars(theta: float, sigma: float) -> float:
        if not (0.0 <= theta <= 1.0) or sigma <= 0:
            return float("-inf")
        return SIGMA_SHAPE * log(SIGMA_RATE) - lgamma(SIGMA_SHAPE) + (SIGMA_SHAPE - 1) * log(sigma) - SIGMA_RATE * sigma

    def log_prior(self, state: PLState) -> float:
        return self.prior_lam(state.lam, state.theta, state.sigma) + self.prior_beta(state.beta) + self.prior_scalars(state.theta, state.sigma)


def pl_loglik(dataset: Dataset, state: PLState) -> float:
    return PLModel(dataset).loglik(state)


def pl_prior_logpdf(dataset: Dataset, state: PLState) -> float:
    return PLModel(dataset).log_prior(state)


@dataclass
class PLSamples:
    years: tuple[int, ...]
    actors: tuple[int, ...]
    lam: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    loglik: np.ndarray
    accept: dict = field(default_factory=dict)

    def ess_report(self) -> dict[str, float]:
        out = {"theta": ess(self.theta), "sigma": ess(self.sigma), "loglik": ess(self.loglik)}
        for r in range(self.beta.shape[1]):
            out[f"beta_{r + 1}"] = ess(self.beta[:, r])
        return out


def pl_fit(dataset: Dataset, cfg: PLConfig) -> PLSamples:
    """Random-walk Metropolis over centred strengths, effects, theta and sigma."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    model = PLModel(dataset)
    T, M, S = model.T, model.M, model.S
    use_lik = not cfg.prior_only
    state = PLState(np.zeros((T, M)), np.zeros(S), float(rng.random()), float(rng.gamma(SIGMA_SHAPE, 1.0 / SIGMA_RATE)))
    terms = np.array([model.list_loglik(i, state) for i in range(len(model.list_year))]) if use_lik else np.zeros(0)
    prior_lam = model.prior_lam(state.lam, state.theta, state.sigma)
    tries = {k: 0 for k in ("lam", "beta", "theta", "sigma")}
    acc = dict(tries)
    out = {"lam": [], "beta": [], "theta": [], "sigma": [], "loglik": []}

    def accept(log_alpha: float) -> bool:
        return log_alpha >= 0.0 or np.log(rng.random()) < log_alpha

    for it in range(1, cfg.iterations + 1):
        # paired moves keep each year's vector centred: a step on actor j is
        # mirrored on the reference actor 0, i.e. a move in reduced coordinates
        for ti in rng.permutation(T):
            for j in range(1, M):
                tries["lam"] += 1
                eps = cfg.bandwidth * rng.standard_normal()
                cand = state.lam.copy()
                cand[ti, j] += eps
                cand[ti, 0] -= eps
                new_prior = model.prior_lam(cand, state.theta, state.sigma)
                log_alpha = new_prior - prior_lam
                changed = []
                if use_lik:
                    old_lam = state.lam
                    state.lam = cand
                    for i in model.lists_in_year[ti]:
                        cols = model.list_cols[i]
                        if j in cols or 0 in cols:
                            term = model.list_loglik(i, state)
                            log_alpha += term - terms[i]
                            changed.append((i, term))
                    state.lam = old_lam
                if accept(log_alpha):
                    state.lam = cand
                    prior_lam = new_prior
                    for i, term in changed:
                        terms[i] = term
                    acc["lam"] += 1
        for r in range(1, S):
            tries["beta"] += 1
            eps = cfg.beta_bandwidth * rng.standard_normal()
            cand = state.beta.copy()
            cand[r] += eps
            cand[0] -= eps
            log_alpha = model.prior_beta(cand) - model.prior_beta(state.beta)
            new_terms = terms
            if use_lik:
                trial = PLState(state.lam, cand, state.theta, state.sigma)
                new_terms = np.array([model.list_loglik(i, trial) for i in range(len(model.list_year))])
                log_alpha += float(new_terms.sum() - terms.sum())
            if accept(log_alpha):
                state.beta = cand
                terms = new_terms
                acc["beta"] += 1
        tries["theta"] += 1
        th = state.theta + 0.1 * rng.standard_normal()
        th = -th if th < 0 else (2.0 - th if th > 1 else th)  # reflect into [0, 1]
        new_prior = model.prior_lam(state.lam, th, state.sigma)
        if accept(new_prior - prior_lam):
            state.theta, prior_lam = th, new_prior
            acc["theta"] += 1
        tries["sigma"] += 1
        sg = state.sigma * np.exp(0.2 * rng.standard_normal())
        new_prior = model.prior_lam(state.lam, state.theta, sg)
        log_alpha = (new_prior + model.prior_scalars(state.theta, sg) + log(sg)) - (
            prior_lam + model.prior_scalars(state.theta, state.sigma) + log(state.sigma))
        if accept(log_alpha):
            state.sigma, prior_lam = sg, new_prior
            acc["sigma"] += 1
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            out["lam"].append(state.lam.copy())
            out["beta"].append(state.beta.copy())
            out["theta"].append(state.theta)
            out["sigma"].append(state.sigma)
            out["loglik"].append(float(terms.sum()) if use_lik else 0.0)
    L = len(out["theta"])
    return PLSamples(
        tuple(model.years),
        tuple(model.actors),
        np.asarray(out["lam"]).reshape(L, T, M),
        np.asarray(out["beta"]).reshape(L, S),
        np.asarray(out["theta"]),
        np.asarray(out["sigma"]),
        np.asarray(out["loglik"]),
        {k: acc[k] / tries[k] if tries[k] else float("nan") for k in tries},
    )


def pl_curves(samples: PLSamples, dataset: Dataset) -> list[tuple[int, int, float, float]]:
    """(year, actor, mean, sd) of strength over each actor's activity window."""
    rows = []
    for k, a in enumerate(samples.actors):
        b, e = dataset.window_of(a)
        for t in range(b, e + 1):
            x = samples.lam[:, t - dataset.B, k]
            rows.append((t, a, float(x.mean()), float(x.std())))
    return sorted(rows)


# ---------------------------------------------------------------------------
# mixture


@dataclass
class PLMixState:
    lam: np.ndarray  # (D, M) log strengths
    omega: np.ndarray  # (D,)


@dataclass
class PLMixConfig:
    iterations: int = 2000
    burn_in: int | None = None
    thin: int = 5
    seed: int = 0
    method: str = "gibbs"
    bandwidth: float = 0.5

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.iterations // 5
        if self.method not in ("gibbs", "mh"):
            raise ValueError("method must be 'gibbs' or 'mh'")
        if not (self.iterations > self.burn_in >= 0) or self.thin < 1:
            raise ValueError("need iterations > burn_in >= 0 and thin >= 1")


@dataclass
class PLMixSamples:
    actors: tuple[int, ...]
    lam: np.ndarray  # (L, D, M)
    omega: np.ndarray  # (L, D)
    loglik: np.ndarray
    accept: float = float("nan")


def _mix_index(dataset: Dataset) -> tuple[tuple[int, ...], list[np.ndarray]]:
    actors = tuple(sorted({a for r in dataset.lists for a in r.actors} | set(dataset.actor_ids)))
    col = {a: k for k, a in enumerate(actors)}
    return actors, [np.array([col[a] for a in r.actors], dtype=int) for r in dataset.lists]


def _component_logliks(lists_cols: Sequence[np.ndarray], lam: np.ndarray) -> np.ndarray:
    """(N, D) matrix of per-list, per-component PL log-likelihoods."""
    out = np.empty((len(lists_cols), lam.shape[0]))
    for i, cols in enumerate(lists_cols):
        for d in range(lam.shape[0]):
            out[i, d] = pl_list_loglik(lam[d, cols])
    return out


def plmix_loglik(dataset: Dataset, state: PLMixState) -> float:
    _, cols = _mix_index(dataset)
    ll = _component_logliks(cols, state.lam)
    with np.errstate(divide="ignore"):
        return float(logsumexp(ll + np.log(state.omega)[None, :], axis=1).sum())


def _mix_prior_lam(lam: np.ndarray) -> float:
    # exp(lam) ~ Gamma(shape, rate) written as a density on lam
    return float((MIX_SHAPE * log(MIX_RATE) - lgamma(MIX_SHAPE) + MIX_SHAPE * lam - MIX_RATE * np.exp(lam)).sum())


def plmix_fit(dataset: Dataset, D: int, cfg: PLMixConfig) -> PLMixSamples:
    if D < 1:
        raise ValueError("D must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    actors, cols = _mix_index(dataset)
    M, N = len(actors), len(cols)
    lam = np.log(rng.gamma(MIX_SHAPE, 1.0, size=(D, M)))
    omega = rng.dirichlet(np.ones(D))
    out_lam, out_omega, out_ll = [], [], []
    tries = accepted = 0
    for it in range(1, cfg.iterations + 1):
        if cfg.method == "gibbs":
            lam, omega = _gibbs_step(lam, omega, cols, M, rng)
        else:
            lam, omega, a, n = _mh_step(lam, omega, cols, cfg.bandwidth, rng)
            accepted += a
            tries += n
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            out_lam.append(lam.copy())
            out_omega.append(omega.copy())
            ll = _component_logliks(cols, lam)
            with np.errstate(divide="ignore"):
                out_ll.append(float(logsumexp(ll + np.log(omega)[None, :], axis=1).sum()))
    return PLMixSamples(actors, np.asarray(out_lam), np.asarray(out_omega), np.asarray(out_ll),
                        accepted / tries if tries else float("nan"))


def _gibbs_step(lam, omega, cols, M, rng):
    D = lam.shape[0]
    ll = _component_logliks(cols, lam)
    with np.errstate(divide="ignore"):
        logw = ll + np.log(omega)[None, :]
    prob = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    z = np.array([rng.choice(D, p=pr / pr.sum()) for pr in prob], dtype=int)
    strength = np.exp(lam)
    shape = np.full((D, M), MIX_SHAPE)
    rate = np.full((D, M), MIX_RATE)
    for i, c in enumerate(cols):
        d = z[i]
        w = strength[d, c]
        tail = np.cumsum(w[::-1])[::-1]
        # one exponential latent per stage, the last stage being deterministic
        for j in range(len(c) - 1):
            y = rng.exponential(1.0 / tail[j])
            shape[d, c[j]] += 1.0
            rate[d, c[j:]] += y
    new_strength = rng.gamma(shape, 1.0 / rate)
    counts = np.bincount(z, minlength=D)
    omega = rng.dirichlet(1.0 + counts)
    return np.log(new_strength), omega


def _mh_step(lam, omega, cols, bandwidth, rng):
    D, M = lam.shape
    accepted = tries = 0

    def target(lm, om):
        ll = _component_logliks(cols, lm)
        with np.errstate(divide="ignore"):
            return float(logsumexp(ll + np.log(om)[None, :], axis=1).sum()) + _mix_prior_lam(lm)

    cur = target(lam, omega)
    for d in range(D):
        for k in range(M):
            tries += 1
            cand = lam.copy()
            cand[d, k] += bandwidth * rng.standard_normal()
            new = target(cand, omega)
            if np.log(rng.random()) < new - cur:
                lam, cur = cand, new
                accepted += 1
    if D > 1:
        tries += 1
        cand_om = rng.dirichlet(np.ones(D))  # independence proposal from the flat prior
        new = target(lam, cand_om)
        if np.log(rng.random()) < new - cur:
            omega, cur = cand_om, new
            accepted += 1
    return lam, omega, accepted, tries


def dic(loglik_draws: Sequence[float], loglik_at_mean: float) -> tuple[float, float]:
    """(DIC, effective number of parameters) from draw log-likelihoods."""
    dbar = -2.0 * float(np.mean(loglik_draws))
    p_d = dbar - (-2.0 * loglik_at_mean)
    return dbar + p_d, p_d


def plmix_dic(samples: PLMixSamples, dataset: Dataset) -> tuple[float, float]:
    """DIC with components put in decreasing-weight order in each draw before averaging."""
    order = np.argsort(-samples.omega, axis=1, kind="stable")
    lam = np.take_along_axis(samples.lam, order[:, :, None], axis=1)
    omega = np.take_along_axis(samples.omega, order, axis=1)
    mean_state = PLMixState(lam.mean(axis=0), omega.mean(axis=0))
    return dic(samples.loglik, plmix_loglik(dataset, mean_state))


def select_D(dataset: Dataset, D_range: Sequence[int], cfg: PLMixConfig) -> tuple[int, dict[int, float]]:
    scores = {}
    for D in D_range:
        scores[int(D)] = plmix_dic(plmix_fit(dataset, int(D), cfg), dataset)[0]
    best = min(scores, key=lambda d: (scores[d], d))
    return best, scores


# ---------------------------------------------------------------------------
# leave-one-out predictive comparison


@dataclass
class ElpdResult:
    model: str
    estimate: float
    se: float
    terms: np.ndarray
    n_lists: int
    D: int | None = None
    mc_var: np.ndarray | None = None

    def row(self, period: str = "") -> dict:
        return {"period": period, "model": self.model, "n_lists": self.n_lists, "D": self.D,
                "elpd": self.estimate, "se": self.se}


@dataclass
class ElpdConfig:
    po: MCMCConfig = field(default_factory=lambda: MCMCConfig(iterations=1000, thin=5))
    po_hyper: HyperParams | None = None
    mix: PLMixConfig = field(default_factory=PLMixConfig)
    D: int | None = None
    D_range: tuple[int, ...] = (1, 2, 3)
    seed: int = 0
    workers: int = 1
    conservative: bool = False


def _po_predictive(store: SampleStore, rec, mode: str) -> tuple[float, float]:
    """Posterior mean probability of a held-out list, averaging over its admissible years."""
    cache = RatioCache()
    arr = store.arrays()
    probs = np.zeros(len(store))
    years = [t for t in rec.years if t in store.actors_by_year]
    for t in years:
        actors = store.actors_by_year[t]
        idx = [actors.index(a) for a in rec.actors]
        for k, A in enumerate(store.edges[t]):
            sub = A[np.ix_(idx, idx)]
            r = cache.ratios(sub, mode)
            probs[k] += np.exp(loglik_from_ratios(r, arr["p"][k], mode)) / len(years)
    return float(probs.mean()), float(probs.var(ddof=1) / len(probs)) if len(probs) > 1 else 0.0


def _mix_predictive(samples: PLMixSamples, rec) -> tuple[float, float]:
    col = {a: k for k, a in enumerate(samples.actors)}
    c = np.array([col[a] for a in rec.actors])
    probs = np.empty(len(samples.omega))
    for k in range(len(probs)):
        ll = np.array([pl_list_loglik(samples.lam[k, d, c]) for d in range(samples.lam.shape[1])])
        probs[k] = float(np.exp(logsumexp(ll, b=samples.omega[k])))
    return float(probs.mean()), float(probs.var(ddof=1) / len(probs)) if len(probs) > 1 else 0.0


def _fold(args):
    model, dataset, i, cfg, seq, D = args
    rec = dataset.lists[i]
    train = dataset.without_list(i)
    fold_seed = int(seq.generate_state(1)[0])
    if model == "uniform":
        return -lgamma(len(rec.actors) + 1), 0.0
    if model == "po":
        hyper = cfg.po_hyper or HyperParams(K=dataset.default_K, covariates=False)
        po_cfg = MCMCConfig(**{**cfg.po.__dict__, "seed": fold_seed, "burn_in": cfg.po.burn_in})
        store = run_chain(train, hyper, po_cfg)
        mean, var = _po_predictive(store, rec, hyper.noise_mode)
    else:
        mix_cfg = PLMixConfig(**{**cfg.mix.__dict__, "seed": fold_seed})
        mean, var = _mix_predictive(plmix_fit(train, D, mix_cfg), rec)
    return log(mean), var / (mean * mean) if mean > 0 else float("inf")


def elpd_loo(model: str, dataset: Dataset, cfg: ElpdConfig | None = None) -> ElpdResult:
    """Leave-one-out expected log predictive density for 'po', 'plmix' or 'uniform'."""
    cfg = cfg or ElpdConfig()
    n = dataset.N
    if n < 2:
        raise InsufficientData("need at least two lists")
    if model not in ("po", "plmix", "uniform"):
        raise ValueError(f"unknown model {model!r}")
    D = None
    if model == "plmix":
        D = cfg.D or select_D(dataset, cfg.D_range, PLMixConfig(**{**cfg.mix.__dict__, "seed": cfg.seed}))[0]
    seqs = np.random.SeedSequence(cfg.seed).spawn(n)
    jobs = [(model, dataset, i, cfg, seqs[i], D) for i in range(n)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_fold, jobs))
    else:
        results = [_fold(j) for j in jobs]
    terms = np.array([r[0] for r in results])
    mc_var = np.array([r[1] for r in results])
    var = terms.var(ddof=1) if n > 1 else 0.0
    se = sqrt(var * n + (mc_var.sum() if cfg.conservative else 0.0))
    return ElpdResult(model, float(terms.sum()), float(se), terms, n, D, mc_var)


def paired_difference(a: ElpdResult, b: ElpdResult) -> tuple[float, float]:
    """Difference of two ELPD estimates on the same folds with its paired standard error."""
    diff = a.terms - b.terms
    n = diff.size
    return float(diff.sum()), float(sqrt(diff.var(ddof=1) * n))
