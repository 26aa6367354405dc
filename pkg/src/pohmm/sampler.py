"""Metropolis-Hastings sampler for the time-series partial-order model.

State layout: authority vectors live in one ``(n_sites, K)`` array with one
row per (actor, year) site, stored actor by actor in year order so that a
site's temporal neighbours are the adjacent rows.  Each year keeps its status
matrix, its dominance relation and the list of lists currently dated there.
Per-list count ratios are cached so that changing p never recounts.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import log
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CoherenceError, DomainError
from .latent import (
    HyperParams,
    LatentParams,
    beta1_logpdf,
    dominance,
    effects_logprior,
    gauss_logpdf_rows,
    log_prior,
    sigma_rho,
)
from .obsmodel import NoiseModel, RatioCache, loglik_from_ratios, loglik_total
from .pipeline import ActorRecord, Dataset, ListRecord
from .poset import PartialOrder, closure_matrix, intersection_order

UPDATE_KINDS = ("u", "tau", "beta", "rho", "theta", "p", "rho_w", "theta_w", "beta_shift")


@dataclass
class MCMCConfig:
    iterations: int = 2000
    burn_in: int | None = None
    thin: int = 10
    seed: int = 0
    beta_bandwidth: float = 0.2
    schedule: dict = field(default_factory=lambda: {k: 1 for k in UPDATE_KINDS})
    init: str = "ordered"
    prior_only: bool = False
    fixed_time: bool = False
    scaled_proposals: bool = False
    debug_every: int = 0
    init_window: int = 2

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.iterations // 5
        if not (self.iterations > self.burn_in >= 0):
            raise DomainError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise DomainError("thinning must be at least 1")
        if self.beta_bandwidth < 0:
            raise DomainError("bandwidth must be non-negative")
        if self.init not in ("ordered", "disordered"):
            raise DomainError(f"unknown init mode {self.init!r}")
        sched = {k: 1 for k in UPDATE_KINDS}
        sched.update(self.schedule or {})
        self.schedule = sched

    @property
    def n_samples(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


def collapse_time(dataset: Dataset) -> Dataset:
    """Single-year copy of a dataset: every actor active, every list dated at B."""
    t = dataset.B
    actors = [ActorRecord(a.id, a.name, a.group, t, t, a.focus) for a in dataset.actors.values()]
    lists = [ListRecord(r.list_id, t, t, r.actors) for r in dataset.lists]
    return Dataset(actors, lists, t, t)


# ---------------------------------------------------------------------------
# chain


class Chain:
    def __init__(self, dataset: Dataset, hyper: HyperParams, cfg: MCMCConfig, rng: np.random.Generator):
        if cfg.fixed_time:
            dataset = collapse_time(dataset)
            hyper = HyperParams(hyper.K, hyper.gamma, hyper.delta, False, hyper.noise_mode, covariates=False)
        self.data = dataset
        self.hyper = hyper
        self.cfg = cfg
        self.rng = rng
        self.K = hyper.K
        self.mode = hyper.noise_mode
        self.cache = RatioCache()
        self.use_lik = not cfg.prior_only
        self.S = dataset.S if hyper.covariates else 0

        self.years = dataset.years
        self.year_index = {t: k for k, t in enumerate(self.years)}
        self._build_sites()
        self._build_lists()
        self.accepts = {k: 0 for k in UPDATE_KINDS}
        self.tries = {k: 0 for k in UPDATE_KINDS}

    # -- layout ------------------------------------------------------------

    def _build_sites(self):
        d = self.data
        site_actor, site_year = [], []
        self.actor_first_site = {}
        for a in d.actor_ids:
            b, e = d.window_of(a)
            self.actor_first_site[a] = len(site_actor)
            for t in range(b, e + 1):
                site_actor.append(a)
                site_year.append(self.year_index[t])
        self.n_sites = len(site_actor)
        self.site_actor = np.array(site_actor, dtype=int)
        self.site_year = np.array(site_year, dtype=int)
        has_prev = np.zeros(self.n_sites, dtype=bool)
        has_next = np.zeros(self.n_sites, dtype=bool)
        for s in range(1, self.n_sites):
            if site_actor[s] == site_actor[s - 1]:
                has_prev[s] = True
                has_next[s - 1] = True
        self.has_prev, self.has_next = has_prev, has_next
        self.init_sites = np.nonzero(~has_prev)[0]
        self.trans_sites = np.nonzero(has_prev)[0]

        self.year_sites, self.year_levels, self.year_actors, self.local_row = [], [], [], {}
        for ti, t in enumerate(self.years):
            actors = d.active[t]
            sites = np.array([self.actor_first_site[a] + t - d.window_of(a)[0] for a in actors], dtype=int)
            self.year_sites.append(sites)
            self.year_actors.append(actors)
            levels = np.array([d.seniority[(t, a)] - 1 for a in actors], dtype=int) if self.S else np.zeros(len(actors), dtype=int)
            self.year_levels.append(levels)
            for r, a in enumerate(actors):
                self.local_row[(ti, a)] = r
        self.site_row = np.zeros(self.n_sites, dtype=int)
        self.site_level = np.zeros(self.n_sites, dtype=int)
        for ti, sites in enumerate(self.year_sites):
            self.site_row[sites] = np.arange(len(sites))
            self.site_level[sites] = self.year_levels[ti]
        self.level_sites = [np.nonzero(self.site_level == r)[0] for r in range(self.S)]
        # years and rows touched by each covariate level
        self.level_years = [[] for _ in range(self.S)]
        for ti, levels in enumerate(self.year_levels):
            for r in range(self.S):
                rows = np.nonzero(levels == r)[0]
                if rows.size:
                    self.level_years[r].append((ti, rows))

    def _build_lists(self):
        d = self.data
        self.n_lists = len(d.lists)
        self.list_members = [set(rec.actors) for rec in d.lists]
        self.list_rows = []
        for rec in d.lists:
            rows = {}
            for t in rec.years:
                ti = self.year_index[t]
                local = np.array([self.local_row[(ti, a)] for a in rec.actors], dtype=int)
                m = len(self.year_actors[ti])
                rows[ti] = (local[:, None] * m + local[None, :]).ravel()
            self.list_rows.append(rows)
        self.uncertain = [i for i, rec in enumerate(d.lists) if rec.tau_plus > rec.tau_minus]

    # -- initialisation ------------------------------------------------------

    def initialise(self):
        rng, d = self.rng, self.data
        self.rho = float(rng.beta(1.0, self.hyper.gamma))
        self.rho = min(self.rho, 1.0 - 1e-12)
        self.theta = 0.0 if self.cfg.fixed_time else float(rng.random())
        self.p = float(rng.beta(1.0, self.hyper.delta))
        if self.S and self.hyper.beta_constrained:
            self.beta = 0.1 * ((self.S + 1) / 2.0 - np.arange(1, self.S + 1))
        else:
            self.beta = np.zeros(self.S)
        self.tau = np.array([int(rng.integers(rec.tau_minus, rec.tau_plus + 1)) for rec in d.lists], dtype=int)
        self.U = np.zeros((self.n_sites, self.K))
        if self.cfg.init == "disordered":
            self._init_disordered()
        else:
            self._init_ordered()
        self._refresh_all()

    def _init_disordered(self):
        if self.K < 2:
            return  # all-equal rows: every pair tied, hence unordered
        M = len(self.data.actor_ids)
        rank = {a: k for k, a in enumerate(self.data.actor_ids)}
        x = np.array([rank[a] for a in self.site_actor], dtype=float)
        x = (x - (M - 1) / 2.0) / max(M, 1)
        self.U[:, 0] = x
        self.U[:, 1] = -x

    def init_targets(self) -> list[np.ndarray]:
        """Per-year acyclic closed relation from lists dated near that year."""
        d, w = self.data, self.cfg.init_window
        targets = []
        for ti, t in enumerate(self.years):
            actors = self.year_actors[ti]
            active = set(actors)
            lists = []
            for rec in d.lists:
                if abs((rec.tau_minus + rec.tau_plus) / 2.0 - t) <= w:
                    y = [a for a in rec.actors if a in active]
                    if len(y) >= 2:
                        lists.append(y)
            pos = {a: k for k, a in enumerate(actors)}
            R = np.zeros((len(actors), len(actors)), dtype=bool)
            if lists:
                for a, b in intersection_order(lists):
                    R[pos[a], pos[b]] = True
            C = closure_matrix(R)
            R &= ~C.T  # drop every edge whose reverse is reachable
            targets.append(closure_matrix(R))
        return targets

    def _topo_sort(self, A: np.ndarray, key: np.ndarray) -> list[int]:
        """Linear extension of A that always takes the available element with the largest key."""
        m = A.shape[0]
        indeg = A.sum(axis=0).astype(int)
        done = np.zeros(m, dtype=bool)
        out = []
        for _ in range(m):
            avail = np.nonzero((indeg == 0) & ~done)[0]
            k = avail[np.argmax(key[avail])]
            out.append(int(k))
            done[k] = True
            indeg -= A[k].astype(int)
        return out

    def _init_ordered(self):
        for ti, A in enumerate(self.init_targets()):
            m = A.shape[0]
            if m == 0:
                continue
            cols = []
            first = self._topo_sort(A, self.rng.random(m))
            cols.append(first)
            if self.K >= 2:
                pos = np.empty(m)
                pos[first] = np.arange(m)
                cols.append(self._topo_sort(A, pos))
            while len(cols) < self.K:
                cols.append(self._topo_sort(A, self.rng.random(m)))
            scale = 1.5 / max(1.0, (m - 1) / 2.0)
            sites = self.year_sites[ti]
            for k, order in enumerate(cols):
                vals = np.empty(m)
                vals[order] = ((m - 1) / 2.0 - np.arange(m)) * scale
                self.U[sites, k] = vals

    def _refresh_all(self):
        self.chol = np.linalg.cholesky(sigma_rho(self.rho, self.K))
        self.Z = []
        self.above = []
        for ti in range(len(self.years)):
            Zt = self.U[self.year_sites[ti]] + self._lift(ti)
            self.Z.append(Zt)
            self.above.append(dominance(Zt))
        self.lists_at = [set() for _ in self.years]
        for i in range(self.n_lists):
            self.lists_at[self.year_index[int(self.tau[i])]].add(i)
        self.ratios = [None] * self.n_lists
        self.terms = np.zeros(self.n_lists)
        self._terms_at_p = {}
        if self.use_lik:
            for i in range(self.n_lists):
                ti = self.year_index[int(self.tau[i])]
                self.ratios[i], self.terms[i] = self._term(i, ti, self.above[ti])
        self.prior_u = self._prior_u(self.rho, self.theta)

    def _lift(self, ti: int) -> np.ndarray:
        if not self.S:
            return 0.0
        return self.beta[self.year_levels[ti]][:, None]

    # -- densities -----------------------------------------------------------

    def _prior_u(self, rho: float, theta: float) -> float:
        if theta >= 1.0:
            return float("-inf")
        total = gauss_logpdf_rows(self.U[self.init_sites], rho, 1.0 / (1.0 - theta * theta)).sum()
        if self.trans_sites.size:
            X = self.U[self.trans_sites] - theta * self.U[self.trans_sites - 1]
            total += gauss_logpdf_rows(X, rho).sum()
        return float(total)

    def _term(self, i: int, ti: int, A: np.ndarray) -> tuple[np.ndarray, float]:
        """Count ratios and log-likelihood of list i under relation A of year ti."""
        sub = A.ravel().take(self.list_rows[i][ti])
        key = sub.tobytes()
        hit = self._terms_at_p.get(key)
        if hit is None:
            n = len(self.data.lists[i].actors)
            rat = self.cache.ratios(sub.reshape(n, n), self.mode)
            hit = (rat, loglik_from_ratios(rat, self.p, self.mode))
            self._terms_at_p[key] = hit
        return hit

    def log_posterior(self) -> float:
        lp = beta1_logpdf(self.rho, self.hyper.gamma) + beta1_logpdf(self.p, self.hyper.delta)
        lp += self.prior_u + effects_logprior(self.beta, self.hyper.beta_constrained)
        for rec in self.data.lists:
            lp -= log(rec.tau_plus - rec.tau_minus + 1)
        return float(lp + self.loglik())

    def loglik(self) -> float:
        return float(self.terms.sum()) if self.use_lik else 0.0

    # -- updates -------------------------------------------------------------

    def _quad(self, x: np.ndarray) -> float:
        rho, K = self.rho, self.K
        sx = float(x.sum())
        return (float(x @ x) - rho / (1.0 + (K - 1) * rho) * sx * sx) / (1.0 - rho)

    def _conditional(self, s: int) -> tuple[np.ndarray, float, float]:
        """Mean, exact variance scale and proposal variance scale for site s."""
        th = self.theta
        prev, nxt = self.has_prev[s], self.has_next[s]
        if prev and nxt:
            mean = th / (1.0 + th * th) * (self.U[s - 1] + self.U[s + 1])
            exact = 1.0 / (1.0 + th * th)
            scaled = (1.0 - th * th) / (1.0 + th * th)
        elif nxt:
            mean = th * self.U[s + 1]
            exact, scaled = 1.0, 1.0 - th * th
        elif prev:
            mean = th * self.U[s - 1]
            exact, scaled = 1.0, 1.0 - th * th
        else:
            mean = np.zeros(self.K)
            exact, scaled = 1.0 / (1.0 - th * th), 1.0
        return mean, exact, (scaled if self.cfg.scaled_proposals else exact)

    def update_u(self, s: int) -> bool:
        self.tries["u"] += 1
        mean, exact, prop = self._conditional(s)
        old = self.U[s]
        new = mean + np.sqrt(prop) * (self.chol @ self.rng.standard_normal(self.K))
        # difference of Gaussian quadratic forms; normalising constants cancel
        dq = self._quad(new - mean) - self._quad(old - mean)
        d_prior = -0.5 * dq / exact
        log_alpha = 0.0
        if self.cfg.scaled_proposals:
            log_alpha += d_prior + 0.5 * dq / prop
        ti = self.site_year[s]
        r = self.site_row[s]
        Zt = self.Z[ti]
        z = new + (self.beta[self.site_level[s]] if self.S else 0.0)
        row = (z > Zt).all(axis=1)
        col = (Zt > z).all(axis=1)
        row[r] = col[r] = False
        A = self.above[ti]
        changed = not (np.array_equal(row, A[r]) and np.array_equal(col, A[:, r]))
        updates = []
        if changed and self.use_lik:
            a = self.site_actor[s]
            A2 = A.copy()
            A2[r, :] = row
            A2[:, r] = col
            for i in self.lists_at[ti]:
                if a in self.list_members[i]:
                    rat, term = self._term(i, ti, A2)
                    log_alpha += term - self.terms[i]
                    updates.append((i, rat, term))
        if log_alpha < 0.0 and np.log(self.rng.random()) >= log_alpha:
            return False
        self.U[s] = new
        Zt[r] = z
        if changed:
            A[r, :] = row
            A[:, r] = col
        for i, rat, term in updates:
            self.ratios[i] = rat
            self.terms[i] = term
        self.prior_u += d_prior
        self.accepts["u"] += 1
        return True

    def update_tau(self, i: int) -> bool:
        rec = self.data.lists[i]
        if rec.tau_minus == rec.tau_plus:
            return True
        self.tries["tau"] += 1
        t_new = int(self.rng.integers(rec.tau_minus, rec.tau_plus + 1))
        t_old = int(self.tau[i])
        ti_old, ti_new = self.year_index[t_old], self.year_index[t_new]
        rat, term = None, 0.0
        if self.use_lik and t_new != t_old:
            rat, term = self._term(i, ti_new, self.above[ti_new])
            log_alpha = term - self.terms[i]
            if log_alpha < 0.0 and np.log(self.rng.random()) >= log_alpha:
                return False
        self.tau[i] = t_new
        self.lists_at[ti_old].discard(i)
        self.lists_at[ti_new].add(i)
        if rat is not None:
            self.ratios[i] = rat
            self.terms[i] = term
        self.accepts["tau"] += 1
        return True

    def update_beta(self, r: int) -> bool:
        self.tries["beta"] += 1
        step = self.cfg.beta_bandwidth * self.rng.standard_normal()
        cand = self.beta.copy()
        cand[r] += step
        if self.hyper.beta_constrained and np.any(np.diff(cand) >= 0):
            return False
        log_alpha = -0.5 * (cand[r] ** 2 - self.beta[r] ** 2)
        new_years = []
        updates = []
        for ti, rows in self.level_years[r]:
            Zt = self.Z[ti].copy()
            Zt[rows] += step
            A2 = dominance(Zt)
            changed = not np.array_equal(A2, self.above[ti])
            new_years.append((ti, Zt, A2 if changed else None))
            if changed and self.use_lik:
                for i in self.lists_at[ti]:
                    rat, term = self._term(i, ti, A2)
                    log_alpha += term - self.terms[i]
                    updates.append((i, rat, term))
        if log_alpha < 0.0 and np.log(self.rng.random()) >= log_alpha:
            return False
        self.beta = cand
        for ti, Zt, A2 in new_years:
            self.Z[ti] = Zt
            if A2 is not None:
                self.above[ti] = A2
        for i, rat, term in updates:
            self.ratios[i] = rat
            self.terms[i] = term
        self.accepts["beta"] += 1
        return True

    def update_rho(self) -> bool:
        self.tries["rho"] += 1
        cand = min(float(self.rng.beta(1.0, self.hyper.gamma)), 1.0 - 1e-12)
        new = self._prior_u(cand, self.theta)
        if np.log(self.rng.random()) >= new - self.prior_u:
            return False
        self.rho, self.prior_u = cand, new
        self.chol = np.linalg.cholesky(sigma_rho(cand, self.K))
        self.accepts["rho"] += 1
        return True

    def update_theta(self) -> bool:
        if self.cfg.fixed_time:
            return True
        self.tries["theta"] += 1
        cand = float(self.rng.random())
        new = self._prior_u(self.rho, cand)
        if np.log(self.rng.random()) >= new - self.prior_u:
            return False
        self.theta, self.prior_u = cand, new
        self.accepts["theta"] += 1
        return True

    # Interweaving moves: propose rho or theta while holding the whitened
    # innovations fixed, so U is transformed deterministically.  The orders
    # see U only through ranks, which makes these moves cheap to accept and
    # breaks the coupling between the scalars and the latent values.

    def _rescale_rho(self, rho_new: float) -> np.ndarray:
        K = self.K
        mean = self.U.mean(axis=1, keepdims=True)
        orth = self.U - mean
        a = np.sqrt((1.0 - rho_new) / (1.0 - self.rho))
        b = np.sqrt((1.0 + (K - 1) * rho_new) / (1.0 + (K - 1) * self.rho))
        return a * orth + b * mean

    def _rescale_theta(self, theta_new: float) -> np.ndarray:
        th = self.theta
        out = np.empty_like(self.U)
        c_old, c_new = np.sqrt(1.0 - th * th), np.sqrt(1.0 - theta_new * theta_new)
        for s in range(self.n_sites):
            if self.has_prev[s]:
                out[s] = theta_new * out[s - 1] + (self.U[s] - th * self.U[s - 1])
            else:
                out[s] = self.U[s] * c_old / c_new
        return out

    def _try_joint(self, U_new: np.ndarray, log_ratio: float) -> bool:
        """Accept or reject a whole-U proposal given its non-likelihood log ratio."""
        above, terms, ratios = [], self.terms, self.ratios
        if self.use_lik:
            for ti in range(len(self.years)):
                above.append(dominance(U_new[self.year_sites[ti]] + self._lift(ti)))
            terms = np.empty(self.n_lists)
            ratios = [None] * self.n_lists
            for i in range(self.n_lists):
                ti = self.year_index[int(self.tau[i])]
                ratios[i], terms[i] = self._term(i, ti, above[ti])
            log_ratio += float(terms.sum() - self.terms.sum())
        if log_ratio < 0.0 and np.log(self.rng.random()) >= log_ratio:
            return False
        self.U = U_new
        self.Z = [U_new[self.year_sites[ti]] + self._lift(ti) for ti in range(len(self.years))]
        self.above = above if self.use_lik else [dominance(Zt) for Zt in self.Z]
        self.terms, self.ratios = terms, ratios
        return True

    def update_rho_joint(self, step: float = 0.5) -> bool:
        if self.K < 2:
            return True
        self.tries["rho_w"] += 1
        x = log(self.rho / (1.0 - self.rho))
        x_new = x + step * self.rng.standard_normal()
        cand = 1.0 / (1.0 + np.exp(-x_new))
        if not (0.0 < cand < 1.0 - 1e-12):
            return False
        log_ratio = (beta1_logpdf(cand, self.hyper.gamma) - beta1_logpdf(self.rho, self.hyper.gamma)
                     + log(cand * (1.0 - cand)) - log(self.rho * (1.0 - self.rho)))
        if not self._try_joint(self._rescale_rho(cand), log_ratio):
            return False
        self.rho = cand
        self.chol = np.linalg.cholesky(sigma_rho(cand, self.K))
        self.prior_u = self._prior_u(self.rho, self.theta)
        self.accepts["rho_w"] += 1
        return True

    def update_theta_joint(self, step: float = 0.5) -> bool:
        if self.cfg.fixed_time:
            return True
        self.tries["theta_w"] += 1
        th = min(max(self.theta, 1e-12), 1.0 - 1e-12)
        x_new = log(th / (1.0 - th)) + step * self.rng.standard_normal()
        cand = 1.0 / (1.0 + np.exp(-x_new))
        if not (0.0 < cand < 1.0):
            return False
        log_ratio = log(cand * (1.0 - cand)) - log(th * (1.0 - th))
        if not self._try_joint(self._rescale_theta(cand), log_ratio):
            return False
        self.theta = cand
        self.prior_u = self._prior_u(self.rho, self.theta)
        self.accepts["theta_w"] += 1
        return True

    def update_beta_shift(self, r: int) -> bool:
        """Exact draw along the direction beta_r + c, U - c on level-r sites, which leaves Z fixed."""
        sites = self.level_sites[r]
        if sites.size == 0:
            return True
        self.tries["beta_shift"] += 1

        def logdens(c: float) -> float:
            self.U[sites] -= c
            val = self._prior_u(self.rho, self.theta) - 0.5 * (self.beta[r] + c) ** 2
            self.U[sites] += c
            return val

        f0, fp, fm = logdens(0.0), logdens(1.0), logdens(-1.0)
        prec = f0 * 2.0 - fp - fm
        if not prec > 0:
            return False
        c = (fp - fm) / (2.0 * prec) + self.rng.standard_normal() / np.sqrt(prec)
        beta = self.beta.copy()
        beta[r] += c
        if self.hyper.beta_constrained and np.any(np.diff(beta) >= 0):
            return False
        self.U[sites] -= c
        self.beta = beta
        for ti, _ in self.level_years[r]:
            self.Z[ti] = self.U[self.year_sites[ti]] + self._lift(ti)
        self.prior_u = self._prior_u(self.rho, self.theta)
        self.accepts["beta_shift"] += 1
        return True

    def update_p(self) -> bool:
        self.tries["p"] += 1
        cand = float(self.rng.beta(1.0, self.hyper.delta))
        if self.use_lik:
            new = np.array([loglik_from_ratios(r, cand, self.mode) for r in self.ratios])
            log_alpha = float(new.sum() - self.terms.sum())
            if log_alpha < 0.0 and np.log(self.rng.random()) >= log_alpha:
                return False
            self.terms = new
            self._terms_at_p = {}
        self.p = cand
        self.accepts["p"] += 1
        return True

    def sweep(self):
        sched = self.cfg.schedule
        for _ in range(sched["u"]):
            for s in self.rng.permutation(self.n_sites):
                self.update_u(int(s))
        for _ in range(sched["tau"]):
            for i in self.rng.permutation(self.uncertain) if self.uncertain else ():
                self.update_tau(int(i))
        for _ in range(sched["beta"]):
            for r in range(self.S):
                self.update_beta(r)
        for _ in range(sched["beta_shift"]):
            for r in range(self.S):
                self.update_beta_shift(r)
        for _ in range(sched["rho"]):
            self.update_rho()
        for _ in range(sched["theta"]):
            self.update_theta()
        for _ in range(sched["p"]):
            self.update_p()
        for _ in range(sched["rho_w"]):
            self.update_rho_joint()
        for _ in range(sched["theta_w"]):
            self.update_theta_joint()

    # -- reference recomputation --------------------------------------------

    def params(self) -> LatentParams:
        d = self.data
        U = {}
        for a in d.actor_ids:
            first = self.actor_first_site[a]
            b, e = d.window_of(a)
            U[a] = self.U[first : first + e - b + 1].copy()
        tau = {rec.list_id: int(self.tau[i]) for i, rec in enumerate(d.lists)}
        return LatentParams(self.rho, self.theta, U, self.beta.copy(), tau, self.p)

    def orders(self) -> dict[int, PartialOrder]:
        """Current per-year orders rebuilt from U and beta (not from the caches)."""
        out = {}
        params = self.params()
        for ti, t in enumerate(self.years):
            actors = self.year_actors[ti]
            rows = [params.U[a][t - self.data.window_of(a)[0]] for a in actors]
            Z = np.array(rows).reshape(len(actors), self.K)
            if self.S:
                Z = Z + self.beta[self.year_levels[ti]][:, None]
            A = dominance(Z)
            out[t] = PartialOrder(actors, ((actors[i], actors[j]) for i, j in zip(*np.nonzero(A))), check=False)
        return out

    def check_coherence(self, tol: float = 1e-8) -> float:
        """Compare the cached log posterior with a from-scratch evaluation."""
        params = self.params()
        ref = log_prior(params, self.hyper, _PriorView(self.data))
        if self.use_lik:
            ref += loglik_total(self.data, self.orders(), params.tau, NoiseModel(self.mode, self.p), RatioCache())
        cached = self.log_posterior()
        if not (abs(cached - ref) <= tol * max(1.0, abs(ref))):
            raise CoherenceError(f"cached log posterior {cached!r} differs from recomputation {ref!r}")
        for ti, Zt in enumerate(self.Z):
            if not np.array_equal(dominance(Zt), self.above[ti]):
                raise CoherenceError(f"stale order cache in year {self.years[ti]}")
        self.prior_u = self._prior_u(self.rho, self.theta)
        return ref


class _PriorView:
    """Dataset view with actor series clipped to the study window, as stored by the chain."""

    def __init__(self, dataset: Dataset):
        self.actor_ids = dataset.actor_ids
        self.lists = dataset.lists


# ---------------------------------------------------------------------------
# sample storage


class SampleStore:
    """Thinned draws from one or more chains."""

    def __init__(self, years, actors_by_year, site_actor, site_year, site_level, list_ids, S, K):
        self.years = tuple(int(t) for t in years)
        self.actors_by_year = {int(t): tuple(int(a) for a in v) for t, v in actors_by_year.items()}
        self.site_actor = np.asarray(site_actor, dtype=int)
        self.site_year = np.asarray(site_year, dtype=int)  # calendar years
        self.site_level = np.asarray(site_level, dtype=int)
        self.list_ids = tuple(int(i) for i in list_ids)
        self.S = int(S)
        self.K = int(K)
        self.iteration: list[int] = []
        self.chain: list[int] = []
        self.rho: list[float] = []
        self.theta: list[float] = []
        self.p: list[float] = []
        self.logpost: list[float] = []
        self.loglik: list[float] = []
        self.beta: list[np.ndarray] = []
        self.tau: list[np.ndarray] = []
        self.ubar: list[np.ndarray] = []
        self.edges: dict[int, list[np.ndarray]] = {t: [] for t in self.years}
        self.accept: dict[str, float] = {}
        self.meta: dict = {}

    def __len__(self) -> int:
        return len(self.rho)

    @classmethod
    def for_chain(cls, chain: Chain) -> "SampleStore":
        return cls(
            chain.years,
            {t: chain.year_actors[ti] for ti, t in enumerate(chain.years)},
            chain.site_actor,
            np.asarray(chain.years)[chain.site_year],
            chain.site_level,
            [rec.list_id for rec in chain.data.lists],
            chain.S,
            chain.K,
        )

    def record(self, chain: Chain, iteration: int, chain_id: int = 0):
        self.iteration.append(int(iteration))
        self.chain.append(int(chain_id))
        self.rho.append(chain.rho)
        self.theta.append(chain.theta)
        self.p.append(chain.p)
        self.logpost.append(chain.log_posterior())
        self.loglik.append(chain.loglik())
        self.beta.append(chain.beta.copy())
        self.tau.append(chain.tau.copy())
        self.ubar.append(chain.U.mean(axis=1))
        for ti, t in enumerate(self.years):
            self.edges[t].append(chain.above[ti].copy())

    def arrays(self) -> dict[str, np.ndarray]:
        L = len(self)
        return {
            "rho": np.asarray(self.rho),
            "theta": np.asarray(self.theta),
            "p": np.asarray(self.p),
            "logpost": np.asarray(self.logpost),
            "loglik": np.asarray(self.loglik),
            "beta": np.asarray(self.beta).reshape(L, self.S),
            "tau": np.asarray(self.tau).reshape(L, len(self.list_ids)),
            "ubar": np.asarray(self.ubar).reshape(L, len(self.site_actor)),
        }

    def edge_array(self, t: int) -> np.ndarray:
        m = len(self.actors_by_year[t])
        return np.asarray(self.edges[t], dtype=bool).reshape(len(self), m, m)

    def scalar_traces(self) -> dict[str, np.ndarray]:
        a = self.arrays()
        out = {"rho": a["rho"], "theta": a["theta"], "p": a["p"], "logpost": a["logpost"]}
        for r in range(self.S):
            out[f"beta_{r + 1}"] = a["beta"][:, r]
        return out

    def ess_report(self) -> dict[str, float]:
        return {k: ess(v) if len(v) >= 10 else float("nan") for k, v in self.scalar_traces().items()}

    @staticmethod
    def merge(stores: Sequence["SampleStore"]) -> "SampleStore":
        first = stores[0]
        out = SampleStore(first.years, first.actors_by_year, first.site_actor, first.site_year,
                          first.site_level, first.list_ids, first.S, first.K)
        for st in stores:
            for name in ("iteration", "chain", "rho", "theta", "p", "logpost", "loglik", "beta", "tau", "ubar"):
                getattr(out, name).extend(getattr(st, name))
            for t in out.years:
                out.edges[t].extend(st.edges[t])
        n = sum(len(s) for s in stores)
        keys = first.accept.keys()
        out.accept = {k: sum(s.accept.get(k, 0.0) * len(s) for s in stores) / max(n, 1) for k in keys}
        out.meta = dict(first.meta)
        return out

    # -- serialization -------------------------------------------------------

    def write_trace_csv(self, path: str | Path):
        traces = self.scalar_traces()
        names = ["rho", "theta", "p", "logpost"] + [f"beta_{r + 1}" for r in range(self.S)]
        with open(path, "w") as fh:
            fh.write(",".join(["chain", "iteration"] + names) + "\n")
            for k in range(len(self)):
                vals = [repr(float(traces[n][k])) for n in names]
                fh.write(",".join([str(self.chain[k]), str(self.iteration[k])] + vals) + "\n")

    def write_jsonl(self, path: str | Path):
        header = {
            "type": "header",
            "years": list(self.years),
            "actors_by_year": {str(t): list(v) for t, v in self.actors_by_year.items()},
            "site_actor": self.site_actor.tolist(),
            "site_year": self.site_year.tolist(),
            "site_level": self.site_level.tolist(),
            "list_ids": list(self.list_ids),
            "S": self.S,
            "K": self.K,
            "accept": self.accept,
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for k in range(len(self)):
                rec = {
                    "type": "sample",
                    "chain": self.chain[k],
                    "iteration": self.iteration[k],
                    "rho": float(self.rho[k]),
                    "theta": float(self.theta[k]),
                    "p": float(self.p[k]),
                    "logpost": float(self.logpost[k]),
                    "loglik": float(self.loglik[k]),
                    "beta": [float(x) for x in self.beta[k]],
                    "tau": [int(x) for x in self.tau[k]],
                    "ubar": [float(x) for x in self.ubar[k]],
                    "edges": {str(t): _pack(self.edges[t][k]) for t in self.years},
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "SampleStore":
        with open(path) as fh:
            header = json.loads(fh.readline())
            store = cls(
                header["years"],
                {int(t): v for t, v in header["actors_by_year"].items()},
                header["site_actor"],
                header["site_year"],
                header["site_level"],
                header["list_ids"],
                header["S"],
                header["K"],
            )
            store.accept = header.get("accept", {})
            store.meta = header.get("meta", {})
            for line in fh:
                rec = json.loads(line)
                store.iteration.append(rec["iteration"])
                store.chain.append(rec["chain"])
                for name in ("rho", "theta", "p", "logpost", "loglik"):
                    getattr(store, name).append(rec[name])
                store.beta.append(np.asarray(rec["beta"], dtype=float))
                store.tau.append(np.asarray(rec["tau"], dtype=int))
                store.ubar.append(np.asarray(rec["ubar"], dtype=float))
                for t in store.years:
                    m = len(store.actors_by_year[t])
                    store.edges[t].append(_unpack(rec["edges"][str(t)], m))
        return store


def _pack(A: np.ndarray) -> str:
    return np.packbits(A.ravel()).tobytes().hex()


def _unpack(text: str, m: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
    return bits[: m * m].astype(bool).reshape(m, m)


# ---------------------------------------------------------------------------
# drivers


def run_chain(dataset: Dataset, hyper: HyperParams, cfg: MCMCConfig,
              rng: np.random.Generator | None = None, chain_id: int = 0) -> SampleStore:
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    chain = Chain(dataset, hyper, cfg, rng)
    chain.initialise()
    store = SampleStore.for_chain(chain)
    for it in range(1, cfg.iterations + 1):
        chain.sweep()
        if cfg.debug_every and it % cfg.debug_every == 0:
            chain.check_coherence()
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            store.record(chain, it, chain_id)
    store.accept = {k: chain.accepts[k] / chain.tries[k] if chain.tries[k] else float("nan") for k in UPDATE_KINDS}
    store.meta = {"hyper": asdict(chain.hyper), "config": asdict(cfg), "ratio_cache_entries": len(chain.cache)}
    return store


def _chain_job(args):
    dataset, hyper, cfg, seq, chain_id = args
    return run_chain(dataset, hyper, cfg, np.random.default_rng(seq), chain_id)


def run_chains(dataset: Dataset, hyper: HyperParams, cfg: MCMCConfig, n_chains: int = 1,
               workers: int = 1) -> SampleStore:
    """Independent chains with spawned seed streams, merged in chain order."""
    if n_chains == 1:
        return run_chain(dataset, hyper, cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(n_chains)
    jobs = [(dataset, hyper, cfg, seqs[c], c) for c in range(n_chains)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            stores = list(pool.map(_chain_job, jobs))
    else:
        stores = [_chain_job(j) for j in jobs]
    return SampleStore.merge(stores)


def ess(trace: Sequence[float]) -> float:
    """Effective sample size with Geyer's initial positive sequence truncation."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 draws")
    x = x - x.mean()
    if not np.any(x):
        return 0.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / tau)
