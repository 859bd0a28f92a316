"""Belief-weighted Monte Carlo acquisition functions and their optimizer.

All acquisition objects map an (k, d) array of unit-cube points to k values
and are deterministic in ``x``: sample paths are whole functions, so no
base samples need fixing across the search space.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import erfcx, logsumexp
from scipy.stats import norm

from . import _backend
from .beliefs import ArgmaxConfig, WeightedEnsemble, argmax_batch, sobol_points
from .gp import Dataset, as_seed_sequence
from .pathwise import fantasize

LOG_FLOOR = -1e30
DEFAULT_TAU = 1e-3


@dataclass(frozen=True)
class Incumbent:
    value: float  # standardized
    location: np.ndarray  # unit cube


def incumbent(ensemble: WeightedEnsemble, data: Dataset, pending=None) -> Incumbent:
    """Best weighted posterior mean over observed (and pending) inputs."""
    X = data.X
    if pending is not None and len(pending):
        X = np.vstack([X, np.atleast_2d(pending)])
    if X.shape[0] == 0:
        raise ValueError("incumbent needs at least one observation")
    means = ensemble.draws.evaluate(X) @ ensemble.normalized_weights
    i = int(np.argmax(means))
    return Incumbent(float(means[i]), X[i].copy())


# --------------------------------------------------------------------------- LogEI


def log_softplus(z):
    """``log(log1p(exp(z)))`` without overflow or underflow."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    lo, hi = z < -30.0, z > 30.0
    mid = ~(lo | hi)
    out[lo] = z[lo]
    out[hi] = np.log(z[hi] + np.log1p(np.exp(-z[hi])))
    out[mid] = np.log(np.log1p(np.exp(z[mid])))
    return out


def _dlog_softplus(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    lo, hi = z < -30.0, z > 30.0
    mid = ~(lo | hi)
    out[lo] = 1.0
    out[hi] = 1.0 / (z[hi] + np.log1p(np.exp(-z[hi])))
    zm = z[mid]
    out[mid] = (1.0 / (1.0 + np.exp(-zm))) / np.log1p(np.exp(zm))
    return out


class LogEI:
    """Log of the weighted, softplus-smoothed expected improvement."""

    def __init__(self, ensemble: WeightedEnsemble, inc: Incumbent, tau: float = DEFAULT_TAU):
        self.ensemble = ensemble
        self.inc = inc
        self.tau = tau
        self._lw = ensemble.log_weights
        self._logZ = np.log(ensemble.normalizer)

    def _terms(self, F):
        z = (F - self.inc.value) / self.tau
        return z, self._lw + np.log(self.tau) + log_softplus(z)

    def from_values(self, F) -> np.ndarray:
        """Acquisition from path values ``F`` of shape (k, L)."""
        _, t = self._terms(np.atleast_2d(F))
        return np.maximum(logsumexp(t, axis=1) - self._logZ, LOG_FLOOR)

    def __call__(self, X) -> np.ndarray:
        return self.from_values(self.ensemble.draws.evaluate(X))

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float).reshape(1, -1)
        F = self.ensemble.draws.evaluate(x)[0]
        z, t = self._terms(F)
        lse = logsumexp(t)
        s = np.exp(t - lse)
        G = self.ensemble.draws.gradient(x)
        grad = (s * _dlog_softplus(z) / self.tau) @ G
        return max(float(lse - self._logZ), LOG_FLOOR), grad


def acq_logei(x, ensemble: WeightedEnsemble, inc: Incumbent, tau: float = DEFAULT_TAU) -> float:
    return float(LogEI(ensemble, inc, tau)(np.atleast_2d(x))[0])


def log_h(z):
    """``log(z Phi(z) + phi(z))``, stable for very negative ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z > -1.0
    zp = z[pos]
    out[pos] = np.log(zp * norm.cdf(zp) + norm.pdf(zp))
    zn = z[~pos]
    ratio = zn * np.sqrt(np.pi / 2.0) * erfcx(-zn / np.sqrt(2.0))
    out[~pos] = norm.logpdf(zn) + np.log1p(ratio)
    return out


def analytic_logei(mean, var, best: float) -> np.ndarray:
    """Closed-form log expected improvement for a Gaussian posterior."""
    sd = np.sqrt(np.maximum(var, 1e-300))
    return np.log(sd) + log_h((np.asarray(mean) - best) / sd)


# --------------------------------------------------------------------------- MES


class MES:
    """Weighted max-value entropy search.

    Estimates ``H[y_x] - E_{f*}[H[y_x | f*]]`` where both predictive densities
    are weighted Gaussian mixtures over the ensemble's paths; conditioning on
    ``f*`` clamps each path value to ``min(f_x, f*)`` before the noise.
    Optimal values come from the cached maxima of ``J`` distinct ensemble
    members, weighted by their belief weights.
    """

    def __init__(self, ensemble: WeightedEnsemble, J: int = 32, K: int = 4, noise_var: float | None = None,
                 seed=None, argmax: ArgmaxConfig | None = None, max_block: int = 2_000_000):
        L = len(ensemble)
        if J > L:
            raise ValueError(f"J={J} optimal values requested from {L} draws")
        if K < 1 or J < 1:
            raise ValueError("J and K must be positive")
        upd = ensemble.draws.update
        if noise_var is None:
            if upd is None:
                raise ValueError("noise_var required for unconditioned ensembles")
            noise_var = upd.hp.noise
        self.ensemble = ensemble
        self.sigma = float(np.sqrt(noise_var))
        ss_sel, ss_opt = as_seed_sequence(seed).spawn(2)
        _, fmax = ensemble.optima(seed=ss_opt, config=argmax)
        sel = np.random.default_rng(ss_sel).choice(L, size=J, replace=False)
        self.fstar = fmax[sel]
        self.jw = ensemble.weights[sel]
        self.ZJ = float(self.jw.sum())
        # deterministic noise quantiles
        self.eps = self.sigma * norm.ppf((np.arange(K) + 0.5) / K)
        self._lw = np.log(ensemble.normalized_weights)
        self._w = ensemble.normalized_weights
        self.max_block = max_block

    def _expected_logpdf(self, C):
        """E_{l ~ w, k}[log q(C_l + eps_k)] with q the mixture centred at C (rows)."""
        B, L = C.shape
        K = self.eps.size
        Y = (C[:, :, None] + self.eps).reshape(B, L * K)
        lw = np.broadcast_to(self._lw, (B, L))
        lq = _backend.mixture_logpdf(Y, C, lw, self.sigma).reshape(B, L, K)
        return lq.mean(axis=2) @ self._w

    def from_values(self, F) -> np.ndarray:
        F = np.atleast_2d(F)
        k, L = F.shape
        J = self.fstar.size
        rows = max(1, self.max_block // max(1, (J + 1) * L * L * self.eps.size))
        out = np.empty(k)
        for s in range(0, k, rows):
            Fc = F[s : s + rows]
            marg = self._expected_logpdf(Fc)
            C = np.minimum(Fc[:, None, :], self.fstar[None, :, None]).reshape(-1, L)
            cond = self._expected_logpdf(C).reshape(Fc.shape[0], J)
            out[s : s + rows] = cond @ self.jw / self.ZJ - marg
        return out

    def __call__(self, X) -> np.ndarray:
        return self.from_values(self.ensemble.draws.evaluate(X))


def acq_mes(x, ensemble: WeightedEnsemble, J: int, K: int, noise_var: float | None = None, seed=None) -> float:
    return float(MES(ensemble, J, K, noise_var, seed)(np.atleast_2d(x))[0])


# --------------------------------------------------------------------------- Thompson sampling


def thompson_next(ensemble: WeightedEnsemble, dim: int, budget: int | None = None, seed=None,
                  argmax: ArgmaxConfig | None = None) -> np.ndarray:
    """Argmax (unit cube) of one draw picked with probability proportional to its weight."""
    cfg = argmax or ArgmaxConfig()
    budget = budget or cfg.candidates_per_dim * dim
    pick_ss, arg_ss = as_seed_sequence(seed).spawn(2)
    ell = int(np.random.default_rng(pick_ss).choice(len(ensemble), p=ensemble.normalized_weights))
    X, _ = argmax_batch(ensemble.draws.take([ell]), budget, arg_ss, cfg.n_starts, cfg.steps, cfg.initial_step)
    return X[0]


# --------------------------------------------------------------------------- optimizer


def _evaluate_chunked(acq, X, chunk=1024):
    return np.concatenate([np.asarray(acq(X[s : s + chunk]), dtype=float) for s in range(0, X.shape[0], chunk)])


def optimize_acq(acq: Callable, dim: int, restarts: int = 8, seed=None, n_candidates: int | None = None,
                 maxiter: int = 200) -> np.ndarray:
    """Maximize ``acq`` over the unit cube.

    Screens ``1024 * dim`` Sobol points, then refines the best ``restarts`` of
    them with L-BFGS-B (analytic gradients when ``acq.value_and_grad`` exists).
    Starts are nested in ``restarts``, so more restarts never do worse.
    """
    n_candidates = n_candidates or 1024 * dim
    cands = sobol_points(n_candidates, dim, seed)
    vals = _evaluate_chunked(acq, cands)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    order = np.argsort(-vals, kind="stable")[: max(1, restarts)]
    best_x, best_v = cands[order[0]].copy(), vals[order[0]]
    bounds = [(0.0, 1.0)] * dim
    has_grad = hasattr(acq, "value_and_grad")

    if has_grad:
        def fun(x):
            v, g = acq.value_and_grad(x)
            return -v, -g
    else:
        def fun(x):
            return -float(acq(x[None])[0])

    for i in order:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(fun, cands[i], jac=has_grad, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": maxiter})
        x = np.clip(res.x, 0.0, 1.0)
        v = float(acq(x[None])[0])
        if np.isfinite(v) and v > best_v:
            best_x, best_v = x, v
    return best_x


def greedy_batch(make_acq: Callable, ensemble: WeightedEnsemble, q: int, dim: int, seed=None,
                 restarts: int = 8, n_candidates: int | None = None) -> np.ndarray:
    """Sequential greedy batch: optimize, fantasize every draw at the pick, repeat.

    ``make_acq(ensemble, pending)`` builds the acquisition for the current
    fantasy ensemble given the already selected points.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    seeds = as_seed_sequence(seed).spawn(2 * q)
    picks = []
    ens = ensemble
    for i in range(q):
        pending = np.array(picks).reshape(-1, dim)
        x = optimize_acq(make_acq(ens, pending), dim, restarts, seeds[2 * i], n_candidates)
        picks.append(x)
        if i + 1 < q:
            new = ens.replace_draws(fantasize(ens.draws, x, seeds[2 * i + 1]))
            new._optima = ens._optima
            ens = new
    return np.array(picks)
