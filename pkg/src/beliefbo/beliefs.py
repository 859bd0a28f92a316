"""User beliefs over function properties and belief-weighted ensembles.

A belief scores a sample path through one of its properties (the location
of its maximum, or the maximal value). Prior paths are filtered or weighted
by that score before the data update, which leaves the update untouched.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .gp import Dataset, GpHyperparams, SearchSpace, as_seed_sequence
from .pathwise import DrawSet, FunctionDraw, RffBasis, draw_prior, matheron_condition

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- beliefs


class UserBelief:
    """Base class. Subclasses return unnormalized log-weights for draws."""

    kind = "base"

    def log_weight(self, x_opt, f_opt_raw, space: SearchSpace) -> np.ndarray:
        raise NotImplementedError

    def mode(self):
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(UserBelief):
    kind = "uniform"

    def log_weight(self, x_opt, f_opt_raw, space):
        return np.zeros(np.atleast_2d(x_opt).shape[0])

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class OptimumLocation(UserBelief):
    """Gaussian belief over the maximizer, truncated to the search space.

    ``mean`` and ``std`` are in original units; the truncation constant is
    never computed because it cancels in every weight ratio.
    """

    mean: np.ndarray
    std: np.ndarray
    kind = "optimum_location"

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ValueError("belief std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def log_weight(self, x_opt, f_opt_raw, space):
        x = np.atleast_2d(x_opt)
        mu = space.normalize(self.mean)
        sd = self.std / space.width
        return -0.5 * np.sum(((x - mu) / sd) ** 2, axis=1)

    def mode(self):
        return self.mean

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass(frozen=True)
class OptimalValue(UserBelief):
    """Gaussian belief over the noiseless maximum, in raw output units."""

    mean: float
    std: float
    kind = "optimal_value"

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("optimal-value belief std must be positive")

    def log_weight(self, x_opt, f_opt_raw, space):
        f = np.atleast_1d(np.asarray(f_opt_raw, dtype=float))
        return -0.5 * ((f - self.mean) / self.std) ** 2

    def to_dict(self):
        return {"kind": self.kind, "mean": float(self.mean), "std": float(self.std)}


def belief_from_dict(d: dict) -> UserBelief:
    kind = d.get("kind", "uniform")
    if kind == "uniform":
        return Uniform()
    if kind == "optimum_location":
        return OptimumLocation(d["mean"], d["std"])
    if kind == "optimal_value":
        return OptimalValue(float(d["mean"]), float(d["std"]))
    raise ValueError(f"unknown belief kind {kind!r}")


# --------------------------------------------------------------------------- budgets


@dataclass(frozen=True)
class McBudget:
    """Monte Carlo sizes; defaults are the synthetic-task setting."""

    n_functions: int = 768
    n_features: int = 2048
    resample_cap: int = 150_000
    n_optimal: int = 32

    def __post_init__(self):
        for name in ("n_functions", "n_features", "resample_cap", "n_optimal"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ArgmaxConfig:
    """Inner maximization of sample paths: Sobol screening plus ascent."""

    candidates_per_dim: int = 512
    n_starts: int = 4
    steps: int = 50
    initial_step: float = 0.05


# --------------------------------------------------------------------------- argmax


def sobol_points(n: int, d: int, seed) -> np.ndarray:
    """First ``n`` points of a scrambled Sobol sequence (nested in ``n``)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed)).random(n)


def _ascend(draws: DrawSet, P, idx, steps, step0):
    """Projected, normalized-gradient ascent with per-point step adaptation."""
    f, g = draws.value_and_grad_paired(P, idx)
    eta = np.full(P.shape[0], step0)
    for _ in range(steps):
        norm = np.linalg.norm(g, axis=1)
        active = (norm > 1e-12) & (eta > 1e-9)
        if not np.any(active):
            break
        a = np.flatnonzero(active)
        Pn = np.clip(P[a] + eta[a, None] * g[a] / norm[a, None], 0.0, 1.0)
        fn, gn = draws.value_and_grad_paired(Pn, idx[a])
        ok = fn > f[a]
        acc = a[ok]
        P[acc], f[acc], g[acc] = Pn[ok], fn[ok], gn[ok]
        eta[acc] *= 1.5
        eta[a[~ok]] *= 0.5
    return P, f


def argmax_batch(draws: DrawSet, n_candidates: int, seed=None, n_starts: int = 4,
                 steps: int = 50, initial_step: float = 0.05, chunk: int = 2048):
    """Maximizer (unit cube) and maximum of every draw; arrays (L, d) and (L,)."""
    d = draws.dim
    L = len(draws)
    cands = sobol_points(max(1, n_candidates), d, seed)
    n_starts = min(n_starts, cands.shape[0])
    starts = np.empty((L, n_starts), dtype=np.int64)
    for s in range(0, L, chunk):
        F = draws.take(slice(s, s + chunk)).evaluate(cands)  # (c, l)
        top = np.argpartition(-F, n_starts - 1, axis=0)[:n_starts].T if n_starts < F.shape[0] else np.tile(
            np.arange(F.shape[0]), (F.shape[1], 1))
        starts[s : s + chunk] = top
    idx = np.repeat(np.arange(L, dtype=np.int64), n_starts)
    P = cands[starts.reshape(-1)].copy()
    P, f = _ascend(draws, P, idx, steps, initial_step)
    f = f.reshape(L, n_starts)
    best = np.argmax(f, axis=1)
    X = P.reshape(L, n_starts, d)[np.arange(L), best]
    return X, f[np.arange(L), best]


def locate_argmax(draw, space: SearchSpace, budget: int, seed=None, config: ArgmaxConfig | None = None):
    """Maximizer (original units) and maximum (standardized) of one draw."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    cfg = config or ArgmaxConfig()
    ds = draw.as_set() if isinstance(draw, FunctionDraw) else draw
    X, f = argmax_batch(ds, budget, seed, cfg.n_starts, cfg.steps, cfg.initial_step)
    return space.denormalize(X[0]), float(f[0])


# --------------------------------------------------------------------------- weights


def belief_log_weights(belief: UserBelief, x_opt, f_opt, data: Dataset, space: SearchSpace) -> np.ndarray:
    """Log-weights from cached argmax (unit cube) and max (standardized)."""
    lw = np.asarray(belief.log_weight(x_opt, data.destandardize(f_opt), space), dtype=float)
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("belief density is not finite")
    return lw


def belief_weight(belief: UserBelief, draw, space: SearchSpace, data: Dataset | None = None,
                  budget: int | None = None, seed=None) -> float:
    """Unnormalized weight of a single draw under ``belief``."""
    if isinstance(belief, Uniform):
        return 1.0
    data = data if data is not None else Dataset.empty(space.dim)
    budget = budget or 512 * space.dim
    ds = draw.as_set() if isinstance(draw, FunctionDraw) else draw
    X, f = argmax_batch(ds, budget, seed)
    return float(np.exp(belief_log_weights(belief, X, f, data, space)[0]))


# --------------------------------------------------------------------------- ensembles


@dataclass
class WeightedEnsemble:
    """Conditioned draws with belief weights (scaled so the largest is 1)."""

    draws: DrawSet
    log_weights: np.ndarray
    degenerate: bool = False
    n_proposed: int = 0
    _optima: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (len(self.draws),):
            raise ValueError("one weight per draw required")
        if not np.any(np.isfinite(lw)):
            raise ValueError("ensemble needs at least one positive weight")
        self.log_weights = lw - np.max(lw)

    def __len__(self):
        return len(self.draws)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def normalizer(self) -> float:
        return float(np.sum(self.weights))

    @property
    def normalized_weights(self) -> np.ndarray:
        w = self.weights
        return w / w.sum()

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.log_weights == 0.0))

    def optima(self, n_candidates: int | None = None, seed=None, config: ArgmaxConfig | None = None):
        """Cached (argmax in unit cube, max in standardized units) of each draw."""
        if self._optima is None:
            cfg = config or ArgmaxConfig()
            n_candidates = n_candidates or cfg.candidates_per_dim * self.draws.dim
            self._optima = argmax_batch(self.draws, n_candidates, seed, cfg.n_starts, cfg.steps, cfg.initial_step)
        return self._optima

    def replace_draws(self, draws: DrawSet) -> "WeightedEnsemble":
        return WeightedEnsemble(draws, self.log_weights.copy(), self.degenerate, self.n_proposed)


def vanilla_ensemble(basis: RffBasis, data: Dataset, hp: GpHyperparams, L: int, seed=0) -> WeightedEnsemble:
    """Equal-weight conditioned draws: the plain MC posterior."""
    draw_seed, noise_seed = as_seed_sequence(seed).spawn(2)
    prior = draw_prior(basis, hp, L, draw_seed)
    return WeightedEnsemble(matheron_condition(prior, data, hp, noise_seed), np.zeros(L), n_proposed=L)


def build_ensemble(basis: RffBasis, belief: UserBelief, data: Dataset, hp: GpHyperparams,
                   budget: McBudget, space: SearchSpace, strategy: str = "rejection", seed=0,
                   argmax: ArgmaxConfig | None = None, pilot_size: int | None = None,
                   chunk: int = 2048) -> WeightedEnsemble:
    """Belief-weighted ensemble of conditioned draws.

    ``rejection`` streams prior draws (up to ``budget.resample_cap``) and keeps
    each with probability ``rho / max rho``, the maximum taken over a pilot
    batch; ``importance`` keeps ``budget.n_functions`` draws with weights
    ``rho``. A uniform belief reduces to :func:`vanilla_ensemble` exactly.
    """
    L = budget.n_functions
    if isinstance(belief, Uniform) or belief is None:
        return vanilla_ensemble(basis, data, hp, L, seed)
    if strategy not in ("rejection", "importance"):
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = argmax or ArgmaxConfig()
    n_cand = cfg.candidates_per_dim * space.dim
    draw_seed, noise_seed, accept_seed, argmax_seed = as_seed_sequence(seed).spawn(4)
    draw_rng = np.random.default_rng(draw_seed)

    def weigh(ds: DrawSet, k: int):
        child = np.random.SeedSequence(argmax_seed.entropy, spawn_key=argmax_seed.spawn_key + (k,))
        X, f = argmax_batch(ds, n_cand, child, cfg.n_starts, cfg.steps, cfg.initial_step)
        return belief_log_weights(belief, X, f, data, space)

    if strategy == "importance":
        prior = DrawSet(basis, draw_rng.standard_normal((L, basis.m)), hp.mean)
        lw = weigh(prior, 0)
        degenerate = not np.any(np.isfinite(lw))
        if degenerate:
            logger.warning("all importance weights vanished; using uniform weights")
            lw = np.zeros(L)
        return WeightedEnsemble(matheron_condition(prior, data, hp, noise_seed), lw, degenerate, n_proposed=L)

    cap = max(budget.resample_cap, L)
    pilot = min(pilot_size or max(4 * L, 1024), cap)
    accept_rng = np.random.default_rng(accept_seed)
    kept_w, proposed = [], 0
    first_chunk = None
    max_lw = None
    n_kept = 0
    k = 0
    while proposed < cap and n_kept < L:
        size = pilot if proposed == 0 else min(max(chunk, L), cap - proposed)
        W = draw_rng.standard_normal((size, basis.m))
        ds = DrawSet(basis, W, hp.mean)
        lw = weigh(ds, k)
        k += 1
        if first_chunk is None:
            first_chunk = W[:L]
            max_lw = np.max(lw)
            if not np.isfinite(max_lw):
                break
        u = accept_rng.random(size)
        keep = np.log(np.maximum(u, 1e-300)) < lw - max_lw
        kept_w.append(W[keep])
        n_kept += int(keep.sum())
        proposed += size
    if n_kept == 0:
        logger.warning("rejection sampling retained no draws; using uniform weights")
        prior = DrawSet(basis, first_chunk, hp.mean)
        return WeightedEnsemble(matheron_condition(prior, data, hp, noise_seed), np.zeros(len(prior)),
                                degenerate=True, n_proposed=proposed)
    W = np.vstack(kept_w)[:L]
    prior = DrawSet(basis, W, hp.mean)
    return WeightedEnsemble(matheron_condition(prior, data, hp, noise_seed), np.zeros(W.shape[0]),
                            n_proposed=proposed)
