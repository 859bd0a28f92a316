"""The outer Bayesian optimization loop.

Each iteration refits the GP hyperparameters, draws a fresh basis and
ensemble, and maximizes the chosen acquisition. Everything random in an
iteration derives from ``(config.seed, iteration)``, so a run resumed from a
persisted record replays exactly.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .acquisition import DEFAULT_TAU, MES, LogEI, greedy_batch, incumbent, thompson_next
from .beliefs import (ArgmaxConfig, McBudget, OptimumLocation, Uniform, UserBelief, WeightedEnsemble,
                      build_ensemble, sobol_points)
from .gp import Dataset, SearchSpace, as_seed_sequence, fit_map_result
from .pathwise import sample_basis

logger = logging.getLogger(__name__)

ACQUISITIONS = ("logei", "mes", "ts")
WEIGHTINGS = ("rejection", "importance", "none")


@dataclass(frozen=True)
class BoConfig:
    """Everything that determines a run, apart from the objective.

    ``weighting="none"`` ignores the belief when weighting draws (the plain
    MC baseline) but still uses its mode for the initial design.
    """

    space: SearchSpace
    belief: UserBelief = field(default_factory=Uniform)
    acquisition: str = "logei"
    weighting: str = "rejection"
    iterations: int = 20
    q: int = 1
    budget: McBudget = field(default_factory=McBudget)
    kernel: str = "se"
    seed: int = 0
    n_init: int = 3
    restarts: int = 8
    fit_restarts: int = 8
    n_candidates: int | None = None
    argmax: ArgmaxConfig = field(default_factory=ArgmaxConfig)
    tau: float = DEFAULT_TAU
    mes_samples: int = 4

    def __post_init__(self):
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")

    @property
    def total_evaluations(self) -> int:
        return self.n_init + self.iterations * self.q


@dataclass
class RunRecord:
    """One row per evaluation; ``iteration`` is 0 for the initial design."""

    dim: int
    iteration: list = field(default_factory=list)
    X: list = field(default_factory=list)  # original units
    y: list = field(default_factory=list)
    incumbent: list = field(default_factory=list)  # best observed y so far
    regret: list = field(default_factory=list)  # nan when the optimum is unknown
    seconds: list = field(default_factory=list)
    flags: list = field(default_factory=list)  # ";"-joined strings
    status: str = "ok"

    def __len__(self) -> int:
        return len(self.y)

    def append(self, it: int, x, y: float, seconds: float, flags=(), noiseless: float | None = None,
               f_opt: float | None = None):
        self.iteration.append(int(it))
        self.X.append(np.asarray(x, dtype=float).copy())
        self.y.append(float(y))
        self.incumbent.append(max(self.incumbent[-1], float(y)) if self.incumbent else float(y))
        if f_opt is not None and noiseless is not None:
            prev = self.regret[-1] if self.regret and np.isfinite(self.regret[-1]) else np.inf
            self.regret.append(float(min(prev, max(f_opt - noiseless, 0.0))))
        else:
            self.regret.append(float("nan"))
        self.seconds.append(float(seconds))
        self.flags.append(";".join(flags))

    @property
    def X_array(self) -> np.ndarray:
        return np.array(self.X).reshape(-1, self.dim)

    @property
    def y_array(self) -> np.ndarray:
        return np.array(self.y, dtype=float)

    @property
    def last_iteration(self) -> int:
        return self.iteration[-1] if self.iteration else -1

    def columns(self) -> list:
        return ["iteration", *[f"x{i}" for i in range(self.dim)], "y", "incumbent", "regret", "seconds", "flags"]

    def rows(self):
        for i in range(len(self)):
            yield [self.iteration[i], *self.X[i].tolist(), self.y[i], self.incumbent[i], self.regret[i],
                   self.seconds[i], self.flags[i]]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        dim = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
        rec = cls(dim)
        for r in rows:
            rec.iteration.append(int(r["iteration"]))
            rec.X.append(np.array([float(r[f"x{i}"]) for i in range(dim)]))
            rec.y.append(float(r["y"]))
            rec.incumbent.append(float(r["incumbent"]))
            rec.regret.append(float(r["regret"]))
            rec.seconds.append(float(r["seconds"]))
            rec.flags.append(r.get("flags", "") or "")
        return rec


# --------------------------------------------------------------------------- design


def initial_design(config: BoConfig) -> np.ndarray:
    """Belief mode (clipped into the box) followed by scrambled Sobol points, original units."""
    space = config.space
    pts = []
    mode = config.belief.mode() if isinstance(config.belief, OptimumLocation) else None
    if mode is not None:
        pts.append(np.clip(mode, space.lower, space.upper))
    n_sobol = config.n_init - len(pts)
    if n_sobol > 0:
        U = sobol_points(n_sobol, space.dim, np.random.SeedSequence([config.seed, 2**31 - 1]))
        pts.extend(space.denormalize(U))
    return np.array(pts).reshape(-1, space.dim)


# --------------------------------------------------------------------------- one iteration


@dataclass
class StepResult:
    X: np.ndarray  # (q, d) original units
    flags: tuple
    ensemble: WeightedEnsemble | None = None


def _iteration_seeds(seed: int, iteration: int):
    return np.random.SeedSequence([seed, iteration]).spawn(5)


def step(config: BoConfig, X, y, iteration: int) -> StepResult:
    """Next ``q`` queries (original units) given all observations so far."""
    space = config.space
    d = space.dim
    s_fit, s_basis, s_ens, s_acq, s_fallback = _iteration_seeds(config.seed, iteration)
    data = Dataset(np.clip(space.normalize(np.asarray(X, dtype=float).reshape(-1, d)), 0.0, 1.0), y)
    flags = []
    fit = fit_map_result(data, restarts=config.fit_restarts, seed=s_fit, kernel=config.kernel)
    if fit.failed:
        flags.append("fit_failed")
    hp = fit.hp
    basis = sample_basis(hp, config.budget.n_features, s_basis)
    belief = Uniform() if config.weighting == "none" else config.belief
    strategy = "rejection" if config.weighting == "none" else config.weighting
    ens = build_ensemble(basis, belief, data, hp, config.budget, space, strategy, seed=s_ens, argmax=config.argmax)
    if ens.degenerate:
        flags.append("degenerate_weights")
    try:
        U = _propose(config, ens, data, s_acq)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
        logger.warning("acquisition optimization failed (%s); using a Sobol point", err)
        flags.append("sobol_fallback")
        U = sobol_points(config.q, d, s_fallback)
    return StepResult(space.denormalize(np.clip(U, 0.0, 1.0)), tuple(flags), ens)


def _propose(config: BoConfig, ens: WeightedEnsemble, data: Dataset, seed) -> np.ndarray:
    d = config.space.dim
    if config.acquisition == "ts":
        seeds = as_seed_sequence(seed).spawn(config.q)
        return np.array([thompson_next(ens, d, seed=s, argmax=config.argmax) for s in seeds])
    opt_seed, mes_seed = as_seed_sequence(seed).spawn(2)
    if config.acquisition == "logei":
        def make_acq(e, pending):
            return LogEI(e, incumbent(e, data, pending), config.tau)
    else:
        J = min(config.budget.n_optimal, len(ens))

        def make_acq(e, pending):
            return MES(e, J, config.mes_samples, seed=mes_seed, argmax=config.argmax)
    U = greedy_batch(make_acq, ens, config.q, d, opt_seed, config.restarts, config.n_candidates)
    if not np.all(np.isfinite(U)):
        raise ValueError("non-finite proposal")
    return U


# --------------------------------------------------------------------------- loop


def run(config: BoConfig, objective: Callable, record: RunRecord | None = None,
        noiseless: Callable | None = None, f_opt: float | None = None,
        callback: Callable | None = None) -> RunRecord:
    """Run (or resume) the loop until ``config.total_evaluations`` are consumed.

    ``objective`` maps an original-units point to a float. ``noiseless`` and
    ``f_opt`` (both optional) enable simple-regret bookkeeping. A failing
    objective stops the run with ``record.status = "objective_failed"``.
    """
    rec = record if record is not None else RunRecord(config.space.dim)
    total = config.total_evaluations

    def observe(it, x, secs, flags):
        try:
            yv = float(objective(x))
            if not np.isfinite(yv):
                raise ValueError("objective returned a non-finite value")
        except Exception as err:  # noqa: BLE001 - any objective failure halts the run
            logger.error("objective failed at iteration %d: %s", it, err)
            rec.status = "objective_failed"
            return False
        nl = float(noiseless(x)) if noiseless is not None else None
        rec.append(it, x, yv, secs, flags, nl, f_opt)
        if callback is not None:
            callback(rec)
        return True

    init = initial_design(config)
    while len(rec) < min(config.n_init, total):
        t0 = time.perf_counter()
        x = init[len(rec)]
        if not observe(0, x, time.perf_counter() - t0, ()):
            return rec
    while len(rec) < total:
        it = (len(rec) - config.n_init) // config.q + 1
        start = config.n_init + (it - 1) * config.q
        t0 = time.perf_counter()
        # a batch interrupted mid-way is recomputed from the data at its start
        res = step(config, rec.X_array[:start], rec.y_array[:start], it)
        secs = (time.perf_counter() - t0) / config.q
        done = len(rec) - start
        for x in res.X[done:]:
            t1 = time.perf_counter()
            if not observe(it, x, secs + time.perf_counter() - t1, res.flags):
                return rec
    return rec
