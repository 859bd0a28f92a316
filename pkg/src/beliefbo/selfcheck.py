"""Fast statistical self-test of the core machinery.

Each check returns a measured statistic, the threshold it is compared with
and whether it passed. The whole suite runs in well under a minute.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .acquisition import MES, LogEI, incumbent, optimize_acq
from .beliefs import McBudget, OptimalValue, Uniform, WeightedEnsemble, build_ensemble, vanilla_ensemble
from .engine import BoConfig, run
from .gp import (Dataset, GpHyperparams, SearchSpace, _evidence_and_grad, analytic_posterior, kernel_matrix)
from .pathwise import draw_prior, matheron_condition, sample_basis


@dataclass(frozen=True)
class CheckResult:
    name: str
    statistic: float
    threshold: float
    relation: str  # "<", "<=", ">="
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        s, t = self.statistic, self.threshold
        if not np.isfinite(s):
            return False
        return {"<": s < t, "<=": s <= t, ">=": s >= t}[self.relation]

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.statistic:.4g} {self.relation} {self.threshold:g} ({self.seconds:.1f}s)"


def rff_covariance_error(kernel="se", m=2048, L=4096, basis_seed=0, draw_seed=1) -> float:
    """Max |empirical draw covariance - k| on a 10-point diagonal grid in 3D."""
    hp = GpHyperparams(np.ones(3), 1.0, 1e-4, 0.0, kernel)
    G = np.linspace(0.0, 1.0, 10)[:, None] * np.ones(3)
    F = draw_prior(sample_basis(hp, m, basis_seed), hp, L, draw_seed).evaluate(G)
    return float(np.max(np.abs(np.cov(F) - kernel_matrix(G, G, hp))))


def _toy_data(n=5, d=1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    return Dataset(X, np.sin(6 * X).sum(1) + 0.1 * rng.standard_normal(n))


def matheron_error(L=4096, m=2048, seed=0) -> float:
    """Max abs error of the conditioned-draw mean and std against the exact posterior (1D)."""
    hp = GpHyperparams(np.array([0.2]), 1.0, 0.01, 0.0)
    data = _toy_data(5, 1, seed)
    Q = np.linspace(0.0, 1.0, 50)[:, None]
    post = analytic_posterior(data, hp, Q)
    F = matheron_condition(draw_prior(sample_basis(hp, m, seed), hp, L, seed + 1), data, hp, seed + 2).evaluate(Q)
    return float(max(np.max(np.abs(F.mean(1) - post.mean)), np.max(np.abs(F.std(1) - np.sqrt(post.var)))))


def uniform_equivalence(seed=0) -> float:
    """Largest difference between the Uniform-belief and vanilla paths (weights and LogEI argmax)."""
    data = _toy_data(6, 2, seed)
    hp = GpHyperparams(np.full(2, 0.3), 1.0, 0.01, 0.0)
    basis = sample_basis(hp, 256, seed)
    space = SearchSpace.unit(2)
    a = build_ensemble(basis, Uniform(), data, hp, McBudget(64, 256, 1000, 8), space, seed=seed)
    b = vanilla_ensemble(basis, data, hp, 64, seed)
    xa = optimize_acq(LogEI(a, incumbent(a, data)), 2, 2, seed, n_candidates=256)
    xb = optimize_acq(LogEI(b, incumbent(b, data)), 2, 2, seed, n_candidates=256)
    return float(max(np.max(np.abs(a.draws.weights - b.draws.weights)), np.max(np.abs(xa - xb)),
                     np.max(np.abs(a.log_weights - b.log_weights))))


def kernel_symmetry(seed=0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for kernel in ("se", "matern52"):
        hp = GpHyperparams(rng.uniform(0.1, 2.0, 3), 1.3, 1e-3, 0.0, kernel)
        X = rng.random((40, 3))
        K = kernel_matrix(X, X, hp)
        worst = max(worst, np.max(np.abs(K - K.T)), -min(0.0, np.linalg.eigvalsh(K).min() + 1e-8))
    return float(worst)


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(b))))


def gradient_error(seed=0, h=1e-6) -> float:
    """Worst relative error of analytic gradients (evidence, sample path, LogEI) vs central differences."""
    rng = np.random.default_rng(seed)
    data = _toy_data(8, 2, seed)
    errs = []
    for kernel in ("se", "matern52"):
        v = np.concatenate([np.log([0.3, 0.5, 1.2, 0.05]), [0.1]])
        _, g = _evidence_and_grad(v, data.X, data.y_std, kernel)
        fd = np.array([(_evidence_and_grad(v + h * e, data.X, data.y_std, kernel, False)[0]
                        - _evidence_and_grad(v - h * e, data.X, data.y_std, kernel, False)[0]) / (2 * h)
                       for e in np.eye(v.size)])
        errs.append(_rel(g, fd))
        hp = GpHyperparams(np.array([0.3, 0.5]), 1.2, 0.05, 0.1, kernel)
        draws = matheron_condition(draw_prior(sample_basis(hp, 256, seed), hp, 16, seed), data, hp, seed)
        x = rng.random(2) * 0.8 + 0.1
        G = draws.gradient(x)
        fd = np.stack([(draws.evaluate(x + h * e)[0] - draws.evaluate(x - h * e)[0]) / (2 * h) for e in np.eye(2)], 1)
        errs.append(_rel(G, fd))
        ens = WeightedEnsemble(draws, rng.standard_normal(16))
        acq = LogEI(ens, incumbent(ens, data), tau=0.05)
        _, ga = acq.value_and_grad(x)
        fd = np.array([(acq(x[None] + h * e)[0] - acq(x[None] - h * e)[0]) / (2 * h) for e in np.eye(2)])
        errs.append(_rel(ga, fd))
    return float(max(errs))


def logei_monotonicity(seed=0) -> float:
    """Smallest change of LogEI when one path value is raised (must be >= 0)."""
    rng = np.random.default_rng(seed)
    data = _toy_data(5, 1, seed)
    hp = GpHyperparams(np.array([0.2]), 1.0, 0.01, 0.0)
    draws = matheron_condition(draw_prior(sample_basis(hp, 128, seed), hp, 32, seed), data, hp, seed)
    ens = WeightedEnsemble(draws, rng.standard_normal(32))
    acq = LogEI(ens, incumbent(ens, data))
    F = rng.standard_normal((200, 32))
    base = acq.from_values(F)
    worst = np.inf
    for _ in range(20):
        G = F.copy()
        G[:, rng.integers(32)] += rng.exponential(0.5)
        worst = min(worst, float(np.min(acq.from_values(G) - base)))
    return worst


def mes_average(seed=0) -> float:
    """Mean MES value over random points of a small 2D problem."""
    data = _toy_data(6, 2, seed)
    hp = GpHyperparams(np.full(2, 0.3), 1.0, 0.01, 0.0)
    ens = vanilla_ensemble(sample_basis(hp, 256, seed), data, hp, 64, seed)
    mes = MES(ens, J=16, K=4, seed=seed)
    return float(np.mean(mes(np.random.default_rng(seed).random((64, 2)))))


def belief_scale_invariance(seed=0) -> float:
    """Normalized weights are unchanged by an affine change of output units (belief moved along)."""
    rng = np.random.default_rng(seed)
    space = SearchSpace.unit(2)
    X = rng.random((6, 2))
    y = rng.standard_normal(6)
    f_std = rng.standard_normal(50)
    x_opt = rng.random((50, 2))
    from .beliefs import belief_log_weights

    def w(data, belief):
        lw = belief_log_weights(belief, x_opt, f_std, data, space)
        e = np.exp(lw - lw.max())
        return e / e.sum()

    a, b = 37.0, -5.0
    w1 = w(Dataset(X, y), OptimalValue(1.5, 0.7))
    w2 = w(Dataset(X, a * y + b), OptimalValue(a * 1.5 + b, a * 0.7))
    return float(np.max(np.abs(w1 - w2)))


def _tiny_run(seed):
    space = SearchSpace(np.array([-2.0]), np.array([2.0]))
    cfg = BoConfig(space, iterations=3, budget=McBudget(32, 128, 500, 8), seed=seed, restarts=2,
                   fit_restarts=2, n_candidates=128)
    return run(cfg, lambda x: float(-(x[0] - 0.7) ** 2))


def loop_properties(seed=0) -> float:
    """0 when two identical runs agree bit for bit and the incumbent never decreases."""
    a, b = _tiny_run(seed), _tiny_run(seed)
    same = np.array_equal(a.X_array, b.X_array) and np.array_equal(a.y_array, b.y_array)
    mono = bool(np.all(np.diff(a.incumbent) >= 0))
    return 0.0 if (same and mono) else 1.0


CHECKS = [
    ("rff_fidelity_se", lambda: rff_covariance_error("se"), 0.05, "<"),
    ("matheron_consistency", matheron_error, 0.05, "<"),
    ("uniform_equivalence", uniform_equivalence, 0.0, "<="),
    ("kernel_symmetry_psd", kernel_symmetry, 1e-10, "<="),
    ("gradient_vs_finite_difference", gradient_error, 1e-3, "<="),
    ("logei_monotonicity", logei_monotonicity, 0.0, ">="),
    ("mes_average", mes_average, -0.02, ">="),
    ("belief_scale_invariance", belief_scale_invariance, 1e-10, "<="),
    ("loop_determinism_and_incumbent", loop_properties, 0.0, "<="),
]


def run_checks(names=None, verbose=True, stream=None) -> list:
    results = []
    for name, fn, thr, rel in CHECKS:
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            stat = float(fn())
        except Exception as err:  # noqa: BLE001 - a crashing check is a failing check
            if verbose:
                print(f"{name} raised {err!r}", file=stream)
            stat = float("nan")
        res = CheckResult(name, stat, thr, rel, time.perf_counter() - t0)
        if verbose:
            print(res.line(), file=stream, flush=True)
        results.append(res)
    return results
