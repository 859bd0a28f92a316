"""Acceptance criteria, one test per criterion.

Criteria 5-8 read the experiment results under ``acceptance/results``; the
run command only computes cells that are missing or stale (config or code
hash changed), so with the cached results these tests take seconds. Every
test records its measured statistic, printed in the terminal summary.
"""
import csv
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import norm

from beliefbo import cli
from beliefbo.acquisition import LogEI, analytic_logei, incumbent, optimize_acq
from beliefbo.beliefs import (ArgmaxConfig, McBudget, OptimumLocation, Uniform, argmax_batch, build_ensemble,
                              vanilla_ensemble)
from beliefbo.benchmarks import get_benchmark
from beliefbo.gp import Dataset, GpHyperparams, SearchSpace, analytic_posterior, fit_map, posterior_mean_var
from beliefbo.pathwise import draw_prior, matheron_condition, sample_basis
from beliefbo.selfcheck import _toy_data, matheron_error, rff_covariance_error

ROOT = Path(__file__).resolve().parents[1] / "acceptance"
RESULTS = ROOT / "results"
SUMMARY = []


def report(criterion, passed, text):
    SUMMARY.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {text}")


# --------------------------------------------------------------------------- 1-4: computed live


def test_criterion_1_rff_fidelity():
    t0 = time.perf_counter()
    se = rff_covariance_error("se", m=2048, L=4096)
    se_mean = np.mean([rff_covariance_error("se", 2048, 4096, basis_seed=s, draw_seed=100 + s) for s in range(20)])
    ma_mean = np.mean([rff_covariance_error("matern52", 2048, 4096, basis_seed=s, draw_seed=100 + s)
                       for s in range(20)])
    secs = time.perf_counter() - t0
    ok = se < 0.05 and ma_mean >= se_mean and secs < 60
    report(1, ok, f"SE max error {se:.4f} < 0.05; mean over 20 basis seeds Matern {ma_mean:.4f} >= SE {se_mean:.4f};"
                  f" {secs:.0f}s < 60s")
    assert se < 0.05
    assert ma_mean >= se_mean
    assert secs < 60


def _conditioned_error(basis, hp, data, Q, post, L, seed, chunk=512):
    """Max abs error of streamed conditioned-draw mean and std against the exact posterior."""
    s1 = np.zeros(len(Q))
    s2 = np.zeros(len(Q))
    for ss in np.random.SeedSequence(seed).spawn(L // chunk):
        a, b = ss.spawn(2)
        F = matheron_condition(draw_prior(basis, hp, chunk, a), data, hp, b).evaluate(Q)
        s1 += F.sum(1)
        s2 += (F**2).sum(1)
    mean = s1 / L
    sd = np.sqrt(np.maximum(s2 / L - mean**2, 0.0))
    return max(np.max(np.abs(mean - post.mean)), np.max(np.abs(sd - np.sqrt(post.var))))


def test_criterion_2_matheron_consistency():
    t0 = time.perf_counter()
    err = matheron_error(L=4096)
    # halving: expected error at each L, estimated over replicate draw sets with equal total draws;
    # a dense QMC basis keeps the RFF bias below the draw noise
    hp = GpHyperparams(np.array([0.2]), 1.0, 0.01, 0.0)
    data = _toy_data(5, 1, 0)
    Q = np.linspace(0.0, 1.0, 50)[:, None]
    post = analytic_posterior(data, hp, Q)
    basis = sample_basis(hp, 8192, 0, qmc=True)
    e4 = np.mean([_conditioned_error(basis, hp, data, Q, post, 4096, 1000 + r) for r in range(16)])
    e16 = np.mean([_conditioned_error(basis, hp, data, Q, post, 16384, 2000 + r) for r in range(4)])
    ratio = e16 / e4
    secs = time.perf_counter() - t0
    ok = err < 0.05 and 0.25 <= ratio <= 0.75 and secs < 60
    report(2, ok, f"max error at L=4096 {err:.4f} < 0.05; error ratio L=16384/L=4096 {ratio:.3f} in [0.25, 0.75];"
                  f" {secs:.0f}s < 60s")
    assert err < 0.05
    assert 0.25 <= ratio <= 0.75
    assert secs < 60


def test_criterion_3_belief_filter_tv():
    t0 = time.perf_counter()
    hp = GpHyperparams(np.array([0.1]), 1.0, 1e-4, 0.0)
    space = SearchSpace.unit(1)
    belief = OptimumLocation([0.5], [0.15])
    argmax = ArgmaxConfig(256, 2, 30)
    ens = build_ensemble(sample_basis(hp, 1024, 0), belief, Dataset.empty(1), hp, McBudget(4096, 1024, 40_000, 32),
                         space, "rejection", seed=1, argmax=argmax)
    X, _ = argmax_batch(ens.draws, 256, seed=2, n_starts=2, steps=30)
    edges = np.linspace(0.0, 1.0, 21)
    hist = np.histogram(X[:, 0], edges)[0] / len(X)
    target = np.diff(norm.cdf(edges, 0.5, 0.15))
    target /= target.sum()
    tv = 0.5 * np.abs(hist - target).sum()
    secs = time.perf_counter() - t0
    ok = len(ens) == 4096 and tv < 0.1 and secs < 120
    report(3, ok, f"TV {tv:.4f} < 0.1 over {len(ens)} retained draws ({ens.n_proposed} proposed); {secs:.0f}s < 120s")
    assert len(ens) == 4096
    assert tv < 0.1
    assert secs < 120


def _analytic_argmax(data, hp, best, grid):
    def neg(u):
        m, v = posterior_mean_var(data, hp, np.clip(u, 0, 1)[None])
        return -analytic_logei(m, v, best)[0]

    m, v = posterior_mean_var(data, hp, grid)
    vals = analytic_logei(m, v, best)
    x0 = grid[np.argmax(vals)]
    res = minimize(neg, x0, method="L-BFGS-B", bounds=[(0, 1)] * grid.shape[1])
    return res.x if -res.fun >= vals.max() else x0


def test_criterion_4_uniform_equivalence_and_approximation():
    t0 = time.perf_counter()
    spec = get_benchmark("hartmann3")
    space = spec.space
    g = np.linspace(0, 1, 41)
    grid = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    Ls = (64, 128, 256)
    dist = {L: [] for L in Ls}
    mismatches = 0
    for k in range(10):
        rng = np.random.default_rng(k)
        X = rng.random((10, 3))
        data = Dataset(X, spec.noiseless(space.denormalize(X)) + spec.noise_std * rng.standard_normal(10))
        hp = fit_map(data, restarts=4, seed=k)
        m_obs, _ = posterior_mean_var(data, hp, data.X)
        x_star = _analytic_argmax(data, hp, float(m_obs.max()), grid)
        for L in Ls:
            basis = sample_basis(hp, 2048, 100 + k)
            van = vanilla_ensemble(basis, data, hp, L, seed=200 + k)
            uni = build_ensemble(basis, Uniform(), data, hp, McBudget(L, 2048, 20_000, 32), space, seed=200 + k)
            xv = optimize_acq(LogEI(van, incumbent(van, data)), 3, 8, seed=300 + k)
            xu = optimize_acq(LogEI(uni, incumbent(uni, data)), 3, 8, seed=300 + k)
            mismatches += not np.array_equal(xv, xu)
            dist[L].append(np.linalg.norm(xv - x_star))
    med = {L: float(np.median(dist[L])) for L in Ls}
    spread = max(med.values()) / max(min(med.values()), 1e-12)
    secs = time.perf_counter() - t0
    ok = mismatches == 0 and spread <= 2.0 and secs < 600
    meds = ", ".join(f"L={L}: {med[L]:.3f}" for L in Ls)
    report(4, ok, f"{mismatches} argmax mismatches (uniform vs vanilla) over 30 cases; median distance to analytic"
                  f" argmax {meds}, max/min {spread:.2f} <= 2; {secs:.0f}s < 600s")
    assert mismatches == 0
    assert spread <= 2.0
    assert secs < 600


# --------------------------------------------------------------------------- 5-8: desk-scale experiments


def _results(name):
    out = RESULTS / name
    rc = cli.main(["run", "--config", str(ROOT / f"{name}.yaml"), "--out", str(out)])
    assert rc == 0, f"experiment {name} did not complete"
    curves, seconds = {}, 0.0
    for p in sorted(out.glob("*.csv")):
        if p.name == "aggregate.csv":
            continue
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        method, seed = rows[0]["method"], int(rows[0]["seed"])
        curves.setdefault(method, {})[seed] = np.array([float(r["regret"]) for r in rows])
        seconds += sum(float(r["seconds"]) for r in rows)
    return curves, seconds


def _median_at(curves, n):
    """Median over seeds of simple regret after ``n`` evaluations."""
    return float(np.median([c[n - 1] for c in curves.values()]))


def test_criterion_5_good_prior_speedup():
    curves, secs = _results("good_prior")
    assert len(curves["belief-logei"]) == len(curves["logei"]) == 10
    c40 = _median_at(curves["belief-logei"], 40)
    c15 = _median_at(curves["belief-logei"], 15)
    v40 = _median_at(curves["logei"], 40)
    ok = c40 <= v40 and c15 <= v40 and secs <= 7200
    report(5, ok, f"median regret belief@40 {c40:.4f} <= vanilla@40 {v40:.4f}; belief@15 {c15:.4f} <= vanilla@40;"
                  f" compute {secs / 60:.0f} min <= 120 min")
    assert c40 <= v40
    assert c15 <= v40
    assert secs <= 7200


def test_criterion_6_bad_prior_robustness():
    curves, secs = _results("bad_prior")
    assert len(curves["belief-logei"]) == len(curves["logei"]) == 10
    c = _median_at(curves["belief-logei"], 80)
    v = _median_at(curves["logei"], 80)
    ok = c <= 2 * v and secs <= 4 * 3600
    report(6, ok, f"median final regret belief-weighted {c:.4f} <= 2 x vanilla {v:.4f}; compute {secs / 60:.0f} min <= 240 min")
    assert c <= 2 * v
    assert secs <= 4 * 3600


def test_criterion_7_max_value_prior():
    curves, secs = _results("value_prior")
    assert len(curves["belief-logei"]) == len(curves["logei"]) == 10
    c = _median_at(curves["belief-logei"], 40)
    v = _median_at(curves["logei"], 40)
    ok = c <= v and secs <= 7200
    report(7, ok, f"median final regret belief-weighted (value prior) {c:.4f} <= vanilla {v:.4f};"
                  f" compute {secs / 60:.0f} min <= 120 min")
    assert c <= v
    assert secs <= 7200


def test_criterion_8_batch_parity():
    batch, secs = _results("batch")
    seq, seq_secs = _results("good_prior")
    q3 = _median_at(batch["belief-logei"], 39)
    # the sequential arm is the 39-evaluation prefix of the deterministic 40-evaluation runs
    q1 = _median_at(seq["belief-logei"], 39)
    assert len(batch["belief-logei"]) == len(seq["belief-logei"]) == 10
    assert all(len(c) == 39 for c in batch["belief-logei"].values())
    ok = q3 <= 2 * q1 and secs <= 7200
    report(8, ok, f"median regret at 39 evaluations q=3 {q3:.4f} <= 2 x q=1 {q1:.4f}; compute {secs / 60:.0f} min"
                  f" <= 120 min")
    assert q3 <= 2 * q1
    assert secs <= 7200


# --------------------------------------------------------------------------- 9


def test_criterion_9_selfcheck(capsys):
    t0 = time.perf_counter()
    rc = cli.main(["selfcheck"])
    secs = time.perf_counter() - t0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("[")]
    ok = rc == 0 and secs < 300
    report(9, ok, f"selfcheck {sum(ln.startswith('[PASS]') for ln in lines)}/{len(lines)} checks passed;"
                  f" {secs:.1f}s < 300s")
    assert rc == 0
    assert secs < 300


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    request.config._acceptance_summary = list(SUMMARY)
