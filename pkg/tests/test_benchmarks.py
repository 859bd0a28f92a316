import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import qmc

from beliefbo.benchmarks import (BENCHMARKS, NoisyObjective, PriorSpec, build_maxvalue_prior, build_prior, evaluate,
                                 get_benchmark, simple_regret)

# brute-force optimum of Hartmann-6D (10^6 Sobol points + L-BFGS-B polish), frozen
H6_FSTAR = 3.3223680114155125


def brute_force_max(spec, n=2**14, polish=8):
    U = qmc.Sobol(spec.dim, seed=0).random(n)
    X = spec.space.denormalize(U)
    f = spec.noiseless(X)
    best = -np.inf
    bounds = list(zip(spec.space.lower, spec.space.upper))
    for x0 in X[np.argsort(f)[-polish:]]:
        res = minimize(lambda x: -spec.noiseless(x[None])[0], x0, method="L-BFGS-B", bounds=bounds)
        best = max(best, -res.fun)
    return best


def test_analytic_optima():
    assert evaluate(get_benchmark("rosenbrock6"), np.ones(6))[0] == 0.0
    assert evaluate(get_benchmark("levy5"), np.ones(5))[0] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_frozen_optimum_is_attained_and_not_beaten(name):
    spec = BENCHMARKS[name]
    assert spec.noiseless(spec.x_opt[None])[0] == pytest.approx(spec.f_opt, abs=1e-5)
    assert brute_force_max(spec) <= spec.f_opt + 1e-5


def test_hartmann6_table_location_near_optimum():
    spec = get_benchmark("hartmann6")
    v = spec.noiseless(np.array([[0.20, 0.15, 0.48, 0.28, 0.31, 0.66]]))[0]
    assert abs(v - H6_FSTAR) < 1e-2
    assert spec.f_opt == pytest.approx(H6_FSTAR, abs=1e-6)


def test_noise_levels_and_calibration():
    sig = {"hartmann4": 0.25, "hartmann6": 0.25, "levy5": 0.5, "rosenbrock6": 5.0, "styblinskitang7": 1.0}
    for name, s in sig.items():
        assert get_benchmark(name).noise_std == s
    spec = get_benchmark("hartmann4")
    obj = NoisyObjective(spec, seed=3)
    x = np.full(4, 0.4)
    y = np.array([obj(x) for _ in range(10_000)])
    assert abs(y.var(ddof=1) / 0.25**2 - 1) < 0.1
    assert abs(y.mean() - spec.noiseless(x[None])[0]) < 4 * 0.25 / 100


def test_noise_stream_determinism():
    spec = get_benchmark("levy5")
    x = np.zeros(5)
    a = [NoisyObjective(spec, 11)(x) for _ in range(1)]
    o1, o2 = NoisyObjective(spec, 11), NoisyObjective(spec, 11)
    s1 = [o1(x) for _ in range(5)]
    s2 = [o2(x) for _ in range(5)]
    assert s1 == s2 and a[0] == s1[0]
    resumed = NoisyObjective(spec, 11, start=3)
    assert resumed(x) == s1[3]
    assert NoisyObjective(spec, 12)(x) != s1[0]


def test_out_of_bounds_and_dimension():
    spec = get_benchmark("hartmann4")
    with pytest.raises(ValueError):
        evaluate(spec, np.full(4, 1.2))
    with pytest.raises(ValueError):
        evaluate(spec, np.zeros(3))


def test_registry_names():
    assert get_benchmark("Hartmann (4D)") is BENCHMARKS["hartmann4"]
    assert get_benchmark("Styblinski-Tang (7D)").dim == 7
    with pytest.raises(KeyError):
        get_benchmark("branin")


@pytest.mark.parametrize("name", ["hartmann4", "levy5", "rosenbrock6"])
def test_good_prior_geometry(name):
    spec = get_benchmark(name)
    for seed in range(20):
        b = build_prior(spec, PriorSpec("good", seed=seed))
        u = spec.space.normalize(b.mean)
        x0 = spec.space.normalize(spec.x_opt)
        assert np.linalg.norm(u - x0) == pytest.approx(0.1 * np.sqrt(spec.dim), rel=1e-9)
        assert np.all((u >= 0) & (u <= 1))
        assert np.allclose(b.std, 0.25 * spec.space.width)


def test_offset_length_example():
    spec = get_benchmark("hartmann4")
    b = build_prior(spec, PriorSpec("good", seed=0))
    assert np.linalg.norm(b.mean - spec.x_opt) == pytest.approx(0.2, rel=1e-9)


def test_bad_prior_on_boundary():
    for name in ("hartmann4", "hartmann6", "levy5"):
        spec = get_benchmark(name)
        for seed in range(10):
            u = spec.space.normalize(build_prior(spec, PriorSpec("bad", seed=seed)).mean)
            assert np.all((u >= 0) & (u <= 1))
            assert np.any((u == 0) | (u == 1))


def test_prior_quality_validation():
    with pytest.raises(ValueError):
        PriorSpec("medium")
    assert PriorSpec("bad").offset_fraction == 1.0


def test_simple_regret():
    r = simple_regret([1.0, 3.0, 2.0, 3.5], 4.0)
    assert np.array_equal(r, [3.0, 1.0, 1.0, 0.5])
    spec = get_benchmark("hartmann4")
    hit = simple_regret([0.1, spec.f_opt, 0.2], spec)
    assert np.array_equal(hit[1:], [0.0, 0.0])
    assert simple_regret([], 1.0).size == 0
    rng = np.random.default_rng(0)
    assert np.all(np.diff(simple_regret(rng.standard_normal(50), 5.0)) <= 0)


def test_maxvalue_prior():
    spec = get_benchmark("hartmann6")
    b = build_maxvalue_prior(spec, 0.1)
    assert b.mean == pytest.approx(H6_FSTAR, abs=1e-6)
    with pytest.raises(ValueError):
        build_maxvalue_prior(spec, 0.0)
    f = np.linspace(-1, 4, 40)
    lw = build_maxvalue_prior(spec, 1e8).log_weight(None, f, spec.space)
    w = np.exp(lw - lw.max())
    assert np.allclose(w / w.sum(), 1 / 40, rtol=1e-10)
