import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, kv

from beliefbo.gp import (CholeskyError, Dataset, GpHyperparams, SearchSpace, analytic_posterior, cholesky_jittered,
                         fit_map, fit_map_result, kernel_eval, kernel_matrix, log_evidence, log_evidence_grad,
                         posterior_mean_var)


def matern_oracle(r, nu=2.5):
    # general Matern form via the modified Bessel function
    r = np.maximum(r, 1e-12)
    z = np.sqrt(2 * nu) * r
    return 2 ** (1 - nu) / gamma(nu) * z**nu * kv(nu, z)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.sampled_from(["se", "matern52"]), st.integers(0, 10_000))
def test_kernel_symmetric_psd(d, kernel, seed):
    rng = np.random.default_rng(seed)
    hp = GpHyperparams(rng.uniform(0.05, 3.0, d), rng.uniform(0.1, 5.0), 1e-3, 0.0, kernel)
    X = rng.random((12, d))
    K = kernel_matrix(X, X, hp)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-8
    assert np.allclose(np.diag(K), hp.outputscale)


def test_kernel_values_against_closed_forms():
    hp = GpHyperparams(np.array([0.5, 2.0]), 1.7)
    x, y = np.array([0.1, 0.3]), np.array([0.6, 1.3])
    r2 = ((x - y) / hp.lengthscales) ** 2
    assert kernel_eval(x, y, hp) == pytest.approx(1.7 * np.exp(-0.5 * r2.sum()), rel=1e-12)
    hm = GpHyperparams(np.array([0.5, 2.0]), 1.7, kernel="matern52")
    assert kernel_eval(x, y, hm) == pytest.approx(1.7 * matern_oracle(np.sqrt(r2.sum())), rel=1e-10)


def test_kernel_eval_dimension_mismatch():
    hp = GpHyperparams(np.ones(3))
    with pytest.raises(ValueError):
        kernel_eval(np.zeros(2), np.zeros(3), hp)


def test_jitter_ladder_and_failure():
    A = np.ones((3, 3))  # rank one
    L, jitter = cholesky_jittered(A)
    assert jitter > 0
    assert np.allclose(L @ L.T, A + jitter * np.eye(3))
    with pytest.raises(CholeskyError):
        cholesky_jittered(-np.eye(3))


def test_duplicate_points_posterior():
    # two observations at the same input: closed form s (y1 + y2) / (2 s + noise)
    hp = GpHyperparams(np.array([0.3]), 1.0, 0.1, 0.0)
    data = Dataset(np.array([[0.4], [0.4]]), np.array([1.0, 3.0]))
    post = analytic_posterior(data, hp, np.array([[0.4]]))
    y = data.y_std
    assert post.mean[0] == pytest.approx(y.sum() / (2 + 0.1), rel=1e-10)
    assert post.var[0] == pytest.approx(1 - 2 / (2 + 0.1), rel=1e-8)


def test_posterior_mean_var_matches_full():
    rng = np.random.default_rng(0)
    data = Dataset(rng.random((7, 2)), rng.standard_normal(7))
    hp = GpHyperparams(np.array([0.3, 0.6]), 1.4, 0.02, 0.2, "matern52")
    Q = rng.random((30, 2))
    post = analytic_posterior(data, hp, Q)
    m, v = posterior_mean_var(data, hp, Q, chunk=7)
    assert np.allclose(m, post.mean)
    assert np.allclose(v, post.var)


def test_dataset_standardization():
    data = Dataset(np.array([[0.1], [0.5], [0.9]]), np.array([2.0, 4.0, 9.0]))
    assert data.y_std.mean() == pytest.approx(0.0, abs=1e-12)
    assert data.y_std.std(ddof=1) == pytest.approx(1.0)
    assert np.allclose(data.destandardize(data.y_std), data.y)
    one = Dataset(np.array([[0.5]]), np.array([3.0]))
    assert one.y_scale == 1.0 and one.y_std[0] == 0.0
    with pytest.raises(ValueError):
        Dataset(np.array([[1.5]]), np.array([0.0]))


def test_search_space_round_trip():
    sp = SearchSpace(np.array([-5.0, 0.0]), np.array([5.0, 2.0]))
    X = np.array([[1.0, 0.5], [-5.0, 2.0]])
    assert np.allclose(sp.denormalize(sp.normalize(X)), X)
    assert sp.contains(X) and not sp.contains(np.array([[6.0, 1.0]]))
    with pytest.raises(ValueError):
        SearchSpace(np.array([1.0]), np.array([1.0]))


@pytest.mark.parametrize("kernel", ["se", "matern52"])
def test_evidence_gradient_finite_differences(kernel):
    rng = np.random.default_rng(1)
    data = Dataset(rng.random((9, 3)), rng.standard_normal(9))
    hp = GpHyperparams(np.array([0.4, 0.8, 1.5]), 0.9, 0.03, -0.2, kernel)
    g = log_evidence_grad(data, hp)
    v = hp.to_vector()
    h = 1e-6
    fd = np.array([(log_evidence(data, GpHyperparams.from_vector(v + h * e, kernel))
                    - log_evidence(data, GpHyperparams.from_vector(v - h * e, kernel))) / (2 * h)
                   for e in np.eye(v.size)])
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-3


def test_fit_map_improves_and_is_deterministic():
    rng = np.random.default_rng(2)
    X = rng.random((15, 2))
    data = Dataset(X, np.sin(5 * X[:, 0]) + X[:, 1] ** 2 + 0.05 * rng.standard_normal(15))
    hp = fit_map(data, restarts=4, seed=3)
    assert log_evidence(data, hp) >= log_evidence(data, GpHyperparams.default(2))
    assert np.array_equal(fit_map(data, restarts=4, seed=3).to_vector(), hp.to_vector())
    assert np.all(hp.lengthscales > 1e-3) and np.all(hp.lengthscales < 1e2)
    assert 1e-6 <= hp.noise <= 10.0


def test_fit_map_needs_data():
    with pytest.raises(ValueError):
        fit_map_result(Dataset.empty(2))


def test_fit_map_single_point():
    res = fit_map_result(Dataset(np.array([[0.3, 0.3]]), np.array([1.0])), restarts=2)
    assert not res.failed and np.isfinite(res.log_evidence)
