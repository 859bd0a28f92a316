import numpy as np
import pytest
from scipy import stats

from beliefbo.gp import Dataset, GpHyperparams, analytic_posterior, kernel_matrix
from beliefbo.pathwise import (condition_on, draw_prior, eval_draw, fantasize, grad_draw, matheron_condition,
                               sample_basis)


@pytest.mark.parametrize("kernel", ["se", "matern52"])
def test_prior_moments(kernel):
    hp = GpHyperparams(np.array([0.3, 0.3]), 2.0, 1e-3, 0.5, kernel)
    draws = draw_prior(sample_basis(hp, 1024, 0), hp, 8192, 1)
    F = draws.evaluate(np.array([[0.2, 0.7], [0.9, 0.1]]))
    assert np.allclose(F.mean(1), 0.5, atol=0.06)
    assert np.allclose(F.var(1), 2.0, rtol=0.1)


def test_values_are_gaussian():
    hp = GpHyperparams(np.array([0.5]), 1.0)
    F = draw_prior(sample_basis(hp, 2048, 3), hp, 4000, 4).evaluate(np.array([[0.37]]))[0]
    assert stats.kstest(F, "norm", args=(0.0, F.std())).pvalue > 0.01


def test_basis_approximates_kernel_better_with_qmc():
    hp = GpHyperparams(np.ones(2), 1.0)
    G = np.random.default_rng(0).random((20, 2))
    K = kernel_matrix(G, G, hp)
    err = {}
    for qmc in (False, True):
        P = sample_basis(hp, 4096, 5, qmc=qmc).features(G)
        err[qmc] = np.max(np.abs(P @ P.T - K))
    assert err[True] < err[False] < 0.1


def test_draws_are_prefix_consistent():
    hp = GpHyperparams(np.ones(2))
    B = sample_basis(hp, 64, 0)
    assert np.array_equal(draw_prior(B, hp, 5, 9).weights, draw_prior(B, hp, 20, 9).weights[:5])


def test_conditioned_draws_interpolate_noiseless_data():
    hp = GpHyperparams(np.array([0.25]), 1.0, 1e-6, 0.0)
    data = Dataset(np.array([[0.1], [0.5], [0.8]]), np.array([1.0, -2.0, 0.5]))
    draws = matheron_condition(draw_prior(sample_basis(hp, 512, 0), hp, 64, 1), data, hp, 2)
    F = draws.evaluate(data.X)
    assert np.allclose(F, data.y_std[:, None], atol=1e-2)


def test_matheron_matches_posterior():
    rng = np.random.default_rng(4)
    hp = GpHyperparams(np.array([0.2]), 1.0, 0.01, 0.0)
    data = Dataset(rng.random((5, 1)), rng.standard_normal(5))
    Q = np.linspace(0, 1, 30)[:, None]
    post = analytic_posterior(data, hp, Q)
    F = matheron_condition(draw_prior(sample_basis(hp, 4096, 0, qmc=True), hp, 8192, 1), data, hp, 2).evaluate(Q)
    assert np.max(np.abs(F.mean(1) - post.mean)) < 0.05
    assert np.max(np.abs(np.cov(F) - post.cov)) < 0.05


@pytest.mark.parametrize("kernel", ["se", "matern52"])
def test_draw_gradients(kernel):
    rng = np.random.default_rng(5)
    hp = GpHyperparams(np.array([0.3, 0.6]), 1.5, 0.01, 0.3, kernel)
    data = Dataset(rng.random((6, 2)), rng.standard_normal(6))
    draws = matheron_condition(draw_prior(sample_basis(hp, 300, 1), hp, 7, 2), data, hp, 3)
    x = np.array([0.41, 0.63])
    h = 1e-6
    G = draws.gradient(x)
    fd = np.stack([(draws.evaluate(x + h * e)[0] - draws.evaluate(x - h * e)[0]) / (2 * h) for e in np.eye(2)], 1)
    assert np.allclose(G, fd, rtol=1e-4, atol=1e-6)
    one = draws[3]
    assert grad_draw(one, x) == pytest.approx(G[3])
    assert eval_draw(one, x[None])[0] == pytest.approx(draws.evaluate(x)[0, 3])
    P = rng.random((4, 2))
    vals, grads = draws.value_and_grad_paired(P, [0, 3, 3, 6])
    assert np.allclose(vals, [draws.evaluate(P[i])[0, j] for i, j in enumerate([0, 3, 3, 6])])


def test_fantasize_pins_each_path_to_its_own_value():
    rng = np.random.default_rng(6)
    hp = GpHyperparams(np.array([0.2]), 1.0, 1e-3, 0.0)
    data = Dataset(rng.random((4, 1)), rng.standard_normal(4))
    draws = matheron_condition(draw_prior(sample_basis(hp, 512, 0), hp, 256, 1), data, hp, 2)
    grid = np.linspace(0, 1, 101)[:, None]
    x = grid[[np.argmax(draws.evaluate(grid).var(1))]]
    before = draws.evaluate(x)[0]
    after = fantasize(draws, x, 3).evaluate(x)[0]
    # conditional variance (spread around each fantasy) collapses to the noise scale
    assert np.mean((after - before) ** 2) < 0.01 * before.var()
    with pytest.raises(ValueError):
        fantasize(draws.prior, x, 0)


def test_condition_on_empty_is_prior():
    hp = GpHyperparams(np.ones(1))
    d = draw_prior(sample_basis(hp, 16, 0), hp, 3, 0)
    out = condition_on(d, np.zeros((0, 1)), np.zeros((0, 3)), np.zeros((0, 3)), hp)
    assert out.update is None


def test_invalid_sizes():
    hp = GpHyperparams(np.ones(1))
    with pytest.raises(ValueError):
        sample_basis(hp, 0)
    with pytest.raises(ValueError):
        draw_prior(sample_basis(hp, 4), hp, 0)
