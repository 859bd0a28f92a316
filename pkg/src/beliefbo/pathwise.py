"""Decoupled posterior sampling with random Fourier features.

A prior path is ``c + sum_i w_i phi_i(x)`` with
``phi_i(x) = sqrt(2 s2 / m) cos(psi_i . x + b_i)``; conditioning adds the
deterministic correction ``k_n(x)^T (K_n + noise I)^{-1} (y - f(X) - eps)``.

Draws are stored in batches (:class:`DrawSet`) sharing one basis so that a
whole ensemble evaluates with two matrix products.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve
from scipy.stats import chi2, norm

from . import _backend
from .gp import Dataset, GpHyperparams, kernel_and_grad, kernel_matrix, train_cholesky

MATERN_DOF = 5.0


@dataclass(frozen=True)
class RffBasis:
    """Random Fourier basis; ``frequencies`` already include the lengthscales."""

    frequencies: np.ndarray  # (m, d)
    phases: np.ndarray  # (m,)
    outputscale: float
    kernel: str

    @property
    def m(self) -> int:
        return self.phases.size

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def scale(self) -> float:
        return float(np.sqrt(2.0 * self.outputscale / self.m))

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _backend.cos_features(X, self.frequencies, self.phases, self.scale)


def sample_basis(hp: GpHyperparams, m: int, seed=None, qmc: bool = False) -> RffBasis:
    """Frequencies from the kernel's spectral density, phases uniform on [0, 2pi).

    With ``qmc=True`` frequencies and phases come from one scrambled Sobol
    sequence pushed through the inverse CDFs, which shrinks the kernel
    approximation error well below plain Monte Carlo at the same ``m``.
    """
    if m < 1:
        raise ValueError("need at least one feature")
    d = hp.dim
    rng = np.random.default_rng(seed)
    if qmc:
        from .beliefs import sobol_points

        U = np.clip(sobol_points(m, d + 2, rng), 1e-12, 1 - 1e-12)
        z = norm.ppf(U[:, :d])
        phases = 2.0 * np.pi * U[:, d]
        u = chi2.ppf(U[:, d + 1], MATERN_DOF)
    else:
        z = rng.standard_normal((m, d))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
        u = rng.chisquare(MATERN_DOF, size=m) if hp.kernel == "matern52" else None
    if hp.kernel == "matern52":
        # multivariate t with 5 dof: one chi-square scale per frequency vector
        z = z * np.sqrt(MATERN_DOF / u)[:, None]
    return RffBasis(z / hp.lengthscales, phases, hp.outputscale, hp.kernel)


@dataclass(frozen=True)
class MatheronUpdate:
    """Per-draw data correction; columns index draws.

    ``targets`` is per draw so that fantasy observations can differ across
    draws; for real data every column equals ``y_std``.
    """

    X: np.ndarray  # (n, d)
    targets: np.ndarray  # (n, L)
    noise: np.ndarray  # (n, L)
    solve: np.ndarray  # (n, L)
    hp: GpHyperparams

    def take(self, idx) -> "MatheronUpdate":
        return replace(self, targets=self.targets[:, idx], noise=self.noise[:, idx], solve=self.solve[:, idx])


@dataclass(frozen=True)
class DrawSet:
    """A batch of sample paths over one shared basis."""

    basis: RffBasis
    weights: np.ndarray  # (L, m)
    mean: float = 0.0
    update: MatheronUpdate | None = None

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            if not -len(self) <= i < len(self):
                raise IndexError(i)
            return FunctionDraw(self, int(i) % len(self))
        return self.take(i)

    def __iter__(self):
        return (FunctionDraw(self, i) for i in range(len(self)))

    def take(self, idx) -> "DrawSet":
        idx = np.arange(len(self))[idx]
        upd = None if self.update is None else self.update.take(idx)
        return replace(self, weights=self.weights[idx], update=upd)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def prior(self) -> "DrawSet":
        return replace(self, update=None)

    def evaluate(self, X, chunk: int = 4096) -> np.ndarray:
        """Values of every draw at every row of ``X``, shape (k, L)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], len(self)))
        for s in range(0, X.shape[0], chunk):
            Xc = X[s : s + chunk]
            F = self.basis.features(Xc) @ self.weights.T + self.mean
            if self.update is not None:
                F += kernel_matrix(Xc, self.update.X, self.update.hp) @ self.update.solve
            out[s : s + chunk] = F
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient of every draw at a single point, shape (L, d)."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        b = self.basis
        S = np.sin(x @ b.frequencies.T + b.phases)  # (1, m)
        G = -b.scale * (self.weights * S) @ b.frequencies
        if self.update is not None:
            u = self.update
            _, g = kernel_and_grad(x, u.X, u.hp)  # (1, n)
            coef = g[0][:, None] * u.solve  # (n, L)
            G += (np.sum(coef, 0)[:, None] * x - coef.T @ u.X) / u.hp.lengthscales**2
        return G

    def value_and_grad_paired(self, P, idx=None):
        """Draw ``idx[p]`` evaluated at ``P[p]``: values (p,) and gradients (p, d)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=np.int64)
        b = self.basis
        vals, grads = _backend.paired_value_grad(P, idx, self.weights, b.frequencies, b.phases, b.scale)
        vals = vals + self.mean
        if self.update is not None:
            u = self.update
            k, g = kernel_and_grad(P, u.X, u.hp)  # (p, n)
            V = u.solve[:, idx].T  # (p, n)
            vals = vals + np.sum(k * V, 1)
            coef = g * V
            grads = grads + (np.sum(coef, 1)[:, None] * P - coef @ u.X) / u.hp.lengthscales**2
        return vals, grads


@dataclass(frozen=True)
class FunctionDraw:
    """One sample path: a view onto row ``index`` of a :class:`DrawSet`."""

    draws: DrawSet
    index: int

    def __call__(self, X) -> np.ndarray:
        return eval_draw(self, X)

    def gradient(self, x) -> np.ndarray:
        return grad_draw(self, x)

    def as_set(self) -> DrawSet:
        return self.draws.take([self.index])


def _as_set(draw) -> DrawSet:
    return draw.as_set() if isinstance(draw, FunctionDraw) else draw


def draw_prior(basis: RffBasis, hp: GpHyperparams, L: int, seed=None) -> DrawSet:
    """``L`` prior paths with standard normal weights.

    Rows are generated sequentially, so the first ``k`` draws for a given seed
    do not depend on ``L``.
    """
    if L < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    return DrawSet(basis, rng.standard_normal((L, basis.m)), hp.mean)


def condition_on(draws, X, targets, noise, hp: GpHyperparams) -> DrawSet:
    """Matheron update of the *prior* part of ``draws`` on explicit per-draw data."""
    draws = _as_set(draws).prior
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return draws
    L = len(draws)
    targets = np.broadcast_to(np.asarray(targets, dtype=float).reshape(X.shape[0], -1), (X.shape[0], L))
    chol = train_cholesky(X, hp)
    rhs = targets - draws.evaluate(X) - noise
    solve = cho_solve((chol, True), rhs)
    return replace(draws, update=MatheronUpdate(X, np.array(targets), noise, solve, hp))


def matheron_condition(draws, data: Dataset, hp: GpHyperparams, seed=None) -> DrawSet:
    """Condition prior draws on ``data``; fresh noise ``eps ~ N(0, noise)`` per draw."""
    draws = _as_set(draws)
    if data.n == 0:
        return draws
    rng = np.random.default_rng(seed)
    noise = np.sqrt(hp.noise) * rng.standard_normal((data.n, len(draws)))
    return condition_on(draws, data.X, data.y_std[:, None], noise, hp)


def fantasize(draws: DrawSet, x, seed=None) -> DrawSet:
    """Condition each draw additionally on its own value at ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rng = np.random.default_rng(seed)
    fx = draws.evaluate(x)  # (q, L)
    u = draws.update
    hp = u.hp if u is not None else None
    if hp is None:
        raise ValueError("fantasize needs conditioned draws (to know the noise level)")
    eps = np.sqrt(hp.noise) * rng.standard_normal(fx.shape)
    X = np.vstack([u.X, x])
    targets = np.vstack([u.targets, fx])
    noise = np.vstack([u.noise, eps])
    return condition_on(draws, X, targets, noise, hp)


def eval_draw(draw, X) -> np.ndarray:
    """Values of a single draw at the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(draw, FunctionDraw):
        idx = np.full(X.shape[0], draw.index)
        return draw.draws.value_and_grad_paired(X, idx)[0]
    return draw.evaluate(X)[:, 0]


def grad_draw(draw, x) -> np.ndarray:
    if isinstance(draw, FunctionDraw):
        return draw.draws.value_and_grad_paired(np.atleast_2d(x), [draw.index])[1][0]
    return draw.gradient(x)[0]
