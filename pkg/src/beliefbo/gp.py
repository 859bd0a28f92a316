"""Exact Gaussian-process machinery: kernels, posterior, MAP hyperparameters.

Inputs live in the unit cube and outputs are standardized; the
:class:`SearchSpace` and :class:`Dataset` types own those conversions.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

KERNELS = ("se", "matern52")
JITTER_LADDER = tuple(10.0 ** -e for e in range(8, 3, -1))  # 1e-8 ... 1e-4
_LOG_2PI = np.log(2.0 * np.pi)
_SQRT5 = np.sqrt(5.0)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept ints, int sequences, None or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class CholeskyError(np.linalg.LinAlgError):
    """Raised when a covariance stays non-PD after the full jitter ladder."""

    def __init__(self, jitter: float):
        super().__init__(f"matrix not positive definite even with jitter {jitter:g}")
        self.jitter = jitter


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box in original units."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "SearchSpace":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def normalize(self, X):
        return (np.asarray(X, dtype=float) - self.lower) / self.width

    def denormalize(self, U):
        return self.lower + np.asarray(U, dtype=float) * self.width

    def contains(self, X, tol: float = 1e-12) -> bool:
        X = np.asarray(X, dtype=float)
        return bool(np.all(X >= self.lower - tol) and np.all(X <= self.upper + tol))


@dataclass(frozen=True)
class Dataset:
    """Observations with normalized inputs and raw outputs.

    The standardizer is derived from ``y`` on construction, so every new
    :class:`Dataset` (e.g. from :meth:`append`) carries a fresh one.
    """

    X: np.ndarray
    y: np.ndarray
    y_mean: float = field(init=False)
    y_scale: float = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(y.size, -1) if y.size else X.reshape(0, -1)
        if X.shape[0] != y.size:
            raise ValueError("X and y disagree on the number of observations")
        if np.any(X < -1e-9) or np.any(X > 1 + 1e-9):
            raise ValueError("Dataset inputs must lie in the unit cube")
        mean = float(y.mean()) if y.size else 0.0
        scale = float(y.std(ddof=1)) if y.size >= 2 else 1.0
        if not np.isfinite(scale) or scale <= 0.0:
            scale = 1.0
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_mean", mean)
        object.__setattr__(self, "y_scale", scale)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def y_std(self) -> np.ndarray:
        return (self.y - self.y_mean) / self.y_scale

    def standardize(self, v):
        return (np.asarray(v, dtype=float) - self.y_mean) / self.y_scale

    def destandardize(self, v):
        return self.y_mean + self.y_scale * np.asarray(v, dtype=float)

    def append(self, X_new, y_new) -> "Dataset":
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        y_new = np.atleast_1d(np.asarray(y_new, dtype=float))
        return Dataset(np.vstack([self.X, X_new]), np.concatenate([self.y, y_new]))


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    outputscale: float = 1.0
    noise: float = 1e-4
    mean: float = 0.0
    kernel: str = "se"

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or np.any(ls <= 0) or self.outputscale <= 0 or self.noise <= 0:
            raise ValueError("scale hyperparameters must be strictly positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    @classmethod
    def default(cls, dim: int, kernel: str = "se") -> "GpHyperparams":
        """Hyperprior medians (all scales 1, zero mean)."""
        return cls(np.ones(dim), 1.0, 1.0, 0.0, kernel)

    def to_vector(self) -> np.ndarray:
        """Unconstrained parameterisation ``[log ls, log outputscale, log noise, mean]``."""
        return np.concatenate(
            [np.log(self.lengthscales), [np.log(self.outputscale), np.log(self.noise), self.mean]]
        )

    @classmethod
    def from_vector(cls, v, kernel: str = "se") -> "GpHyperparams":
        v = np.asarray(v, dtype=float)
        d = v.size - 3
        return cls(np.exp(v[:d]), float(np.exp(v[d])), float(np.exp(v[d + 1])), float(v[d + 2]), kernel)


@dataclass(frozen=True)
class PosteriorGaussian:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()


# --------------------------------------------------------------------------- kernels


def _scaled_sqdist(X1, X2, ls):
    A = X1 / ls
    B = X2 / ls
    r2 = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return np.maximum(r2, 0.0)


def _radial(r2, hp: GpHyperparams):
    """Kernel values and the factor ``g`` with grad_x k(x, x') = g * (x - x') / ls**2."""
    s2 = hp.outputscale
    if hp.kernel == "se":
        k = s2 * np.exp(-0.5 * r2)
        return k, -k
    r = np.sqrt(r2)
    e = np.exp(-_SQRT5 * r)
    k = s2 * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * e
    return k, -s2 * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * e


def kernel_matrix(X1, X2, hp: GpHyperparams) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != hp.dim or X2.shape[1] != hp.dim:
        raise ValueError(f"expected points of dimension {hp.dim}")
    k, _ = _radial(_scaled_sqdist(X1, X2, hp.lengthscales), hp)
    return k


def kernel_eval(x, x2, hp: GpHyperparams) -> float:
    """Covariance between two single points."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.size != hp.dim or x2.size != hp.dim:
        raise ValueError(f"points must have length {hp.dim}, got {x.size} and {x2.size}")
    return float(kernel_matrix(x[None], x2[None], hp)[0, 0])


def kernel_and_grad(P, X2, hp: GpHyperparams):
    """``K(P, X2)`` and the radial gradient factor, both of shape (p, n)."""
    return _radial(_scaled_sqdist(P, X2, hp.lengthscales), hp)


# --------------------------------------------------------------------------- linear algebra


def cholesky_jittered(A: np.ndarray):
    """Lower Cholesky factor of ``A``, escalating diagonal jitter when needed.

    Returns the factor and the jitter actually added (0.0 if none).
    """
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(A.shape[0])
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise CholeskyError(JITTER_LADDER[-1])


def train_cholesky(X, hp: GpHyperparams):
    A = kernel_matrix(X, X, hp) + hp.noise * np.eye(X.shape[0])
    return cholesky_jittered(A)[0]


# --------------------------------------------------------------------------- evidence


def log_hyperprior(hp: GpHyperparams) -> float:
    """LogNormal(0, 1) on every scale parameter, Normal(0, 1) on the mean."""
    scales = np.concatenate([hp.lengthscales, [hp.outputscale, hp.noise]])
    u = np.log(scales)
    lp = np.sum(-u - 0.5 * u**2 - 0.5 * _LOG_2PI)
    return float(lp - 0.5 * hp.mean**2 - 0.5 * _LOG_2PI)


def _evidence_and_grad(v, X, y, kernel, with_grad=True):
    hp = GpHyperparams.from_vector(v, kernel)
    d = hp.dim
    lp = log_hyperprior(hp)
    u = v[: d + 2]
    gprior = np.concatenate([-1.0 - u, [-hp.mean]])
    n = y.size
    if n == 0:
        return lp, gprior
    r2 = _scaled_sqdist(X, X, hp.lengthscales)
    K, g = _radial(r2, hp)
    A = K + hp.noise * np.eye(n)
    L, _ = cholesky_jittered(A)
    resid = y - hp.mean
    alpha = cho_solve((L, True), resid)
    lml = -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI
    if not with_grad:
        return lml + lp, None
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty(d + 3)
    for t in range(d):
        D = (X[:, t][:, None] - X[:, t][None, :]) ** 2 / hp.lengthscales[t] ** 2
        grad[t] = 0.5 * np.sum(W * (-g * D))
    grad[d] = 0.5 * np.sum(W * K)
    grad[d + 1] = 0.5 * hp.noise * np.trace(W)
    grad[d + 2] = np.sum(alpha)
    return lml + lp, grad + gprior


def log_evidence(data: Dataset, hp: GpHyperparams) -> float:
    """Log marginal likelihood of the standardized outputs plus log hyperprior."""
    val, _ = _evidence_and_grad(hp.to_vector(), data.X, data.y_std, hp.kernel, with_grad=False)
    return float(val)


def log_evidence_grad(data: Dataset, hp: GpHyperparams) -> np.ndarray:
    """Gradient of :func:`log_evidence` w.r.t. :meth:`GpHyperparams.to_vector`."""
    return _evidence_and_grad(hp.to_vector(), data.X, data.y_std, hp.kernel)[1]


# bounds in the unconstrained parameterisation
_LOG_LS_BOUNDS = (np.log(1e-3), np.log(1e2))
_LOG_OS_BOUNDS = (np.log(1e-3), np.log(1e2))
_LOG_NOISE_BOUNDS = (np.log(1e-6), np.log(1e1))
_MEAN_BOUNDS = (-5.0, 5.0)


@dataclass(frozen=True)
class FitResult:
    hp: GpHyperparams
    log_evidence: float
    failed: bool = False


def fit_map_result(data: Dataset, restarts: int = 8, seed=0, kernel: str = "se") -> FitResult:
    """Multi-start L-BFGS-B on the log evidence; starts drawn from the hyperprior."""
    if data.n < 1:
        raise ValueError("fit_map needs at least one observation")
    d = data.dim
    bounds = [_LOG_LS_BOUNDS] * d + [_LOG_OS_BOUNDS, _LOG_NOISE_BOUNDS, _MEAN_BOUNDS]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    X, y = data.X, data.y_std

    def negobj(v):
        try:
            val, grad = _evidence_and_grad(v, X, y, kernel)
        except np.linalg.LinAlgError:
            return 1e10, np.zeros_like(v)
        if not np.isfinite(val):
            return 1e10, np.zeros_like(v)
        return -val, -grad

    best_v, best_val = None, -np.inf
    seeds = as_seed_sequence(seed).spawn(restarts)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        v0 = np.clip(rng.standard_normal(d + 3), lo, hi)
        f0, _ = negobj(v0)
        if -f0 > best_val:
            best_v, best_val = v0, -f0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(negobj, v0, jac=True, method="L-BFGS-B", bounds=bounds)
        if np.all(np.isfinite(res.x)) and -res.fun > best_val and res.fun < 1e10:
            best_v, best_val = res.x, -res.fun
    if best_v is None or not np.isfinite(best_val) or best_val <= -1e10:
        logger.warning("all MAP restarts failed; falling back to hyperprior medians")
        hp = GpHyperparams.default(d, kernel)
        return FitResult(hp, -np.inf, failed=True)
    return FitResult(GpHyperparams.from_vector(best_v, kernel), float(best_val))


def fit_map(data: Dataset, restarts: int = 8, seed=0, kernel: str = "se") -> GpHyperparams:
    return fit_map_result(data, restarts, seed, kernel).hp


# --------------------------------------------------------------------------- posterior


def analytic_posterior(data: Dataset, hp: GpHyperparams, Xq) -> PosteriorGaussian:
    """Exact posterior of the latent function at ``Xq`` (standardized units)."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Kqq = kernel_matrix(Xq, Xq, hp)
    if data.n == 0:
        return PosteriorGaussian(np.full(Xq.shape[0], hp.mean), Kqq)
    L = train_cholesky(data.X, hp)
    Kqn = kernel_matrix(Xq, data.X, hp)
    alpha = cho_solve((L, True), data.y_std - hp.mean)
    V = solve_triangular(L, Kqn.T, lower=True)
    cov = Kqq - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return PosteriorGaussian(hp.mean + Kqn @ alpha, cov)


def posterior_mean_var(data: Dataset, hp: GpHyperparams, Xq, chunk: int = 20000):
    """Marginal mean and variance only; safe for very large query sets."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if data.n == 0:
        return np.full(Xq.shape[0], hp.mean), np.full(Xq.shape[0], hp.outputscale)
    L = train_cholesky(data.X, hp)
    alpha = cho_solve((L, True), data.y_std - hp.mean)
    means, vars_ = [], []
    for s in range(0, Xq.shape[0], chunk):
        Kqn = kernel_matrix(Xq[s : s + chunk], data.X, hp)
        V = solve_triangular(L, Kqn.T, lower=True)
        means.append(hp.mean + Kqn @ alpha)
        vars_.append(np.maximum(hp.outputscale - np.sum(V**2, 0), 1e-12))
    return np.concatenate(means), np.concatenate(vars_)


def with_noise(hp: GpHyperparams, noise: float) -> GpHyperparams:
    return replace(hp, noise=noise)
