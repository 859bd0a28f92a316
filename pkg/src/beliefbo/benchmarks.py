"""Synthetic test functions, user-prior construction and regret.

All objectives are stated for maximization: the classic minimization forms
are negated, so every optimum value below is the *largest* noiseless value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beliefs import OptimalValue, OptimumLocation
from .gp import SearchSpace

_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]])
_H6_A = np.array([
    [10, 3, 17, 3.5, 1.7, 8],
    [0.05, 10, 17, 0.1, 8, 14],
    [3, 3.5, 1.7, 10, 17, 8],
    [17, 8, 0.05, 10, 0.1, 14],
])
_H6_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])


def _hartmann(A, P):
    def f(X):
        X = np.atleast_2d(X)
        inner = np.einsum("jd,njd->nj", A, (X[:, None, :] - P[None]) ** 2)
        return np.exp(-inner) @ _H_ALPHA

    return f


def _levy(X):
    X = np.atleast_2d(X)
    w = 1.0 + (X - 1.0) / 4.0
    head = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1) ** 2 * (1 + 10 * np.sin(np.pi * w[:, :-1] + 1) ** 2), axis=1)
    tail = (w[:, -1] - 1) ** 2 * (1 + np.sin(2 * np.pi * w[:, -1]) ** 2)
    return -(head + mid + tail)


def _rosenbrock(X):
    X = np.atleast_2d(X)
    return -np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (X[:, :-1] - 1) ** 2, axis=1)


def _styblinski_tang(X):
    X = np.atleast_2d(X)
    return -0.5 * np.sum(X**4 - 16 * X**2 + 5 * X, axis=1)


@dataclass(frozen=True)
class BenchmarkSpec:
    """A noisy synthetic objective with a known maximizer."""

    name: str
    dim: int
    lower: float
    upper: float
    noise_std: float
    x_opt: np.ndarray
    f_opt: float
    fn: Callable = field(repr=False, compare=False)

    @property
    def space(self) -> SearchSpace:
        return SearchSpace(np.full(self.dim, self.lower), np.full(self.dim, self.upper))

    def noiseless(self, X) -> np.ndarray:
        return self.fn(np.atleast_2d(np.asarray(X, dtype=float)))


_ST_X = -2.903534018185960

BENCHMARKS: dict[str, BenchmarkSpec] = {
    "hartmann3": BenchmarkSpec("hartmann3", 3, 0.0, 1.0, 0.25,
                               np.array([0.114589, 0.555649, 0.852547]), 3.862780,
                               _hartmann(_H3_A, _H3_P)),
    # 4D variant: first four columns of the 6D coefficients
    "hartmann4": BenchmarkSpec("hartmann4", 4, 0.0, 1.0, 0.25,
                               np.array([0.187395, 0.194152, 0.557918, 0.264780]), 3.729841,
                               _hartmann(_H6_A[:, :4], _H6_P[:, :4])),
    "hartmann6": BenchmarkSpec("hartmann6", 6, 0.0, 1.0, 0.25,
                               np.array([0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.657301]), 3.322368,
                               _hartmann(_H6_A, _H6_P)),
    "levy5": BenchmarkSpec("levy5", 5, -5.0, 5.0, 0.5, np.ones(5), 0.0, _levy),
    "rosenbrock6": BenchmarkSpec("rosenbrock6", 6, -2.048, 2.048, 5.0, np.ones(6), 0.0, _rosenbrock),
    "styblinskitang7": BenchmarkSpec("styblinskitang7", 7, -4.0, 4.0, 1.0, np.full(7, _ST_X),
                                     -7 * 0.5 * (_ST_X**4 - 16 * _ST_X**2 + 5 * _ST_X), _styblinski_tang),
}

_ALIASES = {
    "hartmann (4d)": "hartmann4", "hartmann-4d": "hartmann4", "hartmann4d": "hartmann4",
    "hartmann (6d)": "hartmann6", "hartmann-6d": "hartmann6", "hartmann6d": "hartmann6",
    "hartmann (3d)": "hartmann3", "hartmann-3d": "hartmann3", "hartmann3d": "hartmann3",
    "levy (5d)": "levy5", "levy-5d": "levy5", "levy5d": "levy5",
    "rosenbrock (6d)": "rosenbrock6", "rosenbrock-6d": "rosenbrock6", "rosenbrock6d": "rosenbrock6",
    "styblinski-tang (7d)": "styblinskitang7", "styblinski-tang-7d": "styblinskitang7",
    "stybtang7": "styblinskitang7", "styblinski_tang7": "styblinskitang7",
}


def get_benchmark(name: str) -> BenchmarkSpec:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; known: {sorted(BENCHMARKS)}")
    return BENCHMARKS[key]


def evaluate(spec: BenchmarkSpec, x, rng=None) -> np.ndarray:
    """Noisy evaluation at the rows of ``x`` (noiseless when ``rng`` is None)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != spec.dim:
        raise ValueError(f"{spec.name} expects {spec.dim} inputs, got {X.shape[1]}")
    if not spec.space.contains(X):
        raise ValueError(f"query outside the domain of {spec.name}")
    y = spec.fn(X)
    if rng is not None:
        y = y + spec.noise_std * rng.standard_normal(y.shape)
    return y


class NoisyObjective:
    """Seeded noisy objective; the noise of evaluation ``i`` depends on (seed, i) only.

    That makes a resumed run see exactly the noise an uninterrupted run would.
    """

    def __init__(self, spec: BenchmarkSpec, seed: int = 0, start: int = 0):
        self.spec = spec
        self.seed = seed
        self.count = start

    def __call__(self, x) -> float:
        rng = np.random.default_rng([self.seed, self.count, 7919])
        self.count += 1
        return float(evaluate(self.spec, x, rng)[0])


# --------------------------------------------------------------------------- priors


@dataclass(frozen=True)
class PriorSpec:
    quality: str = "good"  # good | bad
    q: float | None = None
    sigma_s: float | None = None  # fraction of the range per dimension
    seed: int = 0

    def __post_init__(self):
        if self.quality not in ("good", "bad"):
            raise ValueError("prior quality must be 'good' or 'bad'")

    @property
    def offset_fraction(self) -> float:
        if self.q is not None:
            return float(self.q)
        return 0.1 if self.quality == "good" else 1.0


def build_prior(spec: BenchmarkSpec, pspec: PriorSpec, max_tries: int = 10_000) -> OptimumLocation:
    """Gaussian belief over the maximizer, offset from ``x*`` by ``q sqrt(d)`` in unit-cube units.

    Good priors redraw the offset direction until the mode is inside the box;
    bad priors move the shifted mode to the nearest boundary point.
    """
    space = spec.space
    d = spec.dim
    c = pspec.offset_fraction * np.sqrt(d)
    x0 = space.normalize(spec.x_opt)
    rng = np.random.default_rng(pspec.seed)
    for _ in range(max_tries):
        e = rng.standard_normal(d)
        mode = x0 + c * e / np.linalg.norm(e)
        if pspec.quality == "bad" or np.all((mode >= 0) & (mode <= 1)):
            break
    else:
        raise RuntimeError("could not place the prior mode inside the search space")
    mode = np.clip(mode, 0.0, 1.0)
    if pspec.quality == "bad" and np.all((mode > 0) & (mode < 1)):
        j = int(np.argmin(np.minimum(mode, 1 - mode)))
        mode[j] = 0.0 if mode[j] < 0.5 else 1.0
    sigma = 0.25 if pspec.sigma_s is None else pspec.sigma_s
    return OptimumLocation(space.denormalize(mode), sigma * space.width)


def build_maxvalue_prior(spec: BenchmarkSpec, sigma_v: float) -> OptimalValue:
    if not sigma_v > 0:
        raise ValueError("sigma_v must be positive")
    return OptimalValue(spec.f_opt, sigma_v)


def simple_regret(values, spec: BenchmarkSpec | float) -> np.ndarray:
    """``f* - max_{i<=n} f(x_i)`` from the noiseless values of the queries."""
    f_opt = spec.f_opt if isinstance(spec, BenchmarkSpec) else float(spec)
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.empty(0)
    return np.maximum(f_opt - np.maximum.accumulate(v), 0.0)
