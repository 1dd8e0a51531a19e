"""Benchmark targets, input laws, the relative noise model and Monte-Carlo test risks."""

from __future__ import annotations

import functools
import importlib
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..features import FeatureMap, UnivariateBasis, polynomial_map
from ..learn.als import Dataset
from ..network import evaluate_features

SIGMA_SAMPLES = 10**6
SIGMA_SEED = 20211


def _g(x):
    return 1.0 - 2.0 * np.abs(x - 0.5)


def corner_peak(X):
    X = np.atleast_2d(X)
    w = 1.0 / np.arange(1, X.shape[1] + 1) ** 2
    return 1.0 / (1.0 + X @ w)


# (mean, std) for the Gaussian inputs, (low, high) for the uniform ones
BOREHOLE_GAUSS = [(0.1, 0.0161812), (7.71, 1.0056)]
BOREHOLE_UNIF = [(63070, 115600), (990, 1110), (63.1, 116), (700, 820), (1120, 1680),
                 (9855, 12045)]


def borehole_physical(U):
    U = np.atleast_2d(U)
    u1, u2, u3, u4, u5, u6, u7, u8 = U.T
    lg = u2 - np.log(u1)
    return 2 * np.pi * u3 * (u4 - u6) / (lg * (1 + 2 * u7 * u3 / (lg * u1**2 * u8) + u3 / u5))


def borehole(X):
    """Borehole flow with X1, X2 standard Gaussian and X3..X8 uniform on [-1, 1]."""
    X = np.atleast_2d(X)
    cols = [m + s * X[:, k] for k, (m, s) in enumerate(BOREHOLE_GAUSS)]
    cols += [lo + (hi - lo) * (X[:, k + 2] + 1) / 2 for k, (lo, hi) in enumerate(BOREHOLE_UNIF)]
    return borehole_physical(np.stack(cols, axis=1))


@dataclass(frozen=True)
class Problem:
    name: str
    d: int
    f: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    univariate: bool = False

    def default_features(self, N: int | list[int] = 10) -> FeatureMap:
        """Polynomial features; ``N`` is one dimension for all variables or one per variable."""
        Ns = [N] * self.d if isinstance(N, int) else list(N)
        if len(Ns) != self.d:
            raise ValueError(f"{self.name} needs {self.d} feature dimensions, got {len(Ns)}")
        if self.name == "borehole":
            return FeatureMap([UnivariateBasis("poly", n, "hermite" if k < 2 else "legendre",
                                               (0.0, 1.0) if k < 2 else (-1.0, 1.0))
                               for k, n in enumerate(Ns)])
        return polynomial_map(self.d, Ns, "legendre", (0.0, 1.0))


def _unit(d):
    return lambda rng, n: rng.uniform(0.0, 1.0, size=(n, d))


def _borehole_inputs(rng, n):
    return np.concatenate([rng.standard_normal((n, 2)), rng.uniform(-1.0, 1.0, (n, 6))], axis=1)


def _univariate(fn):
    return lambda X: fn(np.atleast_2d(X)[:, 0])


PROBLEMS: dict[str, Problem] = {
    "sqrt_x": Problem("sqrt_x", 1, _univariate(np.sqrt), _unit(1), True),
    "inv_1px": Problem("inv_1px", 1, _univariate(lambda x: 1.0 / (1.0 + x)), _unit(1), True),
    "gg_squared": Problem("gg_squared", 1, _univariate(lambda x: _g(_g(x)) ** 2), _unit(1), True),
    "corner_peak": Problem("corner_peak", 10, corner_peak, _unit(10)),
    "borehole": Problem("borehole", 8, borehole, _borehole_inputs),
}


def register_problem(problem: Problem) -> None:
    PROBLEMS[problem.name] = problem
    sigma_hat.cache_clear()


def custom_problem(target: str, d: int, univariate: bool | None = None) -> Problem:
    """Problem with uniform inputs on [0,1]^d and target ``module:function`` (vectorized)."""
    mod, _, fn = target.partition(":")
    func = getattr(importlib.import_module(mod), fn)
    uni = d == 1 if univariate is None else univariate
    return Problem("custom", d, _univariate(func) if uni else func, _unit(d), uni)


def get_problem(name: str) -> Problem:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None


def target_function(name: str, x) -> np.ndarray | float:
    prob = get_problem(name)
    arr = np.asarray(x, dtype=float)
    if prob.d == 1 and arr.ndim <= 1:
        out = prob.f(arr.reshape(-1, 1))
        return float(out[0]) if arr.ndim == 0 else out
    out = prob.f(np.atleast_2d(arr))
    return float(out[0]) if arr.ndim == 1 else out


@functools.lru_cache(maxsize=None)
def sigma_hat(name: str) -> float:
    """Standard deviation of f*(X) under the input law, from a fixed-seed Monte Carlo."""
    prob = get_problem(name)
    rng = np.random.default_rng(SIGMA_SEED)
    total, total2, done = 0.0, 0.0, 0
    while done < SIGMA_SAMPLES:
        m = min(200_000, SIGMA_SAMPLES - done)
        v = prob.f(prob.sampler(rng, m))
        total += v.sum()
        total2 += (v * v).sum()
        done += m
    mean = total / done
    return math.sqrt(max(total2 / done - mean * mean, 0.0) * done / (done - 1))


def sample_dataset(name: str, n: int, gamma: float, seed: int) -> Dataset:
    """Y = f*(X) + eps with eps ~ N(0, (gamma sigma_hat)^2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    prob = get_problem(name)
    rng = np.random.default_rng(seed)
    X = prob.sampler(rng, n)
    y = prob.f(X)
    if gamma > 0:
        y = y + gamma * sigma_hat(name) * rng.standard_normal(n)
    return Dataset(X, y)


@dataclass(frozen=True)
class TestSample:
    """Fresh noisy sample for Monte-Carlo risks; ``f`` holds the noiseless targets."""

    X: np.ndarray
    y: np.ndarray
    f: np.ndarray

    @classmethod
    def draw(cls, name: str, size: int = 10**5, gamma: float = 0.0, seed: int = 1):
        data = sample_dataset(name, size, 0.0, seed)
        rng = np.random.default_rng([seed, 1])
        noise = gamma * sigma_hat(name) * rng.standard_normal(size) if gamma > 0 else 0.0
        return cls(data.X, data.y + noise, data.y)


@dataclass(frozen=True)
class RiskEstimate:
    risk: float
    excess: float


class RiskEvaluator:
    """Test risks of many networks on one test sample, sharing features across models."""

    def __init__(self, sample: TestSample):
        self.sample = sample
        self._feats: dict[int, tuple] = {}

    def features(self, fm):
        hit = self._feats.get(id(fm))
        if hit is None or hit[0] is not fm:
            hit = (fm, fm.features(self.sample.X))
            self._feats[id(fm)] = hit
        return hit[1]

    def clear(self) -> None:
        self._feats.clear()

    def __call__(self, net, fm) -> RiskEstimate:
        pred = evaluate_features(net, self.features(fm))
        return RiskEstimate(float(np.mean((self.sample.y - pred) ** 2)),
                            float(np.mean((self.sample.f - pred) ** 2)))


def test_risk(net, fm, name: str, test_seed: int = 1, *, size: int = 10**5,
              gamma: float = 0.0) -> RiskEstimate:
    """Monte-Carlo risk E(Y - f(X))^2 and excess risk ||f - f*||^2 on fresh points."""
    return RiskEvaluator(TestSample.draw(name, size, gamma, test_seed))(net, fm)


test_risk.__test__ = False  # not a pytest test
TestSample.__test__ = False
