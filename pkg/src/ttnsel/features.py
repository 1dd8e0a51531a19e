"""Tensor-product feature maps.

A feature map turns an input sample ``X`` of shape ``(n, d)`` into one feature matrix
per tensor variable (``(n, N_nu)``), in the variable order used by dimension trees.
Bases are normalized so that ``sum_i ||phi_i||_{p,mu}^p = 1``: for p=2 an orthonormal
family rescaled by ``N**-0.5``, for p=inf a family with unit sup-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e, legendre


class DomainError(ValueError):
    pass


def polynomial_feature(x, family: str = "legendre", N: int = 1, *,
                       domain: tuple[float, float] = (0.0, 1.0), p: float = 2) -> np.ndarray:
    """First ``N`` orthonormal polynomials at ``x``, normalized for the L^p(mu) setting.

    Legendre is orthonormal for the uniform probability measure on ``domain``; Hermite
    for the Gaussian with ``domain = (mean, std)``. Scalar ``x`` gives a vector,
    array ``x`` a ``(len(x), N)`` matrix.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if family == "legendre":
        a, b = domain
        if np.any(arr < a) or np.any(arr > b):
            raise DomainError(f"x outside [{a}, {b}]")
        t = 2.0 * (arr - a) / (b - a) - 1.0
        vals = legendre.legvander(t, N - 1)
        if p == 2:
            vals = vals * np.sqrt(2.0 * np.arange(N) + 1.0) / math.sqrt(N)
        elif p != np.inf:
            raise DomainError(f"unsupported normalization p={p}")
    elif family == "hermite":
        if p != 2:
            raise DomainError("Hermite features are unbounded; only p=2 is supported")
        mean, std = domain
        t = (arr - mean) / std
        vals = hermite_e.hermevander(t, N - 1)
        norms = np.sqrt([math.factorial(k) for k in range(N)], dtype=float)
        vals = vals / norms / math.sqrt(N)
    else:
        raise DomainError(f"unsupported measure/family {family!r}")
    return vals[0] if scalar else vals


def tensorize_point(x, b: int = 2, L: int = 1):
    """Base-``b`` digits (i_1..i_L) and remainder ``xbar`` with x = sum i_k b^-k + b^-L xbar.

    Vectorized: an array input gives ``digits`` of shape ``(n, L)``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise DomainError("x must lie in [0, 1)")
    scaled = arr * float(b) ** L
    i = np.floor(scaled).astype(np.int64)
    xbar = scaled - i
    powers = b ** np.arange(L - 1, -1, -1, dtype=np.int64)
    digits = (i[..., None] // powers) % b
    if arr.ndim == 0:
        return tuple(int(v) for v in digits), float(xbar)
    return digits, xbar


def detensorize_point(digits, xbar, b: int = 2, L: int = 1):
    """Inverse of :func:`tensorize_point`."""
    digits = np.asarray(digits, dtype=np.int64)
    if digits.shape[-1:] != (L,) and L > 0:
        raise DomainError(f"expected {L} digits")
    if np.any(digits < 0) or np.any(digits >= b):
        raise DomainError(f"digit outside {{0..{b - 1}}}")
    xbar = np.asarray(xbar, dtype=float)
    if np.any(xbar < 0) or np.any(xbar >= 1):
        raise DomainError("xbar must lie in [0, 1)")
    if L == 0:
        out = xbar
    else:
        powers = b ** np.arange(L - 1, -1, -1, dtype=np.int64)
        i = (digits * powers).sum(axis=-1)
        out = (i + xbar) / float(b) ** L
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class UnivariateBasis:
    """One tensor variable's basis: ``poly`` (Legendre/Hermite) or ``onehot`` (digits)."""

    kind: str
    N: int
    family: str = "legendre"
    domain: tuple[float, float] = (0.0, 1.0)
    p: float = 2

    def __call__(self, x) -> np.ndarray:
        if self.kind == "onehot":
            idx = np.asarray(x, dtype=np.int64)
            if np.any(idx < 0) or np.any(idx >= self.N):
                raise DomainError("digit out of range")
            return np.eye(self.N)[idx]
        return polynomial_feature(x, self.family, self.N, domain=self.domain, p=self.p)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N, "family": self.family,
                "domain": list(self.domain), "p": "inf" if self.p == np.inf else self.p}


class FeatureMap:
    """Product feature map over the raw input variables."""

    kind = "product"

    def __init__(self, bases: list[UnivariateBasis]):
        self.bases = list(bases)

    @property
    def d(self) -> int:
        """Number of raw input variables."""
        return len(self.bases)

    @property
    def dims(self) -> tuple[int, ...]:
        """Feature dimension N_nu of each tensor variable."""
        return tuple(b.N for b in self.bases)

    @property
    def n_vars(self) -> int:
        return len(self.dims)

    def features(self, X) -> list[np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DomainError(f"expected {self.d} input columns, got {X.shape[1]}")
        return [b(X[:, k]) for k, b in enumerate(self.bases)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bases": [b.to_dict() for b in self.bases]}


class TensorizedFeatureMap(FeatureMap):
    """Tensorization at resolution ``L`` in base ``b`` with polynomial tails of degree ``k``.

    Tensor variables are ordered i_1^1..i_L^1, ..., i_1^d..i_L^d, xbar_1..xbar_d, giving
    ``d*(L+1)`` variables of sizes ``b`` (digits) and ``k+1`` (tails).
    """

    kind = "tensorized"

    def __init__(self, b: int = 2, L: int = 1, d: int = 1, k: int = 0, p: float = 2):
        if b < 2:
            raise DomainError("base must be >= 2")
        self.b, self.L, self._d, self.k, self.p = b, L, d, k, p
        self.digit_basis = UnivariateBasis("onehot", b)
        self.tail_basis = UnivariateBasis("poly", k + 1, "legendre", (0.0, 1.0), p)

    @property
    def d(self) -> int:
        return self._d

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.b,) * (self.L * self._d) + (self.k + 1,) * self._d

    def features(self, X) -> list[np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self._d:
            raise DomainError(f"expected {self._d} input columns, got {X.shape[1]}")
        digit_feats, tails = [], []
        eye = np.eye(self.b)
        for nu in range(self._d):
            digits, xbar = tensorize_point(X[:, nu], self.b, self.L)
            digit_feats.extend(eye[digits[:, j]] for j in range(self.L))
            tails.append(self.tail_basis(xbar))
        return digit_feats + tails

    def to_dict(self) -> dict:
        return {"kind": self.kind, "b": self.b, "L": self.L, "d": self._d, "k": self.k,
                "p": "inf" if self.p == np.inf else self.p}


def tensorized_feature(x, fmap: TensorizedFeatureMap) -> list[np.ndarray]:
    """Factorized feature of one point: one-hot digit vectors then the tail vectors."""
    return [f[0] for f in fmap.features(np.atleast_2d(np.asarray(x, dtype=float)))]


def polynomial_map(d: int, N: int | list[int], family: str | list[str] = "legendre",
                   domain=(0.0, 1.0), p: float = 2) -> FeatureMap:
    """Product of polynomial bases; scalar arguments are broadcast over the d variables."""
    Ns = [N] * d if isinstance(N, int) else list(N)
    fams = [family] * d if isinstance(family, str) else list(family)
    doms = [domain] * d if not isinstance(domain[0], (list, tuple)) else list(domain)
    return FeatureMap([UnivariateBasis("poly", n, f, tuple(dm), p)
                       for n, f, dm in zip(Ns, fams, doms)])


def feature_map_from_dict(spec: dict) -> FeatureMap:
    p = spec.get("p", 2)
    p = np.inf if p in ("inf", float("inf")) else p
    if spec["kind"] == "tensorized":
        return TensorizedFeatureMap(spec.get("b", 2), spec["L"], spec.get("d", 1),
                                    spec.get("k", 0), p)
    bases = []
    for b in spec["bases"]:
        bp = b.get("p", 2)
        bp = np.inf if bp in ("inf", float("inf")) else bp
        bases.append(UnivariateBasis(b["kind"], b["N"], b.get("family", "legendre"),
                                     tuple(b.get("domain", (0.0, 1.0))), bp))
    return FeatureMap(bases)
