"""Small dense-tensor kernels: mode contraction, matricization, truncated SVD, operator norms.

Dense tensors are plain row-major ``numpy`` arrays. Sparsity patterns are boolean
masks of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnsupportedNorm(ValueError):
    pass


def contract_mode(a: np.ndarray, mode: int, v: np.ndarray) -> np.ndarray:
    """Contract mode ``mode`` of ``a`` with vector ``v``; result has order one less."""
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    if not 0 <= mode < a.ndim:
        raise ValueError(f"mode {mode} out of range for order {a.ndim}")
    if v.shape != (a.shape[mode],):
        raise ValueError(f"vector length {v.shape} != mode size {a.shape[mode]}")
    return np.tensordot(a, v, axes=([mode], [0]))


def matricize(a: np.ndarray, row_modes) -> np.ndarray:
    """Rows indexed by ``row_modes`` (row-major, in the given order), columns by the rest."""
    a = np.asarray(a)
    rows = list(row_modes)
    cols = [m for m in range(a.ndim) if m not in rows]
    nrows = math.prod(a.shape[m] for m in rows)
    return np.transpose(a, rows + cols).reshape(nrows, -1)


def unmatricize(m: np.ndarray, shape, row_modes) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    rows = list(row_modes)
    cols = [k for k in range(len(shape)) if k not in rows]
    perm = rows + cols
    t = np.asarray(m).reshape([shape[k] for k in perm])
    return np.transpose(t, np.argsort(perm))


@dataclass
class SVDResult:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank: int

    @property
    def approx(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


def truncated_svd(m: np.ndarray, rank: int | None = None, rel_tol: float = 0.0) -> SVDResult:
    """Best approximation of rank ``min(rank, numerical rank at rel_tol)`` in Frobenius norm.

    ``rel_tol`` is relative to the largest singular value. ``V`` has the right singular
    vectors as columns.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite entries")
    U, s, Vt = np.linalg.svd(m, full_matrices=False)
    numerical = int(np.sum(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
    r = numerical if rank is None else min(rank, numerical)
    return SVDResult(U[:, :r], s[:r], Vt[:r].T, r)


def _hopm_lower_bound(a: np.ndarray, restarts: int, iters: int, tol: float, seed: int) -> float:
    """Multilinear 2-norm of ``a`` (mode 0 = output) by higher-order power iteration."""
    rng = np.random.default_rng(seed)
    m = a.ndim - 1
    best = 0.0
    for _ in range(restarts):
        zs = [rng.standard_normal(a.shape[k + 1]) for k in range(m)]
        zs = [z / np.linalg.norm(z) for z in zs]
        prev = -1.0
        for _ in range(iters):
            for k in range(m):
                # contract every input mode except k, then with the output direction
                t = a
                for j in reversed(range(m)):
                    if j != k:
                        t = np.tensordot(t, zs[j], axes=([j + 1], [0]))
                # t has shape (out, n_k); best z_k is its top right singular vector
                _, sv, vt = np.linalg.svd(t, full_matrices=False)
                if sv[0] == 0:
                    break
                zs[k] = vt[0]
            t = a
            for j in reversed(range(m)):
                t = np.tensordot(t, zs[j], axes=([j + 1], [0]))
            val = float(np.linalg.norm(t))
            if abs(val - prev) <= tol * max(val, 1.0):
                prev = val
                break
            prev = val
        best = max(best, prev)
    return best


def operator_p_norm(a: np.ndarray, out_mode: int = 0, p: float = 2, *,
                    restarts: int = 20, iters: int = 200, tol: float = 1e-10,
                    seed: int = 0) -> float:
    """Operator norm of ``a`` seen as a multilinear map into the ``out_mode`` space.

    Order 2: exact (spectral norm for p=2, max abs row sum for p=inf). Order >= 3 with
    p=2: a lower bound from power iteration (max over restarts). Other cases raise.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), out_mode, 0)
    if a.ndim < 2:
        raise UnsupportedNorm("operator norm needs order >= 2")
    if a.ndim == 2:
        if p == 2:
            return float(np.linalg.norm(a, 2))
        if p == np.inf:
            return float(np.abs(a).sum(axis=1).max())
        raise UnsupportedNorm(f"p={p} not supported")
    if p != 2:
        raise UnsupportedNorm(f"order {a.ndim} with p={p} not supported")
    return _hopm_lower_bound(a, restarts, iters, tol, seed)


def norm_upper_bound(a: np.ndarray, out_mode: int = 0, p: float = 2) -> float:
    """Guaranteed upper bound on :func:`operator_p_norm` for any order.

    p=2: the Frobenius norm (Cauchy-Schwarz on the flattened map). p=inf: the max over
    outputs of the absolute sum over inputs. Exact for p=inf at order 2.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), out_mode, 0)
    if p == 2:
        return float(np.linalg.norm(a))
    if p == np.inf:
        return float(np.abs(a.reshape(a.shape[0], -1)).sum(axis=1).max())
    raise UnsupportedNorm(f"p={p} not supported")


def crude_upper_bound(a: np.ndarray) -> float:
    """sqrt(prod of mode sizes) times the Frobenius norm; valid for every p >= 1."""
    a = np.asarray(a, dtype=float)
    return math.sqrt(a.size) * float(np.linalg.norm(a))


def sparsity_mask(shape, indices) -> np.ndarray:
    """Boolean mask from an iterable of multi-indices; checks bounds."""
    mask = np.zeros(shape, dtype=bool)
    for idx in indices:
        idx = tuple(idx)
        if len(idx) != len(shape) or any(not 0 <= i < s for i, s in zip(idx, shape)):
            raise IndexError(f"index {idx} outside shape {tuple(shape)}")
        mask[idx] = True
    return mask
