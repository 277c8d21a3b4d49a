"""Plain forward primitives on float64 numpy arrays.

These are the reference kernels. The differentiable versions in
:mod:`dragonet.numerics.autodiff` call into them so both paths share
identical forward arithmetic.
"""
from __future__ import annotations

import numpy as np

from dragonet.errors import NumericError, ShapeError

SCORE_FLOOR = 1e-12


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what}: non-finite input")


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def softmax_kernel(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax over the last axis with max subtraction.

    ``mask`` is broadcastable to ``x``; True entries are excluded and get
    weight exactly 0. A fully masked row comes out as all zeros.
    """
    if mask is None:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    keep = ~np.broadcast_to(mask, x.shape)
    shifted = np.where(keep, x, -np.inf)
    top = shifted.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(keep, np.exp(np.where(keep, x - top, 0.0)), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return e / np.where(total > 0, total, 1.0)


def softmax_rows(a) -> np.ndarray:
    a = as_matrix(a)
    _check_finite(a, "softmax_rows")
    return softmax_kernel(a)


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def elementwise(a, kind: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    _check_finite(a, f"elementwise[{kind}]")
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def layer_norm_kernel(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Normalize over the last axis; also returns (xhat, inv_std) for backward."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gamma + beta, xhat, inv_std


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    if gamma.shape[-1:] != x.shape[-1:] or beta.shape[-1:] != x.shape[-1:]:
        raise ShapeError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    return layer_norm_kernel(x, gamma, beta, eps)[0]


def cross_entropy(scores, target: int) -> float:
    """Categorical cross-entropy of one normalized score row against a class index."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= target < scores.size:
        raise IndexError(f"cross_entropy: target {target} out of range for {scores.size} classes")
    return float(-np.log(max(scores[target], SCORE_FLOOR)))
