"""Minimal reverse-mode differentiation over numpy arrays.

Every differentiable op accepts either :class:`Var` or plain arrays. When
no argument is a ``Var`` the op returns a plain ``ndarray`` and records
nothing, so the same model code serves both training and inference.

    tape = Tape()
    w = tape.leaf(np.ones((3, 2)))
    loss = sum_all(relu(matmul(x, w)))
    (gw,) = tape.gradients(loss, [w])
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from dragonet.errors import ShapeError
from dragonet.numerics import ops

Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Var:
    __slots__ = ("value", "tape", "index", "parents", "backward")

    def __init__(self, value, tape, index, parents=(), backward=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.parents = parents
        self.backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"


class Tape:
    """Ordered record of primitive applications.

    Backward replays the record in strict reverse creation order, which is
    a valid topological order since a node can only depend on earlier ones.
    """

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value) -> Var:
        return self._push(np.asarray(value, dtype=np.float64), (), None)

    def _push(self, value, parents, backward) -> Var:
        v = Var(value, self, len(self.nodes), parents, backward)
        self.nodes.append(v)
        return v

    def gradients(self, out: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """d(out)/d(w) for each w in ``wrt``; unreached leaves get zeros."""
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        if out.value.size != 1:
            raise ShapeError(f"gradients: output must be scalar, got shape {out.value.shape}")
        grads: dict[int, np.ndarray] = {out.index: np.ones_like(out.value)}
        wanted = {w.index for w in wrt}
        for node in reversed(self.nodes[: out.index + 1]):
            g = grads.get(node.index)
            if g is None or node.backward is None:
                continue
            if node.index not in wanted:
                del grads[node.index]
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None or not isinstance(parent, Var):
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else prev + pg
        return [grads.get(w.index, np.zeros_like(w.value)) for w in wrt]


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _record(out: np.ndarray, parents: tuple, backward: Backward):
    for p in parents:
        if isinstance(p, Var):
            return p.tape._push(out, parents, backward)
    return out


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    return _record(out, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(g, bv.shape)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    return _record(out, (a, b), lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def scale(a, c: float):
    return _record(value(a) * c, (a,), lambda g: (g * c,))


def matmul(a, b):
    """Batched matrix product over the last two axes (numpy semantics)."""
    av, bv = value(a), value(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    out = av @ bv

    def backward(g):
        ga = gb = None
        if isinstance(a, Var):
            ga = unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        if isinstance(b, Var):
            if bv.ndim == 2:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _record(out, (a, b), backward)


def reshape(a, shape):
    av = value(a)
    return _record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def transpose(a, axes):
    inverse = np.argsort(axes)
    return _record(np.transpose(value(a), axes), (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, key):
    av = value(a)

    def backward(g):
        ga = np.zeros_like(av)
        ga[key] = g
        return (ga,)

    return _record(av[key], (a,), backward)


def concat(parts: Sequence, axis: int = -1):
    vals = [value(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _record(out, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def sum_all(a):
    av = value(a)
    return _record(np.asarray(av.sum()), (a,), lambda g: (np.broadcast_to(g, av.shape).copy(),))


def mean_all(a):
    return scale(sum_all(a), 1.0 / value(a).size)


# -- activations & normalization ----------------------------------------


def relu(a):
    av = value(a)
    return _record(ops.relu(av), (a,), lambda g: (g * (av > 0),))


def sigmoid(a):
    s = ops.sigmoid(value(a))
    return _record(s, (a,), lambda g: (g * s * (1.0 - s),))


def softmax(a, mask: np.ndarray | None = None):
    """Softmax over the last axis; masked (True) positions get exactly 0."""
    y = ops.softmax_kernel(value(a), mask)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, (a,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5):
    xv, gv, bv = value(x), value(gamma), value(beta)
    out, xhat, inv_std = ops.layer_norm_kernel(xv, gv, bv, eps)

    def backward(g):
        dxhat = g * gv
        dx = inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, unbroadcast(g * xhat, gv.shape), unbroadcast(g, bv.shape)

    return _record(out, (x, gamma, beta), backward)


def normalize_sum(a):
    """Divide each last-axis row by its sum (inputs must be positive)."""
    av = value(a)
    total = av.sum(axis=-1, keepdims=True)
    out = av / total

    def backward(g):
        return ((g - (g * out).sum(axis=-1, keepdims=True)) / total,)

    return _record(out, (a,), backward)


# -- indexing & pooling -------------------------------------------------


def embed(table, ids: np.ndarray):
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    tv = value(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
        raise IndexError(f"embed: token id out of range for table with {tv.shape[0]} rows")

    def backward(g):
        gt = np.zeros_like(tv)
        np.add.at(gt, ids.ravel(), g.reshape(-1, tv.shape[1]))
        return (gt,)

    return _record(tv[ids], (table,), backward)


def masked_mean(x, keep: np.ndarray):
    """Mean over axis -2 of ``x`` (..., m, d) counting only rows where ``keep``.

    Rows with no kept positions pool to the zero vector.
    """
    xv = value(x)
    w = keep.astype(np.float64)
    count = np.maximum(w.sum(axis=-1, keepdims=True), 1.0)
    w = (w / count)[..., None]
    return _record((xv * w).sum(axis=-2), (x,), lambda g: (g[..., None, :] * w,))


def nll(probs, targets: np.ndarray, floor: float = ops.SCORE_FLOOR):
    """Batch-mean of ``-log(max(p[target], floor))`` over rows of ``probs``."""
    pv = value(probs)
    targets = np.asarray(targets)
    if targets.size and (targets.min() < 0 or targets.max() >= pv.shape[-1]):
        raise IndexError(f"nll: target out of range for {pv.shape[-1]} classes")
    rows = np.arange(pv.shape[0])
    picked = pv[rows, targets]
    clamped = np.maximum(picked, floor)
    n = pv.shape[0]

    def backward(g):
        gp = np.zeros_like(pv)
        gp[rows, targets] = np.where(picked > floor, -g / (n * clamped), 0.0)
        return (gp,)

    return _record(np.asarray(-np.log(clamped).mean()), (probs,), backward)
