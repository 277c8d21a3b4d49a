"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from dragonet.errors import NumericError
from dragonet.numerics.autodiff import Tape, value


def numeric_gradient(f: Callable, params: Sequence[np.ndarray], eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences of the scalar ``f(*params)`` evaluated on plain arrays."""
    work = [np.array(p, dtype=np.float64) for p in params]
    grads = []
    for p in work:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(value(f(*work)))
            flat[i] = orig - eps
            down = float(value(f(*work)))
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("grad_check: non-finite function value")
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def analytic_gradient(f: Callable, params: Sequence[np.ndarray]) -> list[np.ndarray]:
    tape = Tape()
    leaves = [tape.leaf(p) for p in params]
    out = f(*leaves)
    return tape.gradients(out, leaves)


def relative_error(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def grad_check(f: Callable, params: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape and central-difference gradients.

    ``f`` maps one argument per entry of ``params`` to a scalar; it must be
    written with :mod:`autodiff` ops so it runs on both ``Var`` and arrays.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"grad_check: eps={eps} outside [1e-7, 1e-4]")
    return relative_error(analytic_gradient(f, params), numeric_gradient(f, params, eps))
