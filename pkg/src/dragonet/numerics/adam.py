from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dragonet.errors import ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update. Returns new parameter arrays; moments update in ``state``."""
    for name, p in params.items():
        if name not in grads or grads[name].shape != p.shape:
            got = None if name not in grads else grads[name].shape
            raise ShapeError(f"adam_step: gradient for {name!r} has shape {got}, parameter {p.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr / (1.0 - b1**t)
    bc2 = 1.0 - b2**t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ShapeError(f"adam_step: moment for {name!r} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        out[name] = p - step_size * m / (np.sqrt(v / bc2) + state.eps)
    return out
