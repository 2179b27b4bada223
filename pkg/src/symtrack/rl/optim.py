"""Adam and gradient-norm clipping over dicts of arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5


def adam_init(params: dict, **kw) -> AdamState:
    return AdamState({k: np.zeros_like(p) for k, p in params.items()},
                     {k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """Returns new params and a new state; inputs are not modified."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m, v, out = {}, {}, {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, p in params.items():
        g = grads[k]
        m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        out[k] = p - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + state.eps)
    return out, AdamState(m, v, t, b1, b2, state.eps)


def global_norm(grads: dict, keys=None) -> float:
    keys = grads.keys() if keys is None else keys
    return float(np.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in keys)))


def clip_by_global_norm(grads: dict, max_norm: float, keys=None):
    """Scale ``grads[keys]`` so their joint norm is at most ``max_norm``."""
    keys = list(grads.keys() if keys is None else keys)
    norm = global_norm(grads, keys)
    out = dict(grads)
    if norm > max_norm > 0:
        s = max_norm / norm
        for k in keys:
            out[k] = grads[k] * s
    return out, norm
