"""Tanh MLPs with hand-written backward passes.

Parameters live in flat dicts ``{"W0", "b0", "W1", "b1", ...}`` with
``W`` of shape ``(in, out)`` so a layer is ``x @ W + b``. Every hidden layer
uses tanh; the last layer is linear.
"""

from __future__ import annotations

import numpy as np

MlpParams = dict


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    """Orthogonal init scaled by ``gain`` (orthonormal rows or columns)."""
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_mlp(sizes, rng: np.random.Generator, hidden_gain: float = np.sqrt(2.0),
             out_gain: float = 1.0) -> MlpParams:
    params = {}
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        gain = out_gain if i == n_layers - 1 else hidden_gain
        params[f"W{i}"] = orthogonal(rng, sizes[i], sizes[i + 1], gain)
        params[f"b{i}"] = np.zeros(sizes[i + 1])
    return params


def n_layers(params: MlpParams) -> int:
    return sum(1 for k in params if k.startswith("W"))


def layer_sizes(params: MlpParams) -> list[int]:
    n = n_layers(params)
    return [params["W0"].shape[0]] + [params[f"W{i}"].shape[1] for i in range(n)]


def mlp_forward(params: MlpParams, x):
    """Returns ``(output, cache)``; ``cache`` holds every layer input."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params["W0"].shape[0]:
        raise ValueError(f"input width {x.shape[-1]} does not match network input "
                         f"{params['W0'].shape[0]}")
    n = n_layers(params)
    cache = [x]
    h = x
    for i in range(n):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        h = np.tanh(z) if i < n - 1 else z
        cache.append(h)
    return h, cache


def mlp_backward(params: MlpParams, cache, grad_out) -> MlpParams:
    """Gradients of a scalar loss given ``d loss / d output``."""
    n = n_layers(params)
    g = np.asarray(grad_out, dtype=float)
    grads = {}
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * (1.0 - cache[i + 1] ** 2)  # tanh'
        h_in = cache[i]
        grads[f"W{i}"] = h_in.reshape(-1, h_in.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        grads[f"b{i}"] = g.reshape(-1, g.shape[-1]).sum(axis=0)
        if i > 0:
            g = g @ params[f"W{i}"].T
    return grads


def mlp_input_grad(params: MlpParams, cache, grad_out) -> np.ndarray:
    """``d loss / d input``; used by tests and diagnostics."""
    n = n_layers(params)
    g = np.asarray(grad_out, dtype=float)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * (1.0 - cache[i + 1] ** 2)
        g = g @ params[f"W{i}"].T
    return g
