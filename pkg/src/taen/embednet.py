"""The metric-learning embedding function.

A small fully connected network maps each pooled sub-action vector to a
unit-norm point in the embedding space: affine + ReLU for hidden layers,
affine only for the output layer, then division by the (eps-guarded)
Euclidean norm. The normalization is part of the function and is
differentiated in backward.
"""

from dataclasses import dataclass

import numpy as np

from taen.errors import ConfigError, DataError
from taen.kernels import normalize_rows, normalize_rows_backward


@dataclass
class MlpParams:
    """Layer parameters; weights have shape (out, in), biases (out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def tensors(self):
        """All parameter arrays in a fixed order (for the optimizer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self):
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class Trajectory:
    """An embedded video: one unit-norm point per sub-action, shape (a, e)."""

    points: np.ndarray
    video_id: str = ""


def init_params(dims, seed):
    """Glorot-uniform weights, zero biases, deterministic given seed.

    Weight entries are uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
    """
    if len(dims) < 2:
        raise ConfigError(f"need at least input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ConfigError(f"layer dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def forward_rows(params, rows):
    """Embed a stack of pooled sub-action rows; returns (points, cache).

    Each row passes independently through the layers; the cache retains
    per-layer inputs and pre-activations for backward.
    """
    x = np.ascontiguousarray(rows, dtype=np.float64)
    if x.shape[1] != params.weights[0].shape[1]:
        raise DataError(
            f"input dim {x.shape[1]} does not match network input "
            f"{params.weights[0].shape[1]}"
        )
    n_layers = len(params.weights)
    inputs, preacts = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(x)
        z = x @ w.T + b
        preacts.append(z)
        x = np.maximum(z, 0.0) if i < n_layers - 1 else z
    points, norms = normalize_rows(np.ascontiguousarray(x))
    cache = {"inputs": inputs, "preacts": preacts, "points": points, "norms": norms}
    return points, cache


def forward(params, pooled):
    """Embed a PooledVideo into a Trajectory (plus cache for backward)."""
    points, cache = forward_rows(params, pooled.segments)
    return Trajectory(points=points, video_id=pooled.video_id), cache


def backward(params, cache, grad_points):
    """Exact gradients of a scalar loss through forward.

    `grad_points` is the loss gradient w.r.t. the trajectory points.
    Returns (weight grads, bias grads, grad w.r.t. the input rows).
    ReLU uses subgradient 0 at exactly 0.
    """
    g = normalize_rows_backward(
        cache["points"], cache["norms"], np.ascontiguousarray(grad_points, dtype=np.float64)
    )
    n_layers = len(params.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            g = g * (cache["preacts"][i] > 0.0)
        grad_w[i] = g.T @ cache["inputs"][i]
        grad_b[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    return grad_w, grad_b, g
