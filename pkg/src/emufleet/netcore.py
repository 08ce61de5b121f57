"""Small numeric kernels: valid convolution, pooling, activations, dense layer,
and a central-difference gradient oracle.

Grids are plain 2-D float ``np.ndarray`` objects. Convolution follows the
cross-correlation convention (the kernel is not flipped) with stride 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import DomainError, NumericError, ShapeError


def as_grid(values, name="grid") -> np.ndarray:
    g = np.asarray(values, dtype=float)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError(f"{name} contains non-finite values", name)
    return g


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    LINEAR = "linear"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self is Activation.SIGMOID:
            return expit(x)
        if self is Activation.TANH:
            return np.tanh(x)
        if self is Activation.RELU:
            return np.maximum(x, 0.0)
        return x.copy()

    def derivative(self, x):
        """Derivative with respect to the pre-activation ``x``. relu'(0) is 0."""
        x = np.asarray(x, dtype=float)
        if self is Activation.SIGMOID:
            y = self(x)
            return y * (1.0 - y)
        if self is Activation.TANH:
            return 1.0 - np.tanh(x) ** 2
        if self is Activation.RELU:
            return (x > 0).astype(float)
        return np.ones_like(x)

    def derivative_from_output(self, y):
        """Same derivative expressed through the activation output ``y = f(x)``."""
        y = np.asarray(y, dtype=float)
        if self is Activation.SIGMOID:
            return y * (1.0 - y)
        if self is Activation.TANH:
            return 1.0 - y**2
        if self is Activation.RELU:
            return (y > 0).astype(float)
        return np.ones_like(y)


class PoolMode(str, Enum):
    AVERAGE = "average"
    MAX = "max"


@dataclass(frozen=True)
class PoolSpec:
    window: int = 2
    mode: PoolMode = PoolMode.AVERAGE
    bias: float = 0.0

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise DomainError(f"pool window must be a positive integer, got {self.window}")
        object.__setattr__(self, "mode", PoolMode(self.mode))


def conv2d_valid(x, kernel, bias=0.0) -> np.ndarray:
    """Stride-1 valid cross-correlation: an r x r input and c x c kernel give (r-c+1) x (r-c+1)."""
    x = as_grid(x, "input")
    k = as_grid(kernel, "kernel")
    kh, kw = k.shape
    oh, ow = x.shape[0] - kh + 1, x.shape[1] - kw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {k.shape} larger than input {x.shape}")
    out = np.empty((oh, ow))
    for i in range(oh):
        for j in range(ow):
            out[i, j] = np.sum(x[i : i + kh, j : j + kw] * k)
    return out + bias


def conv2d_backward(x, kernel, grad_out):
    """Gradients of a valid cross-correlation w.r.t. input, kernel and bias."""
    x = as_grid(x, "input")
    k = as_grid(kernel, "kernel")
    g = as_grid(grad_out, "grad_out")
    kh, kw = k.shape
    if g.shape != (x.shape[0] - kh + 1, x.shape[1] - kw + 1):
        raise ShapeError(f"grad_out shape {g.shape} does not match conv output")
    grad_k = conv2d_valid(x, g)
    grad_x = np.zeros_like(x)
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            grad_x[i : i + kh, j : j + kw] += g[i, j] * k
    return grad_x, grad_k, float(g.sum())


def apply_activation(grid, f: Activation | str) -> np.ndarray:
    return Activation(f)(as_grid(grid))


def _check_tiling(shape, window):
    if shape[0] % window or shape[1] % window:
        raise ShapeError(f"pool window {window} does not tile a {shape[0]}x{shape[1]} map")


def _tiles(grid, window):
    h, w = grid.shape
    return grid.reshape(h // window, window, w // window, window).swapaxes(1, 2)


def pool(grid, spec: PoolSpec = PoolSpec()) -> np.ndarray:
    """Non-overlapping pooling; each window becomes its mean (or max) plus ``spec.bias``."""
    g = as_grid(grid)
    _check_tiling(g.shape, spec.window)
    tiles = _tiles(g, spec.window)
    if spec.mode is PoolMode.AVERAGE:
        out = tiles.mean(axis=(2, 3))
    else:
        out = tiles.max(axis=(2, 3))
    return out + spec.bias


def pool_backward(grid, grad_out, spec: PoolSpec = PoolSpec()) -> np.ndarray:
    """Average mode spreads each output gradient evenly over its window;
    max mode routes it to the first maximal element."""
    g = as_grid(grid)
    _check_tiling(g.shape, spec.window)
    w = spec.window
    go = np.asarray(grad_out, dtype=float)
    if go.shape != (g.shape[0] // w, g.shape[1] // w):
        raise ShapeError(f"grad_out shape {go.shape} does not match pooled shape")
    if spec.mode is PoolMode.AVERAGE:
        return np.kron(go, np.ones((w, w))) / (w * w)
    out = np.zeros_like(g)
    for i in range(go.shape[0]):
        for j in range(go.shape[1]):
            tile = g[i * w : (i + 1) * w, j * w : (j + 1) * w]
            a, b = np.unravel_index(np.argmax(tile), tile.shape)
            out[i * w + a, j * w + b] = go[i, j]
    return out


def dense_forward(z, weights, bias, transfer: Activation | str = Activation.LINEAR) -> float:
    z = np.asarray(z, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if z.shape != w.shape:
        raise ShapeError(f"input length {z.size} != weight length {w.size}")
    return float(Activation(transfer)(np.float64(w @ z + bias)))


def finite_diff_gradient(loss: Callable[[np.ndarray], float], params, eps=1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar ``loss`` at ``params``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    p = np.array(params, dtype=float).ravel()
    grad = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + eps
        up = float(loss(p.copy()))
        p[i] = orig - eps
        down = float(loss(p.copy()))
        p[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"loss is not finite around coordinate {i}", f"param[{i}]")
        grad[i] = (up - down) / (2 * eps)
    return grad
