"""Differentiable layer operations with explicit forward/backward passes.

Each op caches what its backward pass needs during forward; that cache is
confined to one evaluation worker. Weight decay follows the kernel-regularizer
convention: the loss gains ``decay * sum(w**2)`` per op, so the weight
gradient gains ``2 * decay * w``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..layertree import ActivationKind, PaddingKind

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
LEAKY_SLOPE = 0.3


def activation_forward(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.RELU:
        return np.maximum(x, 0)
    if kind is ActivationKind.LEAKY_RELU:
        return np.where(x > 0, x, LEAKY_SLOPE * x)
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-x))
    if kind is ActivationKind.TANH:
        return np.tanh(x)
    if kind is ActivationKind.ELU:
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if kind is ActivationKind.SELU:
        return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    if kind is ActivationKind.SOFTMAX:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {kind}")


def activation_backward(kind: ActivationKind, x: np.ndarray, y: np.ndarray,
                        gy: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.RELU:
        return gy * (x > 0)
    if kind is ActivationKind.LEAKY_RELU:
        return gy * np.where(x > 0, 1.0, LEAKY_SLOPE)
    if kind is ActivationKind.SIGMOID:
        return gy * y * (1.0 - y)
    if kind is ActivationKind.TANH:
        return gy * (1.0 - y * y)
    if kind is ActivationKind.ELU:
        return gy * np.where(x > 0, 1.0, y + 1.0)
    if kind is ActivationKind.SELU:
        return gy * np.where(x > 0, SELU_SCALE,
                             SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
    if kind is ActivationKind.SOFTMAX:
        dot = (gy * y).sum(axis=-1, keepdims=True)
        return y * (gy - dot)
    raise ValueError(f"unknown activation {kind}")


class Op:
    """Base: parameterless identity-ish operation interface."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.decay: float = 0.0
        self.state: dict[str, np.ndarray] = {}  # non-trainable (BatchNorm running stats)

    def decay_loss(self) -> float:
        if self.decay and "w" in self.params:
            w = self.params["w"]
            return float(self.decay * (w.astype(np.float64) ** 2).sum())
        return 0.0

    def forward(self, xs: list[np.ndarray], training: bool, rng) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError


class ActivationOp(Op):
    def __init__(self, kind: ActivationKind):
        super().__init__()
        self.kind = kind

    def forward(self, xs, training, rng):
        x = xs[0]
        y = activation_forward(self.kind, x)
        self._cache = (x, y)
        return y

    def backward(self, gy):
        x, y = self._cache
        return [activation_backward(self.kind, x, y, gy)]


class DenseOp(Op):
    def __init__(self, w: np.ndarray, b: np.ndarray, decay: float = 0.0):
        super().__init__()
        self.params = {"w": w, "b": b}
        self.decay = decay

    def forward(self, xs, training, rng):
        x = xs[0]
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, gy):
        w = self.params["w"]
        gw = self._x.T @ gy
        if self.decay:
            gw = gw + 2.0 * self.decay * w
        self.grads = {"w": gw, "b": gy.sum(axis=0)}
        return [gy @ w.T]


def conv_spatial_geometry(n: int, k: int, s: int, padding: PaddingKind):
    """Output length and (before, after) padding along one spatial axis."""
    if padding is PaddingKind.SAME:
        out = -(-n // s)
        total = max((out - 1) * s + k - n, 0)
        before = total // 2
        return out, (before, total - before)
    out = (n - k) // s + 1
    if out < 1:
        raise ValueError(f"window {k} with stride {s} does not fit length {n}")
    return out, (0, 0)


class Conv2DOp(Op):
    def __init__(self, w: np.ndarray, b: np.ndarray, stride: int,
                 pads: tuple, out_hw: tuple, decay: float = 0.0):
        super().__init__()
        self.params = {"w": w, "b": b}
        self.stride = stride
        self.pads = pads  # ((top, bottom), (left, right))
        self.out_hw = out_hw
        self.decay = decay

    def _patches(self, xp, i, j):
        oh, ow = self.out_hw
        s = self.stride
        return xp[:, i:i + (oh - 1) * s + 1:s, j:j + (ow - 1) * s + 1:s, :]

    def forward(self, xs, training, rng):
        x = xs[0]
        w, b = self.params["w"], self.params["b"]
        kh, kw = w.shape[0], w.shape[1]
        xp = np.pad(x, ((0, 0), self.pads[0], self.pads[1], (0, 0)))
        oh, ow = self.out_hw
        y = np.zeros((x.shape[0], oh, ow, w.shape[3]), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                y += self._patches(xp, i, j) @ w[i, j]
        self._cache = (xp, x.shape)
        return y + b

    def backward(self, gy):
        xp, x_shape = self._cache
        w = self.params["w"]
        kh, kw = w.shape[0], w.shape[1]
        gw = np.zeros_like(w)
        gxp = np.zeros_like(xp)
        oh, ow = self.out_hw
        s = self.stride
        for i in range(kh):
            for j in range(kw):
                patch = self._patches(xp, i, j)
                gw[i, j] = np.einsum("nhwc,nhwo->co", patch, gy)
                gxp[:, i:i + (oh - 1) * s + 1:s, j:j + (ow - 1) * s + 1:s, :] += gy @ w[i, j].T
        if self.decay:
            gw = gw + 2.0 * self.decay * w
        self.grads = {"w": gw, "b": gy.sum(axis=(0, 1, 2))}
        (pt, _), (pl, _) = self.pads
        gx = gxp[:, pt:pt + x_shape[1], pl:pl + x_shape[2], :]
        return [gx]


class DropoutOp(Op):
    def __init__(self, rate: float):
        super().__init__()
        self.rate = rate

    def forward(self, xs, training, rng):
        x = xs[0]
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, gy):
        if self._mask is None:
            return [gy]
        return [gy * self._mask]


class BatchNormOp(Op):
    def __init__(self, gamma: np.ndarray, beta: np.ndarray,
                 momentum: float = 0.99, eps: float = 1e-3):
        super().__init__()
        self.params = {"gamma": gamma, "beta": beta}
        self.state = {"running_mean": np.zeros_like(gamma),
                      "running_var": np.ones_like(gamma)}
        self.momentum = momentum
        self.eps = eps

    def forward(self, xs, training, rng):
        x = xs[0]
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["running_mean"] = (m * self.state["running_mean"]
                                          + (1 - m) * mean).astype(x.dtype)
            self.state["running_var"] = (m * self.state["running_var"]
                                         + (1 - m) * var).astype(x.dtype)
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, gy):
        xhat, inv_std, axes, training = self._cache
        gamma = self.params["gamma"]
        self.grads = {"gamma": (gy * xhat).sum(axis=axes), "beta": gy.sum(axis=axes)}
        gxhat = gy * gamma
        if not training:
            return [gxhat * inv_std]
        m = float(np.prod([xhat.shape[a] for a in axes]))
        gx = (inv_std / m) * (m * gxhat - gxhat.sum(axis=axes)
                              - xhat * (gxhat * xhat).sum(axis=axes))
        return [gx]


class MaxPool2DOp(Op):
    def __init__(self, kernel: int, stride: int, pads: tuple, out_hw: tuple):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.pads = pads
        self.out_hw = out_hw

    def forward(self, xs, training, rng):
        x = xs[0]
        k, s = self.kernel, self.stride
        oh, ow = self.out_hw
        xp = np.pad(x, ((0, 0), self.pads[0], self.pads[1], (0, 0)),
                    constant_values=-np.inf)
        stack = np.stack(
            [xp[:, i:i + (oh - 1) * s + 1:s, j:j + (ow - 1) * s + 1:s, :]
             for i in range(k) for j in range(k)], axis=-1)
        self._arg = stack.argmax(axis=-1)
        self._xp_shape = xp.shape
        self._x_shape = x.shape
        return stack.max(axis=-1)

    def backward(self, gy):
        k, s = self.kernel, self.stride
        oh, ow = self.out_hw
        gxp = np.zeros(self._xp_shape, dtype=gy.dtype)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            contribution = np.where(self._arg == idx, gy, 0.0)
            gxp[:, i:i + (oh - 1) * s + 1:s, j:j + (ow - 1) * s + 1:s, :] += contribution
        (pt, _), (pl, _) = self.pads
        return [gxp[:, pt:pt + self._x_shape[1], pl:pl + self._x_shape[2], :]]


class GlobalMaxPoolOp(Op):
    def forward(self, xs, training, rng):
        x = xs[0]
        n, h, w, c = x.shape
        flat = x.reshape(n, h * w, c)
        self._arg = flat.argmax(axis=1)
        self._shape = x.shape
        return flat.max(axis=1)

    def backward(self, gy):
        n, h, w, c = self._shape
        gflat = np.zeros((n, h * w, c), dtype=gy.dtype)
        n_idx = np.arange(n)[:, None]
        c_idx = np.arange(c)[None, :]
        gflat[n_idx, self._arg, c_idx] = gy
        return [gflat.reshape(self._shape)]


class GlobalAvgPoolOp(Op):
    def forward(self, xs, training, rng):
        x = xs[0]
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, gy):
        n, h, w, c = self._shape
        gx = np.broadcast_to(gy[:, None, None, :] / (h * w), self._shape)
        return [np.ascontiguousarray(gx)]


class FlattenOp(Op):
    def forward(self, xs, training, rng):
        x = xs[0]
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return [gy.reshape(self._shape)]


class ConcatOp(Op):
    """Concatenate two inputs along the trailing (channel/feature) axis."""

    def __init__(self, left_width: int, right_width: int):
        super().__init__()
        self.left_width = left_width
        self.right_width = right_width

    def forward(self, xs, training, rng):
        return np.concatenate(xs, axis=-1)

    def backward(self, gy):
        return [gy[..., :self.left_width], gy[..., self.left_width:]]
