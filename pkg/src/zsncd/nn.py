"""Minimal neural-network layers on numpy arrays with analytic backward passes.

Tensors are plain numpy arrays, channels last: dense inputs are (n, features)
and convolutional inputs are (n, h, w, c). Every layer exposes

    y = layer.forward(x, cache=True)   # cache=True stores what backward needs
    dx = layer.backward(dy)            # accumulates into each Parameter.grad

Backward requires the immediately preceding cached forward. With cache=False
the forward is a pure function of (x, parameters) and is safe to call
concurrently across inputs; cached forwards are single-use and not reentrant.

Parameters may carry an elementwise lower bound; the optimizer reprojects onto
the bound after each update (used by GDN's beta >= 1e-6 and gamma >= 0).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

GDN_BETA_MIN = 1e-6


class Parameter:
    """A trainable array plus its gradient accumulator."""

    __slots__ = ("value", "grad", "lower", "name")

    def __init__(self, value: np.ndarray, lower: float | None = None, name: str = ""):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.lower = lower
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0


def glorot_uniform(shape, fan_in: int, fan_out: int, rng, dtype) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


class Layer:
    """Base class; subclasses fill in forward/backward and params()."""

    def params(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ReLU(Layer):
    def forward(self, x, cache=True):
        if cache:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng, dtype=np.float32, name="dense"):
        self.w = Parameter(
            glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng, dtype), name=f"{name}.w"
        )
        self.b = Parameter(np.zeros(out_dim, dtype=dtype), name=f"{name}.b")

    def params(self):
        return [self.w, self.b]

    def forward(self, x, cache=True):
        if cache:
            self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dy):
        self.w.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value.T


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """(n, h, w, c) -> (n*oh*ow, k*k*c) patch matrix, column order (kh, kw, c)."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # (n, h', w', c, k, k)
    win = win[:, ::stride, ::stride]
    n, oh, ow = win.shape[:3]
    col = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, k * k * x.shape[3])
    return np.ascontiguousarray(col), oh, ow


def _col2im(dcol: np.ndarray, n: int, oh: int, ow: int, h: int, w: int, c: int,
            k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back onto the image grid."""
    d6 = dcol.reshape(n, oh, ow, k, k, c)
    out = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcol.dtype)
    for a in range(k):
        for b in range(k):
            out[:, a : a + stride * oh : stride, b : b + stride * ow : stride] += d6[:, :, :, a, b]
    if pad:
        out = out[:, pad:-pad, pad:-pad]
    return out


class Conv2d(Layer):
    """Strided 2-D convolution, zero padding, kernel layout (k, k, in_c, out_c)."""

    def __init__(self, in_c: int, out_c: int, k: int, stride: int, pad: int,
                 rng, dtype=np.float32, name="conv"):
        fan_in, fan_out = k * k * in_c, k * k * out_c
        self.w = Parameter(
            glorot_uniform((k, k, in_c, out_c), fan_in, fan_out, rng, dtype), name=f"{name}.w"
        )
        self.b = Parameter(np.zeros(out_c, dtype=dtype), name=f"{name}.b")
        self.k, self.stride, self.pad = k, stride, pad
        self.in_c, self.out_c = in_c, out_c

    def params(self):
        return [self.w, self.b]

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.k, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, cache=True):
        n, h, w, _ = x.shape
        col, oh, ow = _im2col(x, self.k, self.stride, self.pad)
        y = col @ self.w.value.reshape(-1, self.out_c) + self.b.value
        if cache:
            self._col, self._shape, self._ohw = col, (n, h, w), (oh, ow)
        return y.reshape(n, oh, ow, self.out_c)

    def backward(self, dy):
        n, h, w = self._shape
        oh, ow = self._ohw
        dmat = dy.reshape(-1, self.out_c)
        self.w.grad += (self._col.T @ dmat).reshape(self.w.value.shape)
        self.b.grad += dmat.sum(axis=0)
        dcol = dmat @ self.w.value.reshape(-1, self.out_c).T
        return _col2im(dcol, n, oh, ow, h, w, self.in_c, self.k, self.stride, self.pad)


class ConvTranspose2d(Layer):
    """Transposed convolution, defined as the exact adjoint of a Conv2d.

    The layer is constructed with its intended output size, so an
    encoder/decoder pair mirrors exactly without output-padding arithmetic.
    Kernel layout is (k, k, out_c, in_c).
    """

    def __init__(self, in_c: int, out_c: int, k: int, stride: int, pad: int,
                 out_hw: tuple[int, int], rng, dtype=np.float32, name="convt"):
        fan_in, fan_out = k * k * in_c, k * k * out_c
        self.w = Parameter(
            glorot_uniform((k, k, out_c, in_c), fan_in, fan_out, rng, dtype), name=f"{name}.w"
        )
        self.b = Parameter(np.zeros(out_c, dtype=dtype), name=f"{name}.b")
        self.k, self.stride, self.pad = k, stride, pad
        self.in_c, self.out_c = in_c, out_c
        self.out_size = out_hw
        oh, ow = out_hw
        # The adjoint Conv2d mapping (oh, ow) -> (ih, iw) must exist.
        ih = (oh + 2 * pad - k) // stride + 1
        iw = (ow + 2 * pad - k) // stride + 1
        if ih < 1 or iw < 1 or stride * (ih - 1) + k > oh + 2 * pad:
            raise ValueError(f"incompatible transposed-conv geometry for output {out_hw}")
        self._in_hw = (ih, iw)

    def params(self):
        return [self.w, self.b]

    def forward(self, x, cache=True):
        n, ih, iw, _ = x.shape
        if (ih, iw) != self._in_hw:
            raise ValueError(f"expected input {self._in_hw}, got {(ih, iw)}")
        if cache:
            self._xmat = x.reshape(-1, self.in_c)
        oh, ow = self.out_size
        wmat = self.w.value.reshape(-1, self.in_c)  # (k*k*out_c, in_c)
        dcol = x.reshape(-1, self.in_c) @ wmat.T
        y = _col2im(dcol, n, ih, iw, oh, ow, self.out_c, self.k, self.stride, self.pad)
        return y + self.b.value

    def backward(self, dy):
        col, oh2, ow2 = _im2col(dy, self.k, self.stride, self.pad)
        wmat = self.w.value.reshape(-1, self.in_c)
        self.w.grad += (col.T @ self._xmat).reshape(self.w.value.shape)
        self.b.grad += dy.sum(axis=(0, 1, 2))
        dx = col @ wmat
        n = dy.shape[0]
        return dx.reshape(n, oh2, ow2, self.in_c)


class GDN(Layer):
    """Generalized divisive normalization over the channel axis.

    forward:  y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)
    inverse:  y_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2)

    Constraints beta >= 1e-6 and gamma >= 0 are carried as Parameter lower
    bounds and reprojected by the optimizer after each step. Initialization:
    beta = 1, gamma = 0.1 * I.
    """

    def __init__(self, channels: int, inverse: bool = False, dtype=np.float32, name="gdn"):
        self.beta = Parameter(
            np.ones(channels, dtype=dtype), lower=GDN_BETA_MIN, name=f"{name}.beta"
        )
        self.gamma = Parameter(
            (0.1 * np.eye(channels)).astype(dtype), lower=0.0, name=f"{name}.gamma"
        )
        self.inverse = inverse
        self.channels = channels

    def params(self):
        return [self.beta, self.gamma]

    def _denom(self, x2):
        return self.beta.value + x2 @ self.gamma.value.T

    def forward(self, x, cache=True):
        x2 = x * x
        d = self._denom(x2)
        r = np.sqrt(d)
        y = x * r if self.inverse else x / r
        if cache:
            self._x, self._x2, self._d, self._r = x, x2, d, r
        return y

    def backward(self, dy):
        x, x2, d, r = self._x, self._x2, self._d, self._r
        c = self.channels
        if self.inverse:
            u = dy * x / r  # g_i x_i d_i^{-1/2}
            dx = dy * r + x * (u @ self.gamma.value)
            self.beta.grad += 0.5 * u.reshape(-1, c).sum(axis=0)
            self.gamma.grad += 0.5 * (u.reshape(-1, c).T @ x2.reshape(-1, c))
        else:
            t = dy * x / (d * r)  # g_i x_i d_i^{-3/2}
            dx = dy / r - x * (t @ self.gamma.value)
            self.beta.grad += -0.5 * t.reshape(-1, c).sum(axis=0)
            self.gamma.grad += -0.5 * (t.reshape(-1, c).T @ x2.reshape(-1, c))
        return dx
