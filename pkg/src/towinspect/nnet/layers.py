"""Minimal layer zoo: convolution, transposed convolution, dense, activations.

Everything runs on plain numpy arrays in NCHW layout. Convolutions lower to
matrix multiplies via im2col so OpenBLAS does the heavy lifting; the
scatter-adds in col2im loop only over the k*k kernel offsets and accumulate
in NHWC order, which keeps the channel axis contiguous on both sides.
Layers cache what backward needs and expose parameters/gradients as
name -> array dicts.

Forward math is float32 by default; gradient checks build float64 layers
through the exact same code path.
"""

from __future__ import annotations

import numpy as np

from ..errors import InspectError


class ShapeMismatch(InspectError):
    """Tensor shape incompatible with the layer; indicates a construction bug."""


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if not pad:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[:, :, pad:pad + h, pad:pad + w] = x
    return out


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """Lower (n, c, h, w) into a (n*oh*ow, c*k*k) patch matrix."""
    n, c, h, w = x.shape
    xp = _pad_hw(x, pad)
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]                      # n, c, oh, ow, k, k
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return cols, oh, ow


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int, oh: int, ow: int):
    """Scatter-add a patch-matrix gradient back onto the input grid."""
    n, c, h, w = x_shape
    dc = dcols.reshape(n, oh, ow, c, k, k)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += dc[:, :, :, :, i, j]
    dxp = dxp[:, pad:pad + h, pad:pad + w, :] if pad else dxp
    return np.ascontiguousarray(dxp.transpose(0, 3, 1, 2))


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base layer; stateless layers only override forward/backward."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__.lower()}


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, k: int = 3, stride: int = 2, pad: int = 1,
                 *, rng: np.random.Generator, dtype=np.float32):
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        self.w = _kaiming_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k, dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def describe(self):
        return {"kind": "conv", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "k": self.k, "stride": self.stride, "pad": self.pad}

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"conv expects (n, {self.in_ch}, h, w), got {x.shape}")
        cols, oh, ow = _im2col(x, self.k, self.stride, self.pad)
        y = cols @ self.w.reshape(self.out_ch, -1).T + self.b
        self._cache = (x.shape, cols)
        return np.ascontiguousarray(
            y.reshape(x.shape[0], oh, ow, self.out_ch).transpose(0, 3, 1, 2))

    def backward(self, dy):
        x_shape, cols = self._cache
        n, _, oh, ow = dy.shape
        dyf = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, self.out_ch)
        self.db = dyf.sum(axis=0)
        self.dw = (dyf.T @ cols).reshape(self.w.shape)
        dcols = dyf @ self.w.reshape(self.out_ch, -1)
        return _col2im(dcols, x_shape, self.k, self.stride, self.pad, oh, ow)


class ConvTranspose2d(Layer):
    """Stride-s transposed convolution; inverts the spatial shape of Conv2d."""

    def __init__(self, in_ch: int, out_ch: int, k: int = 3, stride: int = 2, pad: int = 1,
                 out_pad: int = 1, *, rng: np.random.Generator, dtype=np.float32):
        if out_pad > pad:
            # keeps the crop window inside the scatter buffer
            raise ValueError("out_pad must be <= pad")
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        self.stride, self.pad, self.out_pad = stride, pad, out_pad
        self.w = _kaiming_uniform(rng, (in_ch, out_ch, k, k), in_ch * k * k, dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def describe(self):
        return {"kind": "convt", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "k": self.k, "stride": self.stride, "pad": self.pad, "out_pad": self.out_pad}

    def _geometry(self, h, w):
        hfull = (h - 1) * self.stride + self.k
        wfull = (w - 1) * self.stride + self.k
        oh = hfull - 2 * self.pad + self.out_pad
        ow = wfull - 2 * self.pad + self.out_pad
        return hfull, wfull, oh, ow

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"convt expects (n, {self.in_ch}, h, w), got {x.shape}")
        n, _, h, w = x.shape
        hfull, wfull, oh, ow = self._geometry(h, w)
        x2 = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(n * h * w, self.in_ch)
        cols = x2 @ self.w.reshape(self.in_ch, -1)
        buf = _col2im(cols, (n, self.out_ch, hfull, wfull), self.k, self.stride, 0, h, w)
        y = buf[:, :, self.pad:self.pad + oh, self.pad:self.pad + ow]
        self._cache = (x.shape, x2)
        return y + self.b[None, :, None, None]

    def backward(self, dy):
        x_shape, x2 = self._cache
        n, _, h, w = x_shape
        hfull, wfull, oh, ow = self._geometry(h, w)
        buf = np.zeros((n, self.out_ch, hfull, wfull), dtype=dy.dtype)
        buf[:, :, self.pad:self.pad + oh, self.pad:self.pad + ow] = dy
        cols, bh, bw = _im2col(buf, self.k, self.stride, 0)
        if (bh, bw) != (h, w):
            raise ShapeMismatch(f"convt backward geometry bug: {(bh, bw)} != {(h, w)}")
        self.db = dy.sum(axis=(0, 2, 3))
        self.dw = (x2.T @ cols).reshape(self.w.shape)
        dx2 = cols @ self.w.reshape(self.in_ch, -1).T
        return np.ascontiguousarray(
            dx2.reshape(n, h, w, self.in_ch).transpose(0, 3, 1, 2))


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, *, rng: np.random.Generator, dtype=np.float32):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.w = _kaiming_uniform(rng, (in_dim, out_dim), in_dim, dtype)
        self.b = np.zeros(out_dim, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def describe(self):
        return {"kind": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"dense expects (n, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.dw = self._x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.w.T


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask

    def describe(self):
        return {"kind": "relu"}


class Sigmoid(Layer):
    # clip keeps exp() in range; saturated values round to 0/1 anyway
    _CLIP = 60.0

    def forward(self, x):
        y = 1.0 / (1.0 + np.exp(-np.clip(x, -self._CLIP, self._CLIP)))
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)

    def describe(self):
        return {"kind": "sigmoid"}


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def describe(self):
        return {"kind": "flatten"}


class Reshape(Layer):
    def __init__(self, target: tuple[int, ...]):
        self.target = tuple(target)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], *self.target)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def describe(self):
        return {"kind": "reshape", "target": list(self.target)}
