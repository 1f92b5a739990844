"""Dense-tensor network layers with hand-derived backward passes.

Tensors are plain numpy arrays, activations in NCHW layout. Convolutions are
lowered to matrix products (im2col); the lowering buffers are rebuilt in
chunks bounded by a memory budget, which does not change any dot product's
reduction order, so results are independent of the chunking.

Every layer validates that its forward output is finite and raises
NumericFaultError naming itself otherwise.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericFaultError

# Upper bound on a transient im2col buffer; keeps peak memory flat for the
# 120x120 network at batch 32.
_COL_BUDGET_BYTES = 192 * 2**20


class Param:
    """One learnable array and its gradient accumulator."""

    def __init__(self, value: np.ndarray, name: str, weight_decay: bool):
        self.value = value
        self.grad = np.zeros_like(value)
        self.name = name
        self.weight_decay = weight_decay


class Layer:
    name = "layer"

    @property
    def params(self) -> list:
        return []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": type(self).__name__}

    def _check(self, y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise NumericFaultError(f"non-finite values after layer {self.name!r}")
        return y


def _conv_extents(size, kernel, stride, pad, ceil_mode):
    span = size + 2 * pad - kernel
    if span < 0:
        raise ValueError(f"kernel {kernel} exceeds padded input {size + 2 * pad}")
    out = (math.ceil(span / stride) if ceil_mode else span // stride) + 1
    extra = (out - 1) * stride + kernel - (size + 2 * pad)  # extra bottom/right pad
    return out, max(extra, 0)


def _im2col(xp, kernel, stride, out_h, out_w):
    """(B, C, Hp, Wp) -> (B*out_h*out_w, C*kh*kw) view-copy."""
    kh, kw = kernel
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]          # (B, C, oh, ow, kh, kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5)                 # (B, oh, ow, C, kh, kw)
    return cols.reshape(xp.shape[0] * out_h * out_w, -1)


class Conv2d(Layer):
    """Cross-correlation with bias; `rounding` picks floor or ceil output size.

    Ceil mode pads the extra rows/columns on the bottom/right.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0,
                 rounding="floor", name="conv"):
        if rounding not in ("floor", "ceil"):
            raise ValueError(f"rounding must be floor or ceil, got {rounding}")
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        if stride < 1 or pad < 0 or kh < 1 or kw < 1:
            raise ValueError("conv needs kernel >= 1, stride >= 1, pad >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        self.stride = stride
        self.pad = pad
        self.ceil_mode = rounding == "ceil"
        self.name = name
        self.weight = Param(np.zeros((out_channels, in_channels, kh, kw)), f"{name}.weight", True)
        self.bias = Param(np.zeros(out_channels), f"{name}.bias", False)
        self._cache = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": "Conv", "name": self.name, "in": self.in_channels,
                "out": self.out_channels, "kernel": list(self.kernel),
                "stride": self.stride, "pad": self.pad,
                "rounding": "ceil" if self.ceil_mode else "floor"}

    def output_shape(self, in_shape):
        b, c, h, w = in_shape
        if c != self.in_channels:
            raise ValueError(f"{self.name}: expected {self.in_channels} input channels, "
                             f"got shape {tuple(in_shape)}")
        oh, _ = _conv_extents(h, self.kernel[0], self.stride, self.pad, self.ceil_mode)
        ow, _ = _conv_extents(w, self.kernel[1], self.stride, self.pad, self.ceil_mode)
        return (b, self.out_channels, oh, ow)

    def _padded(self, x, extra_h, extra_w):
        p = self.pad
        return np.pad(x, ((0, 0), (0, 0), (p, p + extra_h), (p, p + extra_w)))

    def forward(self, x, train):
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(f"{self.name}: input has {c} channels, weights expect "
                             f"{self.in_channels} (input shape {x.shape})")
        oh, extra_h = _conv_extents(h, self.kernel[0], self.stride, self.pad, self.ceil_mode)
        ow, extra_w = _conv_extents(w, self.kernel[1], self.stride, self.pad, self.ceil_mode)
        xp = self._padded(x, extra_h, extra_w)
        wmat = self.weight.value.reshape(self.out_channels, -1).T  # (C*kh*kw, out)
        row_bytes = wmat.shape[0] * x.dtype.itemsize
        rows_per_sample = oh * ow
        chunk = max(1, _COL_BUDGET_BYTES // (row_bytes * rows_per_sample))
        out = np.empty((b, self.out_channels, oh, ow), dtype=x.dtype)
        wmat = wmat.astype(x.dtype)
        for s in range(0, b, chunk):
            cols = _im2col(xp[s:s + chunk], self.kernel, self.stride, oh, ow)
            prod = cols @ wmat
            nb = xp[s:s + chunk].shape[0]
            out[s:s + nb] = prod.reshape(nb, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        out += self.bias.value.astype(x.dtype)[None, :, None, None]
        self._cache = (xp, x.shape, (oh, ow), (extra_h, extra_w)) if train else None
        return self._check(out)

    def backward(self, gy):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        xp, x_shape, (oh, ow), (extra_h, extra_w) = self._cache
        b = x_shape[0]
        kh, kw = self.kernel
        gflat = gy.transpose(0, 2, 3, 1).reshape(b * oh * ow, self.out_channels)
        self.bias.grad[...] = gflat.sum(axis=0, dtype=np.float64)

        wmat = self.weight.value.reshape(self.out_channels, -1).astype(xp.dtype)
        row_bytes = wmat.shape[1] * xp.dtype.itemsize
        chunk = max(1, _COL_BUDGET_BYTES // (row_bytes * oh * ow))
        wgrad = np.zeros((self.out_channels, wmat.shape[1]), dtype=np.float64)
        gxp = np.zeros_like(xp)
        for s in range(0, b, chunk):
            nb = xp[s:s + chunk].shape[0]
            rows = slice(s * oh * ow, (s + nb) * oh * ow)
            cols = _im2col(xp[s:s + chunk], self.kernel, self.stride, oh, ow)
            wgrad += gflat[rows].T @ cols
            gcols = (gflat[rows] @ wmat).reshape(nb, oh, ow, self.in_channels, kh, kw)
            for i in range(kh):
                for j in range(kw):
                    gxp[s:s + nb, :, i:i + self.stride * oh:self.stride,
                        j:j + self.stride * ow:self.stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        self.weight.grad[...] = wgrad.reshape(self.weight.value.shape)
        p = self.pad
        h, w = x_shape[2], x_shape[3]
        self._cache = None
        return gxp[:, :, p:p + h, p:p + w]


class MaxPool2d(Layer):
    """Max pooling with floor rounding; argmax indices cached for backward."""

    def __init__(self, kernel=2, stride=2, name="pool"):
        self.kernel = kernel
        self.stride = stride
        self.name = name
        self._cache = None

    def spec(self):
        return {"kind": "MaxPool", "name": self.name,
                "kernel": self.kernel, "stride": self.stride}

    def output_shape(self, in_shape):
        b, c, h, w = in_shape
        if self.kernel > h or self.kernel > w:
            raise ValueError(f"{self.name}: kernel {self.kernel} exceeds input {h}x{w}")
        oh = (h - self.kernel) // self.stride + 1
        ow = (w - self.kernel) // self.stride + 1
        return (b, c, oh, ow)

    def forward(self, x, train):
        b, c, h, w = x.shape
        _, _, oh, ow = self.output_shape(x.shape)
        windows = np.lib.stride_tricks.sliding_window_view(x, (self.kernel, self.kernel),
                                                           axis=(2, 3))
        windows = windows[:, :, ::self.stride, ::self.stride]
        flat = windows.reshape(b, c, oh, ow, self.kernel * self.kernel)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, arg) if train else None
        return self._check(out)

    def backward(self, gy):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        x_shape, arg = self._cache
        gx = np.zeros(x_shape, dtype=gy.dtype)
        ir = arg // self.kernel
        ic = arg % self.kernel
        bi, ci, oi, oj = np.indices(arg.shape, sparse=False)
        rows = oi * self.stride + ir
        cols = oj * self.stride + ic
        if self.stride >= self.kernel:
            gx[bi, ci, rows, cols] = gy  # windows disjoint, no collisions
        else:
            np.add.at(gx, (bi, ci, rows, cols), gy)
        self._cache = None
        return gx


class Dense(Layer):
    """Affine map on flattened inputs."""

    def __init__(self, in_features, out_features, name="fc"):
        self.in_features = in_features
        self.out_features = out_features
        self.name = name
        self.weight = Param(np.zeros((in_features, out_features)), f"{name}.weight", True)
        self.bias = Param(np.zeros(out_features), f"{name}.bias", False)
        self._cache = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def spec(self):
        return {"kind": "Dense", "name": self.name,
                "in": self.in_features, "out": self.out_features}

    def output_shape(self, in_shape):
        if int(np.prod(in_shape[1:])) != self.in_features:
            raise ValueError(f"{self.name}: expected {self.in_features} features, "
                             f"got shape {tuple(in_shape)}")
        return (in_shape[0], self.out_features)

    def forward(self, x, train):
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_features:
            raise ValueError(f"{self.name}: input shape {x.shape} does not flatten "
                             f"to {self.in_features} features")
        out = flat @ self.weight.value.astype(x.dtype) + self.bias.value.astype(x.dtype)
        self._cache = flat if train else None
        return self._check(out)

    def backward(self, gy):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        flat = self._cache
        self.weight.grad[...] = flat.T @ gy
        self.bias.grad[...] = gy.sum(axis=0, dtype=np.float64)
        self._cache = None
        return gy @ self.weight.value.astype(gy.dtype).T


class ReLU(Layer):
    def __init__(self, name="relu"):
        self.name = name
        self._mask = None

    def forward(self, x, train):
        out = np.maximum(x, 0)
        self._mask = x > 0 if train else None
        return self._check(out)

    def backward(self, gy):
        if self._mask is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        return gy * self._mask

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def spec(self):
        return {"kind": "ReLU", "name": self.name}


class Tanh(Layer):
    def __init__(self, name="tanh"):
        self.name = name
        self._out = None

    def forward(self, x, train):
        out = np.tanh(x)
        self._out = out if train else None
        return self._check(out)

    def backward(self, gy):
        if self._out is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        return gy * (1.0 - self._out**2)

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def spec(self):
        return {"kind": "Tanh", "name": self.name}


class Sigmoid(Layer):
    def __init__(self, name="sigmoid"):
        self.name = name
        self._out = None

    def forward(self, x, train):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out if train else None
        return self._check(out)

    def backward(self, gy):
        if self._out is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        return gy * self._out * (1.0 - self._out)

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def spec(self):
        return {"kind": "Sigmoid", "name": self.name}


class Dropout(Layer):
    """Inverted dropout: kept units scale by 1/(1-rate); eval is the identity."""

    def __init__(self, rate, name="dropout", seed=0):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.name = name
        self.rng = np.random.default_rng(seed)
        self._mask = None

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._mask = np.ones_like(x) if train else None
            return self._check(x.copy() if train else x)
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return self._check(x * self._mask)

    def backward(self, gy):
        if self._mask is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        return gy * self._mask

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def spec(self):
        return {"kind": "Dropout", "name": self.name, "rate": self.rate}


class Flatten(Layer):
    def __init__(self, name="flatten"):
        self.name = name
        self._shape = None

    def forward(self, x, train):
        self._shape = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        if self._shape is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        return gy.reshape(self._shape)

    def output_shape(self, in_shape):
        return (in_shape[0], int(np.prod(in_shape[1:])))

    def spec(self):
        return {"kind": "Flatten", "name": self.name}
