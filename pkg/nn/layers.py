"""
Layer kernels and layer objects for the float64 network engine

Every kernel comes as a forward/backward pair. Forward returns (output, cache);
backward takes the upstream gradient and the cache. Image tensors use NCHW.

Conv weights are (out_channels, in_channels, k, k). Transposed-conv weights
are (in_channels, out_channels, k, k), i.e. the weights of the conv whose
input gradient the transposed conv computes.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.exceptions import BatchSizeError, NonFiniteTensorError, ShapeError

logger = logging.getLogger(__name__)

Padding = Union[int, str, Tuple[Tuple[int, int], Tuple[int, int]]]


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteTensorError(f"Non-finite values at {where}")
    return x


def same_padding(kernel: int) -> Tuple[int, int]:
    """(before, after) padding that keeps stride-1 outputs at the input size"""
    before = (kernel - 1) // 2
    return before, kernel - 1 - before


def _normalize_padding(padding: Padding, kernel: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    if isinstance(padding, str):
        if padding != "same":
            raise ShapeError(f"Unknown padding mode: {padding}")
        pad = same_padding(kernel)
        return pad, pad
    if isinstance(padding, (int, np.integer)):
        return (int(padding), int(padding)), (int(padding), int(padding))
    (pt, pb), (pl, pr) = padding
    return (int(pt), int(pb)), (int(pl), int(pr))


def _require_4d(x: np.ndarray, channels: int, name: str):
    if x.ndim != 4:
        raise ShapeError(f"{name} expects NCHW input, got shape {x.shape}")
    if x.shape[1] != channels:
        raise ShapeError(f"{name} expects {channels} input channels, got {x.shape[1]}")


def _windows(xp: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(N, C, Ho, Wo, k, k) view of all receptive fields"""
    view = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


# ============================================================================
# Convolution
# ============================================================================

def conv2d_forward(x, w, b, stride: int = 1, padding: Padding = 0):
    """
    Cross-correlation of an NCHW batch with (Cout, Cin, k, k) weights

    Returns:
        (output of shape (N, Cout, Ho, Wo), cache)
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"Conv weights must be (Cout, Cin, k, k), got {w.shape}")
    _require_4d(x, w.shape[1], "conv2d")
    kernel = w.shape[2]
    pad = _normalize_padding(padding, kernel)
    xp = np.pad(x, ((0, 0), (0, 0), pad[0], pad[1]))
    if xp.shape[2] < kernel or xp.shape[3] < kernel:
        raise ShapeError(f"Kernel {kernel} larger than padded input {xp.shape[2:]}")

    cols = _windows(xp, kernel, stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + np.asarray(b)[None, :, None, None]
    return np.ascontiguousarray(out), (x.shape, xp.shape, cols, w, stride, pad)


def _scatter_windows(dout: np.ndarray, w: np.ndarray, full_shape, stride: int) -> np.ndarray:
    """Sum of dout (N, Co, Ho, Wo) spread back over every kernel offset"""
    kernel = w.shape[2]
    out = np.zeros(full_shape)
    ho, wo = dout.shape[2], dout.shape[3]
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.einsum(
                "nohw,oc->nchw", dout, w[:, :, i, j]
            )
    return out


def _crop(x: np.ndarray, pad) -> np.ndarray:
    (pt, pb), (pl, pr) = pad
    return x[:, :, pt:x.shape[2] - pb, pl:x.shape[3] - pr]


def conv2d_backward(dout, cache):
    """Gradients (dx, dw, db) of conv2d_forward"""
    x_shape, xp_shape, cols, w, stride, pad = cache
    dout = np.asarray(dout, dtype=np.float64)
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    dxp = _scatter_windows(dout, w, xp_shape, stride)
    return _crop(dxp, pad), dw, db


def conv_transpose2d_forward(x, w, b, stride: int = 1, padding: Padding = 0):
    """
    Transposed convolution: the input gradient of conv2d with weights w

    Output size per axis is (H - 1) * stride + k - pad_before - pad_after.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"Transposed-conv weights must be (Cin, Cout, k, k), got {w.shape}")
    _require_4d(x, w.shape[0], "conv_transpose2d")
    kernel = w.shape[2]
    pad = _normalize_padding(padding, kernel)
    n, _, h, wd = x.shape
    full = (n, w.shape[1], (h - 1) * stride + kernel, (wd - 1) * stride + kernel)
    if full[2] - sum(pad[0]) < 1 or full[3] - sum(pad[1]) < 1:
        raise ShapeError(f"Padding {pad} leaves no output for input {x.shape}")

    out = _crop(_scatter_windows(x, w, full, stride), pad)
    if b is not None:
        out = out + np.asarray(b)[None, :, None, None]
    return np.ascontiguousarray(out), (x, w, stride, pad)


def conv_transpose2d_backward(dout, cache):
    """Gradients (dx, dw, db) of conv_transpose2d_forward"""
    x, w, stride, pad = cache
    dout = np.asarray(dout, dtype=np.float64)
    db = dout.sum(axis=(0, 2, 3))
    dx, _ = conv2d_forward(dout, w, None, stride, pad)
    dfull = np.pad(dout, ((0, 0), (0, 0), pad[0], pad[1]))
    cols = _windows(dfull, w.shape[2], stride)
    dw = np.tensordot(x, cols, axes=([0, 2, 3], [0, 2, 3]))
    return dx, dw, db


# ============================================================================
# Batch normalization
# ============================================================================

def batchnorm_forward(
    x,
    gamma,
    beta,
    running_mean,
    running_var,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
):
    """
    Per-channel batch normalization of an NCHW batch

    Returns:
        (output, new_running_mean, new_running_var, cache)

    Raises:
        BatchSizeError: training mode with fewer than two samples
    """
    x = np.asarray(x, dtype=np.float64)
    _require_4d(x, len(gamma), "batchnorm")
    shape = (1, -1, 1, 1)

    if training:
        if x.shape[0] < 2:
            raise BatchSizeError(f"Batch normalization needs a batch of at least 2, got {x.shape[0]}")
        count = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        unbiased = var * count / (count - 1) if count > 1 else var
        new_mean = (1 - momentum) * running_mean + momentum * mean
        new_var = (1 - momentum) * running_var + momentum * unbiased
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return out, new_mean, new_var, (xhat, inv_std, gamma, training)


def batchnorm_backward(dout, cache):
    """Gradients (dx, dgamma, dbeta) of batchnorm_forward"""
    xhat, inv_std, gamma, training = cache
    dout = np.asarray(dout, dtype=np.float64)
    shape = (1, -1, 1, 1)
    dgamma = np.sum(dout * xhat, axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(shape)

    if not training:
        return dxhat * inv_std.reshape(shape), dgamma, dbeta

    count = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3)).reshape(shape)
    sum_dxhat_xhat = np.sum(dxhat * xhat, axis=(0, 2, 3)).reshape(shape)
    dx = inv_std.reshape(shape) / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


# ============================================================================
# Elementwise, dense, loss
# ============================================================================

def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout, cache):
    return np.where(cache, dout, 0.0)


def dense_forward(x, w, b):
    """Affine map x @ w + b with w of shape (in_units, out_units)"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"Dense layer expects (N, {w.shape[0]}) input, got {x.shape}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def mse_loss(pred, target):
    """
    Mean squared error over every element of the batch

    Returns:
        (loss, gradient with respect to pred)
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction shape {pred.shape} does not match target {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


# ============================================================================
# Layer objects
# ============================================================================

def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Layer:
    """Base class: parameters, their gradients and non-trainable buffers"""
    kind = "layer"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(input_shape)

    def describe(self) -> Dict:
        return {"type": self.kind}

    def _cached(self):
        if self._cache is None:
            raise ShapeError(f"{self.kind}.backward called before forward")
        return self._cache


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 padding: Padding = "same", rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.params["weight"] = _he_normal(rng, (out_channels, in_channels, kernel, kernel),
                                           in_channels * kernel * kernel)
        self.params["bias"] = np.zeros(out_channels)

    def forward(self, x, training=False):
        out, self._cache = conv2d_forward(x, self.params["weight"], self.params["bias"],
                                          self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = conv2d_backward(dout, self._cached())
        self.grads["weight"], self.grads["bias"] = dw, db
        return dx

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if c != self.in_channels:
            raise ShapeError(f"conv2d expects {self.in_channels} channels, got {c}")
        (pt, pb), (pl, pr) = _normalize_padding(self.padding, self.kernel)
        return (self.out_channels,
                (h + pt + pb - self.kernel) // self.stride + 1,
                (w + pl + pr - self.kernel) // self.stride + 1)

    def describe(self):
        return {"type": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}


class ConvTranspose2D(Layer):
    kind = "conv_transpose2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 padding: Padding = "same", rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.params["weight"] = _he_normal(rng, (in_channels, out_channels, kernel, kernel),
                                           in_channels * kernel * kernel)
        self.params["bias"] = np.zeros(out_channels)

    def forward(self, x, training=False):
        out, self._cache = conv_transpose2d_forward(x, self.params["weight"], self.params["bias"],
                                                    self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = conv_transpose2d_backward(dout, self._cached())
        self.grads["weight"], self.grads["bias"] = dw, db
        return dx

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if c != self.in_channels:
            raise ShapeError(f"conv_transpose2d expects {self.in_channels} channels, got {c}")
        (pt, pb), (pl, pr) = _normalize_padding(self.padding, self.kernel)
        return (self.out_channels,
                (h - 1) * self.stride + self.kernel - pt - pb,
                (w - 1) * self.stride + self.kernel - pl - pr)

    def describe(self):
        return {"type": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}


class BatchNorm2D(Layer):
    kind = "batchnorm2d"

    def __init__(self, channels: int, momentum: float = 0.1, epsilon: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.epsilon = channels, momentum, epsilon
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, training=False):
        out, mean, var, self._cache = batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"],
            self.momentum, self.epsilon, training,
        )
        self.buffers["running_mean"][...] = mean
        self.buffers["running_var"][...] = var
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = batchnorm_backward(dout, self._cached())
        self.grads["gamma"], self.grads["beta"] = dgamma, dbeta
        return dx

    def output_shape(self, input_shape):
        if input_shape[0] != self.channels:
            raise ShapeError(f"batchnorm2d expects {self.channels} channels, got {input_shape[0]}")
        return tuple(input_shape)

    def describe(self):
        return {"type": self.kind, "channels": self.channels,
                "momentum": self.momentum, "epsilon": self.epsilon}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        out, self._cache = relu_forward(x)
        return out

    def backward(self, dout):
        return relu_backward(dout, self._cached())


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_units: int, out_units: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_units, self.out_units = in_units, out_units
        self.params["weight"] = _he_normal(rng, (in_units, out_units), in_units)
        self.params["bias"] = np.zeros(out_units)

    def forward(self, x, training=False):
        out, self._cache = dense_forward(x, self.params["weight"], self.params["bias"])
        return out

    def backward(self, dout):
        dx, dw, db = dense_backward(dout, self._cached())
        self.grads["weight"], self.grads["bias"] = dw, db
        return dx

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_units,):
            raise ShapeError(f"dense expects ({self.in_units},) features, got {tuple(input_shape)}")
        return (self.out_units,)

    def describe(self):
        return {"type": self.kind, "in_units": self.in_units, "out_units": self.out_units}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cached())

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape: Sequence[int]):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x, training=False):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"Cannot reshape {x.shape[1:]} to {self.shape}")
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dout):
        return dout.reshape(self._cached())

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"Cannot reshape {tuple(input_shape)} to {self.shape}")
        return self.shape

    def describe(self):
        return {"type": self.kind, "shape": list(self.shape)}
