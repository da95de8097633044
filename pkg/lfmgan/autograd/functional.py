"""
Differentiable network operations: convolutions, batch normalization,
activations and binary cross-entropy.

Convolutions use a strided sliding-window view of the padded input; the
input gradient of conv2d doubles as the forward of conv_transpose2d.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..core import ShapeError
from .tensor import Function, Tensor, _as_tensor

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
BCE_EPS = 1e-7


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _windows(xp: np.ndarray, kernel: int, stride: int, ho: int, wo: int) -> np.ndarray:
    view = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return view[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, cin_w, k, k2 = w.shape
    if cin != cin_w or k != k2:
        raise ShapeError(f"conv2d weight {w.shape} does not fit input {x.shape}")
    if h + 2 * pad < k or wd + 2 * pad < k:
        raise ShapeError(f"Kernel {k} larger than padded input {x.shape} (pad {pad})")
    ho = conv_output_size(h, k, stride, pad)
    wo = conv_output_size(wd, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d output would be empty")
    cols = _windows(_pad(x, pad), k, stride, ho, wo)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_input_grad(grad: np.ndarray, w: np.ndarray, x_shape, stride: int,
                     pad: int) -> np.ndarray:
    n, cin, h, wd = x_shape
    k = w.shape[2]
    ho, wo = grad.shape[2], grad.shape[3]
    if grad.shape[1] != w.shape[0]:
        raise ShapeError(f"Gradient channels {grad.shape[1]} do not match weight {w.shape}")
    dcols = np.tensordot(grad, w, axes=([1], [0]))  # n, ho, wo, cin, k, k
    dxp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad), dtype=grad.dtype)
    rows = (ho - 1) * stride + 1
    cols = (wo - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + rows:stride, j:j + cols:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dxp[:, :, pad:pad + h, pad:pad + wd]


def _conv_weight_grad(grad: np.ndarray, x: np.ndarray, kernel: int, stride: int,
                      pad: int) -> np.ndarray:
    ho, wo = grad.shape[2], grad.shape[3]
    cols = _windows(_pad(x, pad), kernel, stride, ho, wo)
    return np.tensordot(grad, cols, axes=([0, 2, 3], [0, 2, 3]))


class Conv2d(Function):
    def forward(self, x, w, b=None, stride=1, pad=0):
        out = _conv_forward(x, w, stride, pad)
        if b is not None:
            if b.shape != (w.shape[0],):
                raise ShapeError(f"Bias shape {b.shape} does not match {w.shape[0]} channels")
            out += b.reshape(1, -1, 1, 1)
        self.save_for_backward(x, w, stride, pad)
        return out

    def backward(self, grad):
        x, w, stride, pad = self.saved
        gx = _conv_input_grad(grad, w, x.shape, stride, pad) if self.needs_input_grad[0] else None
        gw = _conv_weight_grad(grad, x, w.shape[2], stride, pad) if self.needs_input_grad[1] else None
        gb = grad.sum(axis=(0, 2, 3)) if self.needs_input_grad[2] else None
        return gx, gw, gb


class ConvTranspose2d(Function):
    def forward(self, x, w, b=None, stride=1, pad=0, output_padding=0):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"conv_transpose2d weight {w.shape} does not fit input {x.shape}")
        n, _, h, wd = x.shape
        cout, k = w.shape[1], w.shape[2]
        ho = (h - 1) * stride - 2 * pad + k + output_padding
        wo = (wd - 1) * stride - 2 * pad + k + output_padding
        if ho < 1 or wo < 1:
            raise ShapeError("conv_transpose2d output would be empty")
        out = np.ascontiguousarray(_conv_input_grad(x, w, (n, cout, ho, wo), stride, pad))
        if b is not None:
            if b.shape != (cout,):
                raise ShapeError(f"Bias shape {b.shape} does not match {cout} channels")
            out += b.reshape(1, -1, 1, 1)
        self.save_for_backward(x, w, stride, pad)
        return out

    def backward(self, grad):
        x, w, stride, pad = self.saved
        gx = _conv_forward(grad, w, stride, pad) if self.needs_input_grad[0] else None
        if gx is not None and gx.shape != x.shape:
            gx = gx[:, :, : x.shape[2], : x.shape[3]]
        gw = (
            _conv_weight_grad(x, grad, w.shape[2], stride, pad)
            if self.needs_input_grad[1] else None
        )
        gb = grad.sum(axis=(0, 2, 3)) if self.needs_input_grad[2] else None
        return gx, gw, gb


def conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           pad: int = 0) -> Tensor:
    """Cross-correlation of an (N,Cin,H,W) batch with a (Cout,Cin,K,K) kernel."""
    return Conv2d.apply(x, w, bias, stride=stride, pad=pad)


def conv_transpose2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
                     pad: int = 0, output_padding: int = 0) -> Tensor:
    """
    Adjoint of conv2d with respect to its input.

    The weight has layout (Cin, Cout, K, K); the output extent is
    (H - 1) * stride - 2 * pad + K + output_padding.
    """
    return ConvTranspose2d.apply(x, w, bias, stride=stride, pad=pad,
                                 output_padding=output_padding)


@dataclass
class BatchNormState:
    """Running statistics of one batchnorm layer."""
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    update: bool = True

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, training=True, state=None):
        if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
            raise ShapeError(
                f"batchnorm2d channel mismatch: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
            )
        eps = state.eps if state is not None else BN_EPS
        shape = (1, -1, 1, 1)
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count < 1:
                raise ShapeError("batchnorm2d needs at least one value per channel")
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if state is not None and state.update:
                unbiased = var * (count / (count - 1)) if count > 1 else var
                m = state.momentum
                state.running_mean[...] = (1 - m) * state.running_mean + m * mu
                state.running_var[...] = (1 - m) * state.running_var + m * unbiased
        else:
            if state is None:
                raise ValueError("eval-mode batchnorm needs running statistics")
            mu, var = state.running_mean, state.running_var
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu.reshape(shape)) * inv_std.reshape(shape)
        self.save_for_backward(xhat, inv_std, gamma, training)
        return gamma.reshape(shape) * xhat + beta.reshape(shape)

    def backward(self, grad):
        xhat, inv_std, gamma, training = self.saved
        shape = (1, -1, 1, 1)
        gx = None
        if self.needs_input_grad[0]:
            dxhat = grad * gamma.reshape(shape)
            if training:
                count = grad.shape[0] * grad.shape[2] * grad.shape[3]
                gx = (inv_std.reshape(shape) / count) * (
                    count * dxhat
                    - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                )
            else:
                gx = dxhat * inv_std.reshape(shape)
        ggamma = (grad * xhat).sum(axis=(0, 2, 3)) if self.needs_input_grad[1] else None
        gbeta = grad.sum(axis=(0, 2, 3)) if self.needs_input_grad[2] else None
        return gx, ggamma, gbeta


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, training: bool = True,
                state: Optional[BatchNormState] = None) -> Tensor:
    """
    Per-channel batch normalization of an (N,C,H,W) tensor.

    Train mode normalizes with batch statistics and, when ``state.update`` is
    set, folds them into the running statistics. Eval mode uses the running
    statistics.
    """
    return BatchNorm2d.apply(x, gamma, beta, training=training, state=state)


class ReLU(Function):
    def forward(self, x):
        mask = x > 0
        self.save_for_backward(mask)
        return np.where(mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        (mask,) = self.saved
        return (grad * mask,)


class LeakyReLU(Function):
    def forward(self, x, alpha=0.2):
        slope = np.where(x > 0, 1.0, alpha).astype(x.dtype)
        self.save_for_backward(slope)
        return x * slope

    def backward(self, grad):
        (slope,) = self.saved
        return (grad * slope,)


class Tanh(Function):
    def forward(self, x):
        out = np.tanh(x)
        self.save_for_backward(out)
        return out

    def backward(self, grad):
        (out,) = self.saved
        return (grad * (1 - out * out),)


class Sigmoid(Function):
    def forward(self, x):
        out = expit(x)
        self.save_for_backward(out)
        return out

    def backward(self, grad):
        (out,) = self.saved
        return (grad * out * (1 - out),)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    """Leaky ReLU; the derivative at exactly zero is ``alpha``."""
    return LeakyReLU.apply(x, alpha=alpha)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


_ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(x: Tensor, kind: str, alpha: float = 0.2) -> Tensor:
    """
    Apply an elementwise activation by name.

    Args:
        x: Input tensor
        kind: One of relu, leaky_relu, tanh, sigmoid
        alpha: Negative slope for leaky_relu
    """
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"Unknown activation: {kind}")
    if kind == "leaky_relu":
        return fn(x, alpha)
    return fn(x)


class BinaryCrossEntropy(Function):
    def forward(self, pred, target, eps=BCE_EPS):
        inside = (pred >= eps) & (pred <= 1 - eps)
        p = np.clip(pred, eps, 1 - eps)
        losses = target * np.log(p) + (1 - target) * np.log(1 - p)
        self.save_for_backward(p, target, inside)
        return np.asarray(-losses.mean(), dtype=pred.dtype)

    def backward(self, grad):
        p, target, inside = self.saved
        g = grad * (p - target) / (p * (1 - p)) / p.size
        return g * inside, None


def bce(pred: Tensor, target: Union[Tensor, float, np.ndarray]) -> Tensor:
    """
    Mean binary cross-entropy of probabilities against 0/1 targets.

    Predictions are clamped to [1e-7, 1 - 1e-7]; the gradient is zero where
    the clamp is active.

    Raises:
        ShapeError: If targets are not all 0 or 1 or do not broadcast
    """
    target_t = _as_tensor(target, pred)
    values = target_t.data
    if not np.all((values == 0) | (values == 1)):
        raise ShapeError("bce targets must be 0 or 1")
    try:
        values = np.broadcast_to(values, pred.shape)
    except ValueError:
        raise ShapeError(f"bce target shape {target_t.shape} does not fit {pred.shape}")
    return BinaryCrossEntropy.apply(pred, Tensor(np.array(values, dtype=pred.dtype)))


__all__ = [
    "BN_EPS",
    "BN_MOMENTUM",
    "BCE_EPS",
    "BatchNormState",
    "activation",
    "batchnorm2d",
    "bce",
    "conv2d",
    "conv_output_size",
    "conv_transpose2d",
    "leaky_relu",
    "relu",
    "sigmoid",
    "tanh",
]
