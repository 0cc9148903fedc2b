"""2D convolution ops: standard, offset prediction, and deformable.

The deformable variant samples each kernel tap at a learned fractional
(dy, dx) displacement via bilinear interpolation, so the receptive field
bends with the input. With all offsets zero it reproduces the standard
convolution exactly, which is both the initial training state and a
tested invariant.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError


@dataclass
class ConvKernel:
    """Weights [C_out, C_in, k, k] plus bias, stride, and zero padding."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        if self.weights.ndim != 4:
            raise DimensionError(
                f"kernel weights must be 4-D, got shape {self.weights.shape}"
            )
        c_out, _, kh, kw = self.weights.shape
        if kh != kw:
            raise ConfigError(f"kernel must be square, got {kh}x{kw}")
        if kh % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kh}")
        if self.bias.shape != (c_out,):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match {c_out} output channels"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ConfigError(f"padding must be nonnegative, got {self.padding}")

    @property
    def k(self) -> int:
        return self.weights.shape[2]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class ConvCtx:
    """Saved forward state for conv2d_backward."""

    xp: np.ndarray
    kernel: ConvKernel
    in_shape: tuple


@dataclass
class DeformCtx:
    """Saved forward state for deform_conv_backward."""

    x: np.ndarray
    kernel: ConvKernel
    offsets: np.ndarray
    sampled: np.ndarray


def bilinear_sample(map_: np.ndarray, y: float, x: float) -> float:
    """Sample map_ at fractional (y, x); outside [0,H-1]x[0,W-1] reads 0."""
    h, w = map_.shape
    y0 = math.floor(y)
    x0 = math.floor(x)
    fy = y - y0
    fx = x - x0
    total = 0.0
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        yi = y0 + dy
        if yi < 0 or yi >= h:
            continue
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xj = x0 + dx
            if 0 <= xj < w:
                total += wy * wx * float(map_[yi, xj])
    return total


def _check_input(x: np.ndarray, kernel: ConvKernel) -> tuple:
    if x.ndim != 3:
        raise DimensionError(f"input must be [C_in, H, W], got shape {x.shape}")
    if x.shape[0] != kernel.c_in:
        raise DimensionError(
            f"input has {x.shape[0]} channels, kernel expects {kernel.c_in}"
        )
    h, w = x.shape[1], x.shape[2]
    k, s, p = kernel.k, kernel.stride, kernel.padding
    if (h + 2 * p - k) % s != 0 or (w + 2 * p - k) % s != 0:
        raise ConfigError(
            f"conv output size is not integral for input {h}x{w} "
            f"with k={k}, stride={s}, padding={p}"
        )
    h_out = (h + 2 * p - k) // s + 1
    w_out = (w + 2 * p - k) // s + 1
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"conv output size {h_out}x{w_out} is empty")
    return h_out, w_out


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def conv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Standard cross-correlation with zero padding plus bias."""
    out, _ = conv2d_ctx(x, kernel)
    return out


def conv2d_ctx(x: np.ndarray, kernel: ConvKernel):
    """conv2d that also returns the context needed for the backward pass."""
    _check_input(x, kernel)
    xp = _pad(x, kernel.padding)
    out = kernels.conv2d_forward(xp, kernel.weights, kernel.bias, kernel.stride)
    return out, ConvCtx(xp=xp, kernel=kernel, in_shape=x.shape)


def conv2d_backward(ctx: ConvCtx, grad_out: np.ndarray):
    """Gradients w.r.t. input, weights, and bias."""
    kernel = ctx.kernel
    grad_xp, grad_w, grad_b = kernels.conv2d_backward(
        ctx.xp, kernel.weights, np.ascontiguousarray(grad_out), kernel.stride
    )
    p = kernel.padding
    if p:
        grad_x = grad_xp[:, p:-p, p:-p]
    else:
        grad_x = grad_xp
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def offset_predict(x: np.ndarray, offset_kernel: ConvKernel) -> np.ndarray:
    """Predict the per-tap (dy, dx) offset field with a plain convolution."""
    k = offset_kernel.k
    if offset_kernel.c_out != 2 * k * k:
        raise ConfigError(
            f"offset kernel has {offset_kernel.c_out} output channels, "
            f"expected {2 * k * k} for k={k}"
        )
    return conv2d(x, offset_kernel)


def deform_conv(x: np.ndarray, kernel: ConvKernel, offsets: np.ndarray) -> np.ndarray:
    """Deformable cross-correlation with per-tap learned displacements."""
    out, _ = deform_conv_ctx(x, kernel, offsets)
    return out


def deform_conv_ctx(x: np.ndarray, kernel: ConvKernel, offsets: np.ndarray):
    """deform_conv that also returns the backward context."""
    h_out, w_out = _check_input(x, kernel)
    k = kernel.k
    if offsets.shape != (2 * k * k, h_out, w_out):
        raise DimensionError(
            f"offset field shape {offsets.shape} does not match "
            f"({2 * k * k}, {h_out}, {w_out})"
        )
    x = np.ascontiguousarray(x)
    offsets = np.ascontiguousarray(offsets)
    out, sampled = kernels.deform_forward(
        x, kernel.weights, kernel.bias, offsets, kernel.stride, kernel.padding
    )
    return out, DeformCtx(x=x, kernel=kernel, offsets=offsets, sampled=sampled)


def deform_conv_backward(ctx: DeformCtx, grad_out: np.ndarray):
    """Gradients w.r.t. input, weights, bias, and the offset field."""
    kernel = ctx.kernel
    return kernels.deform_backward(
        ctx.x,
        kernel.weights,
        ctx.offsets,
        np.ascontiguousarray(grad_out),
        ctx.sampled,
        kernel.stride,
        kernel.padding,
    )
