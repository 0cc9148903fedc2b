"""Residual CNN backbone that collapses a word image into a feature sequence.

Four stages, one residual block each; later stages swap their 3x3 convs
for deformable ones with zero-initialized offset predictors. The final
map is mean-pooled over height into a left-to-right sequence.

Stride-2 blocks pre-fit their input (one top/left zero row for 3x3, a
bottom/right crop for the 1x1 shortcut) so every conv sees an exactly
integral output size while even dims halve per stage.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conv import (
    ConvKernel,
    conv2d_backward,
    conv2d_ctx,
    deform_conv_backward,
    deform_conv_ctx,
)
from .errors import ConfigError, DimensionError
from .rng import SplitMix64


@dataclass
class BackboneConfig:
    channels: tuple = (16, 32, 64, 64)
    strides: tuple = (1, 2, 2, 2)
    deformable_stages: frozenset = frozenset({3, 4})

    def __post_init__(self) -> None:
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        self.deformable_stages = frozenset(int(i) for i in self.deformable_stages)
        if len(self.channels) != len(self.strides):
            raise ConfigError(
                f"{len(self.channels)} stage channels but {len(self.strides)} strides"
            )
        if not self.channels:
            raise ConfigError("backbone needs at least one stage")
        if any(c < 1 for c in self.channels):
            raise ConfigError(f"stage channels must be positive: {self.channels}")
        if any(s not in (1, 2) for s in self.strides):
            raise ConfigError(f"stage strides must be 1 or 2: {self.strides}")
        valid = set(range(1, len(self.channels) + 1))
        if not self.deformable_stages <= valid:
            raise ConfigError(
                f"deformable_stages {sorted(self.deformable_stages)} not a subset "
                f"of stages {sorted(valid)}"
            )


@dataclass
class BlockParams:
    conv1: ConvKernel
    conv2: ConvKernel
    shortcut: Optional[ConvKernel]
    offset1: Optional[ConvKernel]
    offset2: Optional[ConvKernel]
    deformable: bool


@dataclass
class BackboneParams:
    stem: ConvKernel
    blocks: list


def _xavier_kernel(
    rng: SplitMix64, c_out: int, c_in: int, k: int, stride: int, padding: int
) -> ConvKernel:
    fan_in = c_in * k * k
    fan_out = c_out * k * k
    a = float(np.sqrt(6.0 / (fan_in + fan_out)))
    w = rng.uniform_array((c_out, c_in, k, k), -a, a)
    return ConvKernel(w, np.zeros(c_out), stride, padding)


def _zero_kernel(c_out: int, c_in: int, k: int, stride: int, padding: int) -> ConvKernel:
    return ConvKernel(
        np.zeros((c_out, c_in, k, k)), np.zeros(c_out), stride, padding
    )


def init_backbone(rng: SplitMix64, config: BackboneConfig) -> BackboneParams:
    """Xavier-uniform conv weights, zero biases, all-zero offset kernels."""
    c0 = config.channels[0]
    stem = _xavier_kernel(rng, c0, 1, 3, 1, 1)
    blocks = []
    c_in = c0
    for i, (c_out, stride) in enumerate(zip(config.channels, config.strides)):
        deformable = (i + 1) in config.deformable_stages
        # Stride-2 convs get padding 0; the block pre-fits the input.
        conv1 = _xavier_kernel(rng, c_out, c_in, 3, stride, 1 if stride == 1 else 0)
        conv2 = _xavier_kernel(rng, c_out, c_out, 3, 1, 1)
        shortcut = None
        if c_in != c_out or stride != 1:
            shortcut = _xavier_kernel(rng, c_out, c_in, 1, stride, 0)
        offset1 = offset2 = None
        if deformable:
            offset1 = _zero_kernel(18, c_in, 3, stride, 1 if stride == 1 else 0)
            offset2 = _zero_kernel(18, c_out, 3, 1, 1)
        blocks.append(
            BlockParams(conv1, conv2, shortcut, offset1, offset2, deformable)
        )
        c_in = c_out
    return BackboneParams(stem=stem, blocks=blocks)


def _fit(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Shape the input so a stride-2 pad-0 conv halves even dims exactly."""
    if stride == 1:
        return x
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise ConfigError(
            f"stride-2 stage needs even input dims, got {x.shape[1]}x{x.shape[2]}"
        )
    if k == 3:
        return np.pad(x, ((0, 0), (1, 0), (1, 0)))
    if k == 1:
        return np.ascontiguousarray(x[:, :-1, :-1])
    raise ConfigError(f"unsupported kernel size {k} for a strided block conv")


def _unfit(grad: np.ndarray, k: int, stride: int, shape: tuple) -> np.ndarray:
    """Map a gradient on the fitted input back to the original input."""
    if stride == 1:
        return grad
    if k == 3:
        return np.ascontiguousarray(grad[:, 1:, 1:])
    out = np.zeros(shape)
    out[:, :-1, :-1] = grad
    return out


def _block_conv(x: np.ndarray, kernel: ConvKernel, offset_kernel):
    """One block conv: pre-fit, predict offsets if deformable, run, save ctx."""
    xf = _fit(x, kernel.k, kernel.stride)
    if offset_kernel is None:
        out, ctx = conv2d_ctx(xf, kernel)
        return out, ("std", ctx, x.shape, kernel.k, kernel.stride)
    off_f = _fit(x, offset_kernel.k, offset_kernel.stride)
    offsets, octx = conv2d_ctx(off_f, offset_kernel)
    out, dctx = deform_conv_ctx(xf, kernel, offsets)
    return out, ("def", dctx, octx, x.shape, kernel.k, kernel.stride)


def _block_conv_backward(tag, grad_out: np.ndarray, grads: dict, prefix: str):
    """Backward for _block_conv; accumulates kernel grads, returns grad_x."""
    if tag[0] == "std":
        _, ctx, x_shape, k, stride = tag
        gx, gw, gb = conv2d_backward(ctx, grad_out)
        _acc(grads, prefix + ".weights", gw)
        _acc(grads, prefix + ".bias", gb)
        return _unfit(gx, k, stride, x_shape)
    _, dctx, octx, x_shape, k, stride = tag
    gx, gw, gb, goff = deform_conv_backward(dctx, grad_out)
    _acc(grads, prefix + ".weights", gw)
    _acc(grads, prefix + ".bias", gb)
    gx = _unfit(gx, k, stride, x_shape)
    gxo, gow, gob = conv2d_backward(octx, goff)
    _acc(grads, prefix + "_offset.weights", gow)
    _acc(grads, prefix + "_offset.bias", gob)
    return gx + _unfit(gxo, octx.kernel.k, octx.kernel.stride, x_shape)


def _acc(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g


def residual_block(x: np.ndarray, params: BlockParams):
    """y = relu(conv2(relu(conv1(x))) + shortcut(x)); returns (y, ctx)."""
    h1, tag1 = _block_conv(x, params.conv1, params.offset1 if params.deformable else None)
    a1 = np.maximum(h1, 0.0)
    h2, tag2 = _block_conv(a1, params.conv2, params.offset2 if params.deformable else None)
    if params.shortcut is not None:
        xf = _fit(x, 1, params.shortcut.stride)
        sc, sctx = conv2d_ctx(xf, params.shortcut)
    else:
        if x.shape != h2.shape:
            raise DimensionError(
                f"residual add needs a shortcut: {x.shape} vs {h2.shape}"
            )
        sc, sctx = x, None
    pre = h2 + sc
    y = np.maximum(pre, 0.0)
    ctx = (params, x.shape, tag1, h1, tag2, sctx, pre)
    return y, ctx


def residual_block_backward(ctx, grad_y: np.ndarray, grads: dict, prefix: str):
    """Gradient w.r.t. the block input; parameter grads keyed under prefix."""
    params, x_shape, tag1, h1, tag2, sctx, pre = ctx
    g = grad_y * (pre > 0.0)
    ga1 = _block_conv_backward(tag2, g, grads, prefix + ".conv2")
    gh1 = ga1 * (h1 > 0.0)
    gx = _block_conv_backward(tag1, gh1, grads, prefix + ".conv1")
    if params.shortcut is not None:
        gsf, gw, gb = conv2d_backward(sctx, g)
        _acc(grads, prefix + ".shortcut.weights", gw)
        _acc(grads, prefix + ".shortcut.bias", gb)
        gx = gx + _unfit(gsf, 1, params.shortcut.stride, x_shape)
    else:
        gx = gx + g
    return gx


def backbone_forward(image: np.ndarray, params: BackboneParams):
    """Image [1, H, W] to sequence [T, C_last]; returns (seq, ctx).

    The ctx also exposes the final feature map for saliency use.
    """
    if image.ndim != 3 or image.shape[0] != 1:
        raise DimensionError(f"image must be [1, H, W], got shape {image.shape}")
    h, stem_ctx = conv2d_ctx(image, params.stem)
    block_ctxs = []
    for block in params.blocks:
        h, bctx = residual_block(h, block)
        block_ctxs.append(bctx)
    seq = h.mean(axis=1).T
    return seq, (stem_ctx, block_ctxs, h)


def backbone_backward(ctx, grad_seq: np.ndarray, grads: dict, prefix: str = "backbone"):
    """Returns (grad_image, grad_final_map); parameter grads keyed under prefix."""
    stem_ctx, block_ctxs, final_map = ctx
    h_f = final_map.shape[1]
    grad_map = np.repeat(grad_seq.T[:, None, :], h_f, axis=1) / h_f
    g = grad_map
    for i in range(len(block_ctxs) - 1, -1, -1):
        g = residual_block_backward(
            block_ctxs[i], g, grads, f"{prefix}.stage{i + 1}"
        )
    gimg, gw, gb = conv2d_backward(stem_ctx, g)
    _acc(grads, prefix + ".stem.weights", gw)
    _acc(grads, prefix + ".stem.bias", gb)
    return gimg, grad_map


def final_feature_map(ctx) -> np.ndarray:
    """The last stage's activation map, [C, H_f, W_f]."""
    return ctx[2]


def named_backbone_params(params: BackboneParams, prefix: str = "backbone"):
    """Yield (name, array) pairs in a stable traversal order."""
    yield prefix + ".stem.weights", params.stem.weights
    yield prefix + ".stem.bias", params.stem.bias
    for i, block in enumerate(params.blocks):
        base = f"{prefix}.stage{i + 1}"
        yield base + ".conv1.weights", block.conv1.weights
        yield base + ".conv1.bias", block.conv1.bias
        if block.deformable:
            yield base + ".conv1_offset.weights", block.offset1.weights
            yield base + ".conv1_offset.bias", block.offset1.bias
        yield base + ".conv2.weights", block.conv2.weights
        yield base + ".conv2.bias", block.conv2.bias
        if block.deformable:
            yield base + ".conv2_offset.weights", block.offset2.weights
            yield base + ".conv2_offset.bias", block.offset2.bias
        if block.shortcut is not None:
            yield base + ".shortcut.weights", block.shortcut.weights
            yield base + ".shortcut.bias", block.shortcut.bias
