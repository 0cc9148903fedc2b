"""Pure-numpy kernel implementations (fallback path, no JIT).

Convolutions run as im2col + BLAS matmul; deformable sampling uses fancy
indexing with validity masks; the input-gradient scatter uses np.add.at.
Signatures and float semantics match kernels.numba_impl.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _im2col(xp: np.ndarray, k: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    c_in = xp.shape[0]
    s0, s1, s2 = xp.strides
    view = as_strided(
        xp,
        shape=(c_in, k, k, h_out, w_out),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
    )
    return view.reshape(c_in * k * k, h_out * w_out)


def conv2d_forward(xp: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Cross-correlate a pre-padded input; returns [C_out, H_out, W_out]."""
    c_out, c_in, k, _ = w.shape
    h_out = (xp.shape[1] - k) // stride + 1
    w_out = (xp.shape[2] - k) // stride + 1
    col = _im2col(xp, k, stride, h_out, w_out)
    out = w.reshape(c_out, c_in * k * k) @ col + b[:, None]
    return out.reshape(c_out, h_out, w_out)


def conv2d_backward(xp: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int):
    """Gradients w.r.t. the padded input, weights, and bias."""
    c_out, c_in, k, _ = w.shape
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    p = h_out * w_out
    col = _im2col(xp, k, stride, h_out, w_out)
    g2 = grad_out.reshape(c_out, p)
    grad_w = (g2 @ col.T).reshape(w.shape)
    grad_b = g2.sum(axis=1)
    gcol = (w.reshape(c_out, c_in * k * k).T @ g2).reshape(c_in, k, k, h_out, w_out)
    grad_xp = np.zeros_like(xp)
    for ky in range(k):
        for kx in range(k):
            grad_xp[
                :,
                ky : ky + h_out * stride : stride,
                kx : kx + w_out * stride : stride,
            ] += gcol[:, ky, kx]
    return grad_xp, grad_w, grad_b


def _sample_coords(off: np.ndarray, k: int, stride: int, pad: int):
    """Absolute fractional sampling coordinates per tap per output location."""
    k2 = k * k
    h_off, w_off = off.shape[1], off.shape[2]
    tap_y = np.repeat(np.arange(k), k)
    tap_x = np.tile(np.arange(k), k)
    base_y = np.arange(h_off) * stride - pad
    base_x = np.arange(w_off) * stride - pad
    ys = tap_y[:, None, None] + base_y[None, :, None] + off[0::2]
    xs = tap_x[:, None, None] + base_x[None, None, :] + off[1::2]
    return ys.reshape(k2, -1), xs.reshape(k2, -1)


def deform_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, off: np.ndarray, stride: int, pad: int
):
    """Deformable cross-correlation; returns (out, sampled values per tap)."""
    c_out, c_in, k, _ = w.shape
    h, wd = x.shape[1], x.shape[2]
    k2 = k * k
    h_out, w_out = off.shape[1], off.shape[2]
    p = h_out * w_out
    ys, xs = _sample_coords(off, k, stride, pad)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    flat = x.reshape(c_in, h * wd)
    sampled = np.zeros((c_in, k2, p))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        yy = y0 + dy
        yok = (yy >= 0) & (yy < h)
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xx = x0 + dx
            ok = yok & (xx >= 0) & (xx < wd)
            wgt = wy * wx * ok
            idx = np.clip(yy, 0, h - 1) * wd + np.clip(xx, 0, wd - 1)
            sampled += wgt[None] * flat[:, idx]
    out = w.reshape(c_out, c_in * k2) @ sampled.reshape(c_in * k2, p) + b[:, None]
    return out.reshape(c_out, h_out, w_out), sampled


def deform_backward(
    x: np.ndarray,
    w: np.ndarray,
    off: np.ndarray,
    grad_out: np.ndarray,
    sampled: np.ndarray,
    stride: int,
    pad: int,
):
    """Gradients w.r.t. input, weights, bias, and offsets."""
    c_out, c_in, k, _ = w.shape
    h, wd = x.shape[1], x.shape[2]
    k2 = k * k
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    p = h_out * w_out
    g2 = grad_out.reshape(c_out, p)
    w2 = w.reshape(c_out, c_in * k2)
    grad_b = g2.sum(axis=1)
    grad_w = (g2 @ sampled.reshape(c_in * k2, p).T).reshape(w.shape)
    gsamp = (w2.T @ g2).reshape(c_in, k2, p)

    ys, xs = _sample_coords(off, k, stride, pad)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    flat = x.reshape(c_in, h * wd)
    grad_flat = np.zeros_like(flat)
    rows = np.arange(c_in)[:, None, None]
    dsdy = np.zeros((c_in, k2, p))
    dsdx = np.zeros((c_in, k2, p))
    for dy, wy, dwy in ((0, 1.0 - fy, -1.0), (1, fy, 1.0)):
        yy = y0 + dy
        yok = (yy >= 0) & (yy < h)
        for dx, wx, dwx in ((0, 1.0 - fx, -1.0), (1, fx, 1.0)):
            xx = x0 + dx
            ok = yok & (xx >= 0) & (xx < wd)
            idx = np.clip(yy, 0, h - 1) * wd + np.clip(xx, 0, wd - 1)
            vals = flat[:, idx]
            np.add.at(grad_flat, (rows, idx[None]), gsamp * (wy * wx * ok)[None])
            dsdy += vals * (dwy * wx * ok)[None]
            dsdx += vals * (wy * dwx * ok)[None]
    # Subgradient 0 exactly on the integer lattice.
    dsdy *= (fy != 0.0)[None]
    dsdx *= (fx != 0.0)[None]
    grad_off = np.empty_like(off)
    grad_off[0::2] = (gsamp * dsdy).sum(axis=0).reshape(k2, h_out, w_out)
    grad_off[1::2] = (gsamp * dsdx).sum(axis=0).reshape(k2, h_out, w_out)
    return grad_flat.reshape(x.shape), grad_w, grad_b, grad_off
