"""Dense float64 numerics shared by every layer.

Arrays are plain numpy float64 ndarrays. Each differentiable operation comes
as a forward producing any cached intermediates its paired backward needs,
and the backward is verified against `finite_diff_grad` in the test suite.
"""

from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """C[i,j] = sum_p A[i,p] * B[p,j], with an explicit shape check."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shapes do not chain: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return a @ b


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for overflow safety."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(grad_out: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Gradient through softmax_rows given its output."""
    dot = (grad_out * out).sum(axis=-1, keepdims=True)
    return out * (grad_out - dot)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Subgradient 0 at exactly x == 0.
    return grad_out * (x > 0.0)


def layer_norm(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float
) -> np.ndarray:
    """Normalize the last axis to zero mean / unit population variance.

    y = gain * (x - mean) / sqrt(var + eps) + bias
    """
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    xhat = (x - mean) / np.sqrt(var + eps)
    return gain * xhat + bias


def layer_norm_backward(
    grad_out: np.ndarray,
    x: np.ndarray,
    gain: np.ndarray,
    eps: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_gain, grad_bias); sums parameter grads over rows."""
    n = x.shape[-1]
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv

    grad_gain = (grad_out * xhat).reshape(-1, n).sum(axis=0)
    grad_bias = grad_out.reshape(-1, n).sum(axis=0)

    g = grad_out * gain
    grad_x = inv * (
        g
        - g.mean(axis=-1, keepdims=True)
        - xhat * (g * xhat).mean(axis=-1, keepdims=True)
    )
    return grad_x, grad_gain, grad_bias


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ConfigError(f"finite_diff_grad step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(g: np.ndarray, g_ref: np.ndarray) -> float:
    """max_i |g - g_ref| / max(1, |g|, |g_ref|); stable near zero."""
    g = np.asarray(g, dtype=np.float64)
    g_ref = np.asarray(g_ref, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(g), np.abs(g_ref)))
    return float(np.max(np.abs(g - g_ref) / denom)) if g.size else 0.0
