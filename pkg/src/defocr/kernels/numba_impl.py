"""Numba-jitted kernel implementations (default path).

Same contracts as kernels.numpy_impl. The convolution GEMMs still go
through np.dot (BLAS) inside the jitted functions; the loops handle the
im2col/col2im data movement and the deformable bilinear taps, which is
where the interpreter overhead lives.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(xp, k, stride, h_out, w_out):
    c_in = xp.shape[0]
    col = np.empty((c_in * k * k, h_out * w_out))
    r = 0
    for ci in range(c_in):
        for ky in range(k):
            for kx in range(k):
                i = 0
                for oy in range(h_out):
                    y = oy * stride + ky
                    for ox in range(w_out):
                        col[r, i] = xp[ci, y, ox * stride + kx]
                        i += 1
                r += 1
    return col


@njit(cache=True)
def conv2d_forward(xp, w, b, stride):
    c_out, c_in, k, _ = w.shape
    h_out = (xp.shape[1] - k) // stride + 1
    w_out = (xp.shape[2] - k) // stride + 1
    col = _im2col(xp, k, stride, h_out, w_out)
    w2 = np.ascontiguousarray(w.reshape(c_out, c_in * k * k))
    out2 = np.dot(w2, col)
    out = np.empty((c_out, h_out, w_out))
    for co in range(c_out):
        i = 0
        for oy in range(h_out):
            for ox in range(w_out):
                out[co, oy, ox] = out2[co, i] + b[co]
                i += 1
    return out


@njit(cache=True)
def conv2d_backward(xp, w, grad_out, stride):
    c_out, c_in, k, _ = w.shape
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    p = h_out * w_out
    col = _im2col(xp, k, stride, h_out, w_out)
    g2 = np.ascontiguousarray(grad_out.reshape(c_out, p))
    g2t = np.ascontiguousarray(g2.T)
    grad_w = np.ascontiguousarray(np.dot(col, g2t).T).reshape(w.shape).copy()
    grad_b = np.zeros(c_out)
    for co in range(c_out):
        s = 0.0
        for i in range(p):
            s += g2[co, i]
        grad_b[co] = s
    w2t = np.ascontiguousarray(w.reshape(c_out, c_in * k * k).T)
    gcol = np.dot(w2t, g2)
    grad_xp = np.zeros_like(xp)
    r = 0
    for ci in range(c_in):
        for ky in range(k):
            for kx in range(k):
                i = 0
                for oy in range(h_out):
                    y = oy * stride + ky
                    for ox in range(w_out):
                        grad_xp[ci, y, ox * stride + kx] += gcol[r, i]
                        i += 1
                r += 1
    return grad_xp, grad_w, grad_b


@njit(cache=True)
def deform_forward(x, w, b, off, stride, pad):
    c_out, c_in, k, _ = w.shape
    h, wd = x.shape[1], x.shape[2]
    k2 = k * k
    h_out, w_out = off.shape[1], off.shape[2]
    p = h_out * w_out
    sampled = np.zeros((c_in, k2, p))
    for n in range(k2):
        ky = n // k
        kx = n % k
        for oy in range(h_out):
            for ox in range(w_out):
                i = oy * w_out + ox
                sy = oy * stride - pad + ky + off[2 * n, oy, ox]
                sx = ox * stride - pad + kx + off[2 * n + 1, oy, ox]
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                fy = sy - y0
                fx = sx - x0
                y1 = y0 + 1
                x1 = x0 + 1
                wy0 = 1.0 - fy
                wx0 = 1.0 - fx
                iny0 = (y0 >= 0) and (y0 < h)
                iny1 = (y1 >= 0) and (y1 < h)
                inx0 = (x0 >= 0) and (x0 < wd)
                inx1 = (x1 >= 0) and (x1 < wd)
                for ci in range(c_in):
                    s = 0.0
                    if iny0 and inx0:
                        s += wy0 * wx0 * x[ci, y0, x0]
                    if iny0 and inx1:
                        s += wy0 * fx * x[ci, y0, x1]
                    if iny1 and inx0:
                        s += fy * wx0 * x[ci, y1, x0]
                    if iny1 and inx1:
                        s += fy * fx * x[ci, y1, x1]
                    sampled[ci, n, i] = s
    w2 = np.ascontiguousarray(w.reshape(c_out, c_in * k2))
    out2 = np.dot(w2, sampled.reshape(c_in * k2, p))
    out = np.empty((c_out, h_out, w_out))
    for co in range(c_out):
        i = 0
        for oy in range(h_out):
            for ox in range(w_out):
                out[co, oy, ox] = out2[co, i] + b[co]
                i += 1
    return out, sampled


@njit(cache=True)
def deform_backward(x, w, off, grad_out, sampled, stride, pad):
    c_out, c_in, k, _ = w.shape
    h, wd = x.shape[1], x.shape[2]
    k2 = k * k
    h_out, w_out = grad_out.shape[1], grad_out.shape[2]
    p = h_out * w_out
    g2 = np.ascontiguousarray(grad_out.reshape(c_out, p))
    sam2 = sampled.reshape(c_in * k2, p)
    g2t = np.ascontiguousarray(g2.T)
    grad_w = np.ascontiguousarray(np.dot(sam2, g2t).T).reshape(w.shape).copy()
    grad_b = np.zeros(c_out)
    for co in range(c_out):
        s = 0.0
        for i in range(p):
            s += g2[co, i]
        grad_b[co] = s
    w2t = np.ascontiguousarray(w.reshape(c_out, c_in * k2).T)
    gsamp = np.dot(w2t, g2)
    grad_x = np.zeros_like(x)
    grad_off = np.zeros_like(off)
    for n in range(k2):
        ky = n // k
        kx = n % k
        for oy in range(h_out):
            for ox in range(w_out):
                i = oy * w_out + ox
                sy = oy * stride - pad + ky + off[2 * n, oy, ox]
                sx = ox * stride - pad + kx + off[2 * n + 1, oy, ox]
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                fy = sy - y0
                fx = sx - x0
                y1 = y0 + 1
                x1 = x0 + 1
                wy0 = 1.0 - fy
                wx0 = 1.0 - fx
                iny0 = (y0 >= 0) and (y0 < h)
                iny1 = (y1 >= 0) and (y1 < h)
                inx0 = (x0 >= 0) and (x0 < wd)
                inx1 = (x1 >= 0) and (x1 < wd)
                gy = 0.0
                gx = 0.0
                for ci in range(c_in):
                    g = gsamp[ci * k2 + n, i]
                    if iny0 and inx0:
                        v = x[ci, y0, x0]
                        grad_x[ci, y0, x0] += g * wy0 * wx0
                        gy -= g * wx0 * v
                        gx -= g * wy0 * v
                    if iny0 and inx1:
                        v = x[ci, y0, x1]
                        grad_x[ci, y0, x1] += g * wy0 * fx
                        gy -= g * fx * v
                        gx += g * wy0 * v
                    if iny1 and inx0:
                        v = x[ci, y1, x0]
                        grad_x[ci, y1, x0] += g * fy * wx0
                        gy += g * wx0 * v
                        gx -= g * fy * v
                    if iny1 and inx1:
                        v = x[ci, y1, x1]
                        grad_x[ci, y1, x1] += g * fy * fx
                        gy += g * fx * v
                        gx += g * fy * v
                # Subgradient 0 exactly on the integer lattice.
                if fy == 0.0:
                    gy = 0.0
                if fx == 0.0:
                    gx = 0.0
                grad_off[2 * n, oy, ox] = gy
                grad_off[2 * n + 1, oy, ox] = gx
    return grad_x, grad_w, grad_b, grad_off
