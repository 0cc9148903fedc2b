"""Backend dispatch for the hot array kernels.

The active implementation is chosen once at import from the resolved
backend (see defocr.backend). Both implementations share signatures and
semantics; tests assert their outputs agree to float64 roundoff.
"""

from ..backend import BACKEND

if BACKEND == "numba":
    from . import numba_impl as _impl
else:
    from . import numpy_impl as _impl

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
deform_forward = _impl.deform_forward
deform_backward = _impl.deform_backward


def warmup() -> None:
    """Run each kernel once on tiny inputs (triggers JIT compilation)."""
    import numpy as np

    xp = np.zeros((1, 5, 5))
    w = np.zeros((1, 1, 3, 3))
    b = np.zeros(1)
    out = conv2d_forward(xp, w, b, 1)
    conv2d_backward(xp, w, out, 1)
    off = np.zeros((18, 3, 3))
    out, sampled = deform_forward(xp[:, :3, :3], w, b, off, 1, 1)
    deform_backward(xp[:, :3, :3], w, off, out, sampled, 1, 1)
