"""Kernel backend selection.

Hot kernels (convolution, deformable sampling) ship in two equivalent
implementations: numba-jitted loops and pure-numpy vectorized code. The
DEFOCR_BACKEND environment variable picks one at import time:

    DEFOCR_BACKEND=numba   require numba (error if unavailable)
    DEFOCR_BACKEND=numpy   pure numpy, no JIT
    unset / "auto"         numba when importable, else numpy
"""

import os

from .errors import ConfigError

_requested = os.environ.get("DEFOCR_BACKEND", "auto").strip().lower() or "auto"

if _requested not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"DEFOCR_BACKEND must be 'numba', 'numpy', or 'auto', got {_requested!r}"
    )

if _requested == "numpy":
    NUMBA_AVAILABLE = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        if _requested == "numba":
            raise ConfigError(
                "DEFOCR_BACKEND=numba but numba is not importable"
            ) from None
        NUMBA_AVAILABLE = False

BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"
