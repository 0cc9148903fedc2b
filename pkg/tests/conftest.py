import pytest

from defocr.kernels import warmup


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # One tiny call per kernel so JIT compilation never lands inside a
    # timed test.
    warmup()
