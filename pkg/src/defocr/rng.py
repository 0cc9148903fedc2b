"""Deterministic, portable random number generation (splitmix64).

Every random draw in the package flows through this generator so that a run
is fully reproducible from a single 64-bit seed, independent of platform or
library versions. The stream for state s is output(s + i*GOLDEN) for i = 1, 2,
..., so batched draws can be vectorized and stay bit-identical to sequential
single draws.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream: identical seeds give identical draws everywhere."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix(self.state)

    def derive(self, index: int) -> "SplitMix64":
        """Independent child stream for (seed, index); does not advance self."""
        return SplitMix64(_mix((self.state ^ _GOLDEN) + ((index & _MASK64) * _GOLDEN)))

    def _raw_block(self, n: int) -> np.ndarray:
        """Next n outputs as uint64, bit-identical to n next_u64() calls."""
        idx = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self.state) + idx * np.uint64(_GOLDEN)
        z = states
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        if n:
            self.state = int(states[-1])
        return z

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return (self._raw_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def uniform_array(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        return (lo + (hi - lo) * self.uniforms(n)).reshape(shape)

    def normal(self) -> float:
        """Standard normal draw (Box-Muller; consumes two uniforms)."""
        u1 = 1.0 - self.uniform()  # (0, 1]: keeps log finite
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniforms(2 * n)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        out = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return out.reshape(shape)

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
