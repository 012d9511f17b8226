"""splitmix64 streams.

Every random decision in the package (circuit structure, parameter init,
shot sampling, shuffling) is drawn from splitmix64 so results are portable
and reproducible from a single 64-bit seed. The generator is counter based,
which lets :func:`uniforms` produce long runs of draws with numpy in one go.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 output function applied to a raw 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into a seed, giving an independent substream seed.

    Used for per-config seeds and for per-evaluation shot-noise streams,
    e.g. ``derive_seed(seed, sample, param, sign)``.
    """
    h = mix64((seed & MASK64) + GOLDEN)
    for k in keys:
        h = mix64((h ^ (k & MASK64)) + GOLDEN)
    return h


class SplitMix64:
    """Sequential splitmix64 generator."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        # modulo reduction; bias is negligible for the small n used here
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniforms(self, size: int) -> np.ndarray:
        out = uniforms(self.state, size)
        self.state = (self.state + GOLDEN * size) & MASK64
        return out


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def u64_stream(state: int, size: int) -> np.ndarray:
    """The next ``size`` outputs of a generator whose state is ``state``."""
    steps = np.arange(1, size + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(state & MASK64) + steps * np.uint64(GOLDEN)
        return _mix64_array(z)


def uniforms(state: int, size: int) -> np.ndarray:
    """Uniform doubles in [0, 1) from 53-bit mantissa scaling."""
    return (u64_stream(state, size) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
