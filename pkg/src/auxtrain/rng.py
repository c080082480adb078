"""Deterministic random streams based on the SplitMix64 generator.

All stochastic state in this package (parameter and auxiliary-variable
initialization) is drawn from SplitMix64 streams so that any experiment is
reproducible from a single integer seed, independent of platform, process
count, or numpy version.  The generator is the standard SplitMix64 mix:

    output(k) = mix64((seed + k * 0x9E3779B97F4B7C15) mod 2**64),  k = 1, 2, ...

where ``mix64`` is the murmur-style finalizer with multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB and shifts 30/27/31.  Uniform
doubles take the top 53 bits: ``u = (output >> 11) * 2**-53`` in [0, 1).

Child streams for multi-seed experiments: ``spawn(k)`` seeds a new stream
with ``output(k + 1)`` of the parent sequence.  A stream used as a spawner
should not also be drawn from, since spawning does not advance the counter.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4B7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def mix64(z):
    """SplitMix64 finalizer on a Python int, modulo 2**64."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Counter-based SplitMix64 stream yielding uint64 words or uniform doubles."""

    def __init__(self, seed):
        self._seed = int(seed) & _MASK64
        self._count = 0

    @property
    def seed(self):
        return self._seed

    def next_u64(self):
        self._count += 1
        return mix64(self._seed + self._count * _GOLDEN)

    def spawn(self, index):
        """Child stream seeded with output ``index + 1`` of this sequence."""
        if index < 0:
            raise ValueError("spawn index must be nonnegative")
        return SplitMix64(mix64(self._seed + (index + 1) * _GOLDEN))

    def uniform(self, low=0.0, high=1.0, size=None):
        """Draw U(low, high) variates; arrays fill in row-major (C) order."""
        n = 1 if size is None else int(np.prod(size))
        ks = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = np.uint64(self._seed) + ks * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        vals = low + (high - low) * u
        if size is None:
            return float(vals[0])
        return vals.reshape(size)
