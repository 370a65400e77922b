"""Documented, portable pseudo-random stream.

Everything random in the workbench (synthetic data, splits, parameter
initialisation, per-epoch batch order) draws from this generator so results
can be reproduced bit-for-bit from a seed, independent of numpy's generators.

Generator: xorshift64* (Vigna)::

    x ^= x >> 12
    x ^= x << 25          (mod 2**64)
    x ^= x >> 27
    output = x * 0x2545F4914F6CDD1D   (mod 2**64)

Seeding: the integer seed is passed through one SplitMix64 round::

    z = seed + 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    state = z ^ (z >> 31)

(a zero result is replaced by 0x9E3779B97F4A7C15, since xorshift's state
must be nonzero). Sub-streams, e.g. for (seed, epoch), fold each extra key in
with another SplitMix64 round: ``state = splitmix64(state ^ key)``.

Uniform doubles use the top 53 bits: ``(u >> 11) * 2**-53`` in [0, 1).
Bounded integers use ``u % n``; the bias is below n / 2**64 and ignored.
"""
import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(value):
    z = (value + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    def __init__(self, seed, *streams):
        state = splitmix64(int(seed) & MASK64)
        for key in streams:
            state = splitmix64(state ^ (int(key) & MASK64))
        self.state = state or GOLDEN

    def next_u64(self, n):
        out, self.state = kernels.xorshift_block(self.state, int(n))
        return out

    def uniform(self, n, low=0.0, high=1.0):
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return low + (high - low) * u

    def randbelow(self, n):
        return int(self.next_u64(1)[0]) % n

    def permutation(self, n):
        """Fisher-Yates: for i = n-1 .. 1, swap i with j = next() % (i + 1)."""
        idx = np.arange(n)
        if n < 2:
            return idx
        draws = self.next_u64(n - 1)
        for t, i in enumerate(range(n - 1, 0, -1)):
            j = int(draws[t]) % (i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
