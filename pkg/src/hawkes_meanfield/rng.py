"""Counter-based pseudo-random streams for reproducible parallel simulation.

Every stochastic object in the package draws from a :class:`MarkStream`, a
counter-mode generator keyed on ``(seed, stream index)``.  The n-th draw of a
stream is a pure function of ``(seed, index, n)``, so replicas and particles
can be simulated in any order, on any number of workers, and still produce
bit-identical output.

The mixer is the 64-bit SplitMix finalizer (Steele, Lea & Flood); a stream is
the SplitMix sequence entered at an avalanche-mixed per-stream key.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0x8BB84B93962EACC9
_DERIVE_SALT = 0xD1B54A32D192ED03

# 2**-53, the spacing of the 53-bit uniforms below
_U53 = 1.0 / 9007199254740992.0


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    # vectorized twin of mix64; uint64 arithmetic wraps like the masked ints
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def stream_key(seed: int, index: int) -> int:
    """Key of sub-stream ``index`` under ``seed``; distinct per (seed, index)."""
    base = mix64((seed & _MASK64) ^ _STREAM_SALT)
    return mix64((base + ((index + 1) * _GOLDEN)) & _MASK64)


def derive_seed(seed: int, index: int) -> int:
    """A 64-bit child seed for replica ``index``, independent of stream keys."""
    base = mix64((seed & _MASK64) ^ _DERIVE_SALT)
    return mix64((base + ((index + 1) * _GOLDEN)) & _MASK64)


class MarkStream:
    """Deterministic draw stream for one particle (or one replica role).

    Yields candidate inter-arrival exponentials and uniform acceptance marks
    for the thinning simulators, plus Gaussian blocks for the limit-process
    integrators.  Same ``(seed, index)`` always replays the same sequence;
    distinct indices enter the underlying sequence at unrelated keys.
    """

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, index: int = 0):
        self.key = stream_key(seed, index)
        self.counter = 0

    def _next_u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * _GOLDEN) & _MASK64)

    def uniform(self) -> float:
        """One uniform mark in [0, 1)."""
        return (self._next_u64() >> 11) * _U53

    def exponential(self) -> float:
        """One strictly positive unit-rate exponential inter-arrival."""
        u = ((self._next_u64() >> 11) + 0.5) * _U53  # in (0, 1)
        return -math.log(u)

    def _u64_block(self, n: int) -> np.ndarray:
        ctr = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix64_np(np.uint64(self.key) + ctr * np.uint64(_GOLDEN))

    def uniforms(self, n: int) -> np.ndarray:
        """Block of ``n`` uniforms in [0, 1)."""
        return (self._u64_block(n) >> np.uint64(11)).astype(np.float64) * _U53

    def normals(self, n: int) -> np.ndarray:
        """Block of ``n`` standard Gaussians (Box-Muller on uniform pairs)."""
        m = (n + 1) // 2
        raw = (self._u64_block(2 * m) >> np.uint64(11)).astype(np.float64)
        u1 = (raw[:m] + 0.5) * _U53
        u2 = raw[m:] * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:n]
