"""Seeded random streams and a central-difference gradient oracle.

The generator is xoshiro256** seeded through splitmix64, implemented on
plain Python integers so the stream is identical on every platform.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class RngState:
    """xoshiro256** stream. Owned by one caller at a time."""

    __slots__ = ("s0", "s1", "s2", "s3", "seed")

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        sm = seed
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s0, self.s1, self.s2, self.s3 = words

    @property
    def state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def derive(self, index: int) -> "RngState":
        """Independent child stream keyed by ``(seed, index)``.

        Does not advance this stream, so children are independent of the
        order in which they are requested.
        """
        _, mixed = splitmix64((self.seed ^ ((index + 1) * _GOLDEN)) & _MASK)
        return RngState(mixed)

    def next_u64(self) -> int:
        return self.next_block(1)[0]

    def next_block(self, n: int) -> list[int]:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        out = [0] * n
        for i in range(n):
            x = (s1 * 5) & _MASK
            x = ((x << 7) | (x >> 57)) & _MASK
            out[i] = (x * 9) & _MASK
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return out

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) from the top 53 bits of each word."""
        return np.array([(w >> 11) * _INV_2_53 for w in self.next_block(n)], dtype=np.float64)

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` integers in ``[0, high)`` via the multiply-shift map."""
        if high < 1:
            raise ValueError("high must be >= 1")
        return np.array([(w * high) >> 64 for w in self.next_block(n)], dtype=np.int64)


def gaussian(rng: RngState, n: int) -> np.ndarray:
    """``n`` standard-normal draws by Box-Muller.

    Each consecutive uniform pair ``(u1, u2)`` yields ``r*cos(2*pi*u2)``
    then ``r*sin(2*pi*u2)`` with ``r = sqrt(-2*log(1 - u1))``. For odd ``n``
    the final sine value is discarded, so every call consumes
    ``2*ceil(n/2)`` words.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pairs = (n + 1) // 2
    words = rng.next_block(2 * pairs)
    u = np.array([(w >> 11) * _INV_2_53 for w in words], dtype=np.float64).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = _TWO_PI * u[:, 1]
    out = np.empty((pairs, 2))
    out[:, 0] = r * np.cos(theta)
    out[:, 1] = r * np.sin(theta)
    return out.reshape(-1)[:n]


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(a, b) -> float:
    """Max-norm relative discrepancy ``|a-b|_inf / max(|a|_inf, |b|_inf)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)
