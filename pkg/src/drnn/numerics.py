"""Minimal float64 numerics shared by every other module.

Activation functions come with their analytic derivatives so the training
code and the gradient checker agree on one definition.  Randomness goes
through ``RandomSource``, a SplitMix64 generator implemented here so that a
fixed seed reproduces the same stream on any platform and any numpy
version.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ShapeError

_MASK64 = (1 << 64) - 1


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Checked dense matrix-vector product."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError(
            f"matvec expects a matrix and a vector, got shapes {m.shape} and {v.shape}",
            left_shape=m.shape,
            right_shape=v.shape,
        )
    if m.shape[1] != v.shape[0]:
        raise ShapeError(
            f"matvec: matrix is {m.shape[0]}x{m.shape[1]} but vector has length {v.shape[0]}",
            left_shape=m.shape,
            right_shape=v.shape,
        )
    return m @ v


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Logistic function, overflow-safe for any finite input."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid_grad(v: np.ndarray) -> np.ndarray:
    s = sigmoid(v)
    return s * (1.0 - s)


def tanh_act(v: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=np.float64))


def tanh_grad(v: np.ndarray) -> np.ndarray:
    t = np.tanh(np.asarray(v, dtype=np.float64))
    return 1.0 - t * t


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def _splitmix_scramble(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-stream seed for a named purpose (init, shuffle, data...)."""
    return _splitmix_scramble((seed & _MASK64) ^ _fnv1a64(label))


class RandomSource:
    """SplitMix64 stream of uniform doubles.

    Pure-integer state transition, so the stream is identical on every
    platform.  Box-Muller gives normals; Fisher-Yates with rejection
    sampling gives unbiased shuffles.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        if lo >= hi:
            raise ConfigError(f"uniform range is empty: lo={lo} >= hi={hi}")
        if n < 0:
            raise ConfigError(f"cannot draw a negative count of samples: {n}")
        out = np.empty(n, dtype=np.float64)
        span = hi - lo
        for i in range(n):
            out[i] = lo + span * self.random()
        return out

    def normal(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = mu + sigma * self._next_normal()
        return out

    def _next_normal(self) -> float:
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] keeps the log finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0 ** -53
        u2 = (self.next_u64() >> 11) * 2.0 ** -53
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def randbelow(self, k: int) -> int:
        """Unbiased integer in [0, k) via rejection sampling."""
        if k <= 0:
            raise ConfigError(f"randbelow needs k >= 1, got {k}")
        limit = (1 << 64) - ((1 << 64) % k)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % k

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, label: str) -> "RandomSource":
        """Independent child stream named by ``label``; parent state untouched."""
        return RandomSource(_splitmix_scramble(self._state ^ _fnv1a64(label)))


def rng_uniform(seed: int, lo: float, hi: float, n: int) -> np.ndarray:
    """n uniform draws in [lo, hi) from a fresh seeded stream."""
    return RandomSource(seed).uniform(lo, hi, n)
