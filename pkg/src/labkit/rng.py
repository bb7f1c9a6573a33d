"""Deterministic random streams for the simulated instruments.

Every instrument owns one xoshiro256** stream whose state is derived from
the configuration seed plus the instrument name, so whole measurement
transcripts replay bit-for-bit from `Configuration.seed` alone, on any
platform. Nothing here touches the global `random` module.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """Yield the splitmix64 sequence starting at ``state``.

    Used only to expand a 64-bit seed into xoshiro state words.
    """
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def stream_id(seed: int, name: str) -> int:
    """64-bit stream identifier for instrument ``name`` under ``seed``."""
    return (seed ^ _fnv1a64(name.encode("utf-8"))) & _MASK64


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0, seeded through splitmix64 per the authors' advice."""

    def __init__(self, seed: int):
        sm = splitmix64(seed & _MASK64)
        self._s = [next(sm) for _ in range(4)]
        if not any(self._s):  # all-zero state is the one forbidden state
            self._s[0] = 1

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal via Box-Muller.

        The second variate of each pair is discarded: one draw per call
        keeps the stream position a pure function of call count.
        """
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def poisson(self, mu: float) -> int:
        """Poisson draw with mean ``mu``.

        Inversion by sequential search below mu=10; above that a rounded
        normal approximation, clamped at zero. Accurate enough for photon
        counting at desk scale and fully deterministic.
        """
        if mu < 0.0:
            raise ValueError("poisson mean must be >= 0")
        if mu == 0.0:
            return 0
        if mu < 10.0:
            x = 0
            p = math.exp(-mu)
            s = p
            u = self.uniform()
            while u > s:
                x += 1
                p *= mu / x
                s += p
                if x > 10_000:  # numerically unreachable for mu < 10
                    break
            return x
        z = self.normal()
        return max(0, round(mu + math.sqrt(mu) * z))


def instrument_stream(seed: int, name: str) -> Xoshiro256StarStar:
    """The per-instrument stream: splitmix64-expanded from seed and name."""
    return Xoshiro256StarStar(stream_id(seed, name))
