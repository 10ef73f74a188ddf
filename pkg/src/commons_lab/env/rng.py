"""xoshiro256** generator seeded through SplitMix64.

The engine uses this instead of numpy's generators so that a (seed, action
sequence) pair replays bit-exactly in any language that implements the two
published reference algorithms. Draws are taken in a documented order by the
engine; see ``engine.py``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> tuple[int, int]:
    """Return (next_state, output) of the SplitMix64 sequence."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    __slots__ = ("s",)

    def __init__(self, seed: int):
        state = seed & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self.s = words

    @classmethod
    def from_state(cls, words) -> "Xoshiro256":
        obj = cls.__new__(cls)
        obj.s = [int(w) & MASK64 for w in words]
        if not any(obj.s):
            raise ValueError("xoshiro256 state must not be all zero")
        return obj

    def state(self) -> tuple[int, int, int, int]:
        return tuple(self.s)

    def copy(self) -> "Xoshiro256":
        return Xoshiro256.from_state(self.s)

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n), drawing from i = n-1 down to 1."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def derive_seed(seed: int, stream: int) -> int:
    """Independent 64-bit sub-seed for a named stream index."""
    state = (seed & MASK64) ^ ((stream * 0xD1B54A32D192ED03) & MASK64)
    _, out = splitmix64(state)
    return out
