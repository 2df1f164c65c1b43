"""Dense numerical core: stable softmax, ordered matmul and a portable PRNG.

Matrices are plain 2-D ``float64`` numpy arrays. The generator is
xoshiro256** seeded through SplitMix64, written out in full so that a seed
produces the same stream on every platform and numpy version.

SplitMix64 constants: increment 0x9E3779B97F4A7C15, multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, shifts 30/27/31.
xoshiro256** output: rotl(s1 * 5, 7) * 9; state update shift 17, rotate 45.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

# 2^128 steps; 2^64 non-overlapping subsequences.
JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)


class NumericalError(ValueError):
    pass


def _check_finite(z: np.ndarray) -> None:
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite logits")


def softmax(logits) -> np.ndarray:
    """Softmax along the last axis, computed with max-subtraction.

    Accepts a vector of C logits or a B x C matrix of rows.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 1:
        raise ValueError("softmax needs at least one class")
    _check_finite(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    """``z - logsumexp(z)`` along the last axis; never takes log(0)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 1:
        raise ValueError("log_softmax needs at least one class")
    _check_finite(z)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    # the max entry contributes exp(0) = 1, so the sum is >= 1
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed left-to-right summation order per cell.

    Every output cell is ``((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``, which
    makes the result reproducible bit-for-bit regardless of BLAS.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** generator.

    Single-owner mutable state. For parallel work, call :meth:`split` up
    front and hand each worker its own child.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s
        self._cached_normal: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def next_uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def next_below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, n: int) -> list[int]:
        """Fisher-Yates permutation of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def permutation(self, n: int) -> np.ndarray:
        return np.asarray(self.shuffle(n), dtype=np.int64)

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Box-Muller normal; the second variate of each pair is cached."""
        if std < 0:
            raise ValueError("std must be >= 0")
        if self._cached_normal is not None:
            z = self._cached_normal
            self._cached_normal = None
        else:
            u1 = 1.0 - self.next_uniform()  # (0, 1]
            u2 = self.next_uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._cached_normal = r * math.sin(2.0 * math.pi * u2)
        return mean + std * z

    def normals(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        return np.array([self.normal(mean, std) for _ in range(n)], dtype=np.float64)

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.next_uniform() for _ in range(n)], dtype=np.float64)

    def jump(self) -> None:
        """Advance the state by 2^128 draws."""
        acc = [0, 0, 0, 0]
        for word in JUMP:
            for bit in range(64):
                if word & (1 << bit):
                    acc = [a ^ s for a, s in zip(acc, self.s)]
                self.next_u64()
        self.s = acc
        self._cached_normal = None

    def split(self) -> Rng:
        """Return a child on the current stream and jump this generator past it."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child.s = list(self.s)
        child._cached_normal = None
        self.jump()
        return child


# module-level aliases matching the operation names
def rng_next_uniform(rng: Rng) -> float:
    return rng.next_uniform()


def rng_shuffle(rng: Rng, n: int) -> list[int]:
    return rng.shuffle(n)


def rng_normal(rng: Rng, mean: float, std: float) -> float:
    return rng.normal(mean, std)
