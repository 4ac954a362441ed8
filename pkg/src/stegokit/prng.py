"""Password-seeded generator shared by the keystream cipher and random embedding paths.

Bit-exact definition (so other implementations can reproduce our paths):

* seed  = FNV-1a 64 over the password bytes (offset 0xcbf29ce484222325,
  prime 0x100000001b3); a zero seed is replaced by ``ZERO_SEED_REMAP``.
* step  = xorshift64*: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``, output
  ``x * 0x2545F4914F6CDD1D mod 2**64``.
* keystream byte = top 8 bits of one output word.
* permutation = forward Fisher-Yates: for i in 0..n-2,
  ``j = i + next_u64() % (n - i)``, swap slots i and j.  The first k entries
  are final after k steps, which lets embedders draw only the prefix they use.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
XS_MULT = 0x2545F4914F6CDD1D
ZERO_SEED_REMAP = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


class Prng:
    """xorshift64* generator. Not cryptographic; only needs to be reproducible."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        seed &= MASK64
        self.state = seed if seed else ZERO_SEED_REMAP

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XS_MULT) & MASK64

    def next_below(self, bound: int) -> int:
        # modulo bias is < bound / 2**64, irrelevant at image sizes
        return self.next_u64() % bound

    def bytes(self, n: int) -> bytes:
        return bytes(self.next_u64() >> 56 for _ in range(n))


def prng_from_password(password: bytes) -> Prng:
    if not password:
        raise ValueError("password must be non-empty to seed the generator")
    return Prng(fnv1a64(bytes(password)))


def seeded_permutation(password: bytes, n: int, k: int | None = None) -> np.ndarray:
    """First ``k`` entries (default all ``n``) of the password-driven shuffle of 0..n-1."""
    if n < 1:
        raise ValueError("permutation size must be positive")
    k = n if k is None else k
    if not 0 <= k <= n:
        raise ValueError(f"prefix length {k} outside 0..{n}")
    rng = prng_from_password(password)
    steps = min(k, n - 1)
    if k * 4 >= n:
        slots = list(range(n))
        for i in range(steps):
            j = i + rng.next_u64() % (n - i)
            slots[i], slots[j] = slots[j], slots[i]
        return np.asarray(slots[:k], dtype=np.int64)
    # sparse variant: only touched slots are stored
    moved: dict[int, int] = {}
    out = np.empty(k, dtype=np.int64)
    for i in range(steps):
        j = i + rng.next_u64() % (n - i)
        vi = moved.get(i, i)
        vj = moved.get(j, j)
        moved[j] = vi
        out[i] = vj
    if steps < k:  # k == n: last slot is whatever is left there
        out[n - 1] = moved.get(n - 1, n - 1)
    return out
