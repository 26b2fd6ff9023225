"""Deterministic pseudo-randomness for reproducible curation runs.

Two well-known, publicly specified primitives are used so that a run can be
reproduced bit-for-bit from (seed, clip_id) alone, in any language:

* FNV-1a (64-bit) hashes the run seed together with a clip id into a single
  64-bit stream seed.  Constants: offset basis 0xcbf29ce484222325, prime
  0x100000001b3 (Fowler/Noll/Vo, "FNV Hash" draft, variant 1a).
* SplitMix64 (Steele, Lea & Flood, "Fast splittable pseudorandom number
  generators", OOPSLA 2014) generates the draw stream.  For seed 0 the first
  outputs are 0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4, ... which
  ``test_rng.py`` pins down.

Integer draws use rejection sampling, so they are unbiased and independent
of the platform word size.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV64_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def mix_seed(seed: int, clip_id: str = "") -> int:
    """Derive a per-clip stream seed from a run seed and a clip id.

    The run seed is reduced to 64 bits, serialized little-endian, and hashed
    together with the UTF-8 bytes of ``clip_id`` using FNV-1a.
    """
    payload = (seed & _MASK64).to_bytes(8, "little") + clip_id.encode("utf-8")
    return fnv1a64(payload)


class SplitMix64:
    """SplitMix64 generator over a 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        """Unbiased draw from range(n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange() requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n
