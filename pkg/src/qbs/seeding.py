"""
Deterministic seed derivation and single-draw seeded samplers
"""
from functools import lru_cache
from typing import Sequence

import numpy as np

MASK_64 = (1 << 64) - 1
FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a_64(data: bytes, state: int = FNV64_OFFSET) -> int:
    """64-bit FNV-1a; pass a previous result as state to continue hashing"""
    h = state
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & MASK_64
    return h


def derive_seed(instance_seed: int, domain_tag: bytes, payload: bytes) -> int:
    """FNV-1a over tag, a zero separator, payload and the instance seed (8 bytes, little-endian)"""
    h = fnv1a_64(domain_tag)
    h = fnv1a_64(b"\x00", h)
    h = fnv1a_64(payload, h)
    return fnv1a_64((instance_seed & MASK_64).to_bytes(8, "little"), h)


def query_set_bytes(user_ids: Sequence[int]) -> bytes:
    """Ascending user ids as fixed-width little-endian 32-bit integers"""
    return np.asarray(user_ids, dtype="<u4").tobytes()


@lru_cache(maxsize=1 << 16)
def _standard_normal(seed: int) -> float:
    return float(np.random.Generator(np.random.Philox(key=seed)).standard_normal())


def seeded_gaussian(seed: int, mean: float, sd: float) -> float:
    if sd == 0:
        return float(mean)
    return float(mean + sd * _standard_normal(seed))


def seeded_uniform_int(seed: int, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi] inclusive"""
    if lo == hi:
        return int(lo)
    if lo > hi:
        raise ValueError(f"Empty range [{lo}, {hi}]")
    return int(np.random.Generator(np.random.Philox(key=seed)).integers(lo, hi, endpoint=True))
