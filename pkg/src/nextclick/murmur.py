"""MurmurHash3, x64 128-bit variant.

``murmur3_x64_128`` is a pure-Python port of the reference ``MurmurHash3_x64_128``
routine. ``hash128_bytes`` dispatches to the ``mmh3`` extension when it is
importable and falls back to the pure-Python code otherwise; both return the
16-byte digest laid out as ``h1`` then ``h2``, each little-endian (the same
layout Guava's ``Hashing.murmur3_128().hashBytes(...).asBytes()`` produces).
"""

from __future__ import annotations

import struct

try:  # pragma: no cover - exercised implicitly depending on the environment
    import mmh3 as _mmh3
except ImportError:  # pragma: no cover
    _mmh3 = None

_MASK = 0xFFFFFFFFFFFFFFFF
_C1 = 0x87C37B91114253D5
_C2 = 0x4CF5AD432745937F


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & _MASK


def _fmix(k: int) -> int:
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & _MASK
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & _MASK
    k ^= k >> 33
    return k


def murmur3_x64_128(data: bytes, seed: int = 0) -> tuple[int, int]:
    """Return ``(h1, h2)`` as unsigned 64-bit integers."""
    length = len(data)
    nblocks = length // 16
    h1 = h2 = seed & 0xFFFFFFFF

    for i in range(nblocks):
        k1, k2 = struct.unpack_from("<QQ", data, i * 16)

        k1 = (k1 * _C1) & _MASK
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & _MASK
        h1 ^= k1
        h1 = _rotl(h1, 27)
        h1 = (h1 + h2) & _MASK
        h1 = (h1 * 5 + 0x52DCE729) & _MASK

        k2 = (k2 * _C2) & _MASK
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & _MASK
        h2 ^= k2
        h2 = _rotl(h2, 31)
        h2 = (h2 + h1) & _MASK
        h2 = (h2 * 5 + 0x38495AB5) & _MASK

    tail = data[nblocks * 16:]
    k1 = k2 = 0
    for i in range(len(tail) - 1, 7, -1):
        k2 ^= tail[i] << ((i - 8) * 8)
    if len(tail) > 8:
        k2 = (k2 * _C2) & _MASK
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & _MASK
        h2 ^= k2
    for i in range(min(len(tail), 8) - 1, -1, -1):
        k1 ^= tail[i] << (i * 8)
    if tail:
        k1 = (k1 * _C1) & _MASK
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & _MASK
        h1 ^= k1

    h1 ^= length
    h2 ^= length
    h1 = (h1 + h2) & _MASK
    h2 = (h2 + h1) & _MASK
    h1 = _fmix(h1)
    h2 = _fmix(h2)
    h1 = (h1 + h2) & _MASK
    h2 = (h2 + h1) & _MASK
    return h1, h2


def murmur3_x64_128_bytes(data: bytes, seed: int = 0) -> bytes:
    h1, h2 = murmur3_x64_128(data, seed)
    return struct.pack("<QQ", h1, h2)


def hash128_bytes(data: bytes, seed: int = 0) -> bytes:
    if _mmh3 is not None:
        return _mmh3.hash_bytes(data, seed, True)
    return murmur3_x64_128_bytes(data, seed)


def hash128_hex(data: bytes, seed: int = 0) -> str:
    return hash128_bytes(data, seed).hex()
