"""Bit-string utilities and SHA-256 counter-mode expansion.

Key material is passed around as numpy arrays of 0/1 (dtype uint8).  Byte
conversion packs bits MSB-first.  All deterministic key expansion in the
package (privacy amplification, pairwise KDF, mask keystreams) uses the
same block layout:

    block_t = SHA-256(prefix || LE64(t)),  t = 0, 1, 2, ...

concatenated and truncated.  The layout is a wire/test-vector contract;
do not change it without regenerating the golden files under tests/.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def as_bit_array(bits) -> np.ndarray:
    """Coerce a sequence of 0/1 values to a flat uint8 array, validating range."""
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit array contains values other than 0/1")
    return arr


def pack_bits(bits) -> bytes:
    """Pack a 0/1 array into bytes, MSB-first, zero-padded to a byte boundary."""
    arr = as_bit_array(bits)
    if arr.size == 0:
        return b""
    return np.packbits(arr).tobytes()


def unpack_bits(data: bytes, num_bits: int) -> np.ndarray:
    """Unpack bytes into the first `num_bits` bits, MSB-first within each byte."""
    if num_bits < 0:
        raise ValueError("num_bits must be non-negative")
    if num_bits > 8 * len(data):
        raise ValueError("not enough bytes for requested bit count")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:num_bits]


def le64(value: int) -> bytes:
    """Encode a non-negative integer as 8 little-endian bytes."""
    return struct.pack("<Q", value)


def sha256_expand_bytes(prefix: bytes, num_bytes: int) -> bytes:
    """First `num_bytes` of SHA-256(prefix || LE64(0)) || SHA-256(prefix || LE64(1)) || ..."""
    out = bytearray()
    counter = 0
    while len(out) < num_bytes:
        out += hashlib.sha256(prefix + le64(counter)).digest()
        counter += 1
    return bytes(out[:num_bytes])


def sha256_expand_bits(prefix: bytes, num_bits: int) -> np.ndarray:
    """Counter-mode expansion truncated to `num_bits` bits (MSB-first)."""
    data = sha256_expand_bytes(prefix, (num_bits + 7) // 8)
    return unpack_bits(data, num_bits)


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n uniform bits from a generator."""
    return rng.integers(0, 2, size=n, dtype=np.uint8)
