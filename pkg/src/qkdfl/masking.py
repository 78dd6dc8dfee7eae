"""Pairwise additive masking seeded from a per-round key.

Every ordered client pair (i, j) shares one symmetric key derived from the
round seed, so client i adds the pair mask when i < j and subtracts it when
i > j; the masks cancel exactly in the sum of all K uploads and the server
only ever learns the aggregate.

Key schedule (test-vector contracts, see tests/golden):

    pair key   = first L bits of SHA-256 counter-mode over
                 seed_bytes || LE64(round) || LE64(min(i,j)) || LE64(max(i,j))
    mask block = SHA-256(pair_key_bytes || LE64(tensor_ordinal) || LE64(block))

Mask bits are consumed MSB-first and mapped 1 -> +gamma, 0 -> -gamma.
Folding the tensor ordinal into the keystream gives every named tensor an
independent stream while keeping both ends of a pair bit-identical (both
clients walk tensors in the same canonical order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as pvops
from .bits import le64, pack_bits, sha256_expand_bits
from .errors import (
    AggregationShapeError,
    InvalidPairError,
    ProtocolError,
    UndefinedProxyError,
)
from .params import ParamVec

MIN_ROUND_SEED_BITS = 256
DEFAULT_PAIR_KEY_BITS = 256
DEFAULT_MASK_SCALE = 1e-3


@dataclass(frozen=True)
class MaskingContext:
    """Everything a client needs to mask one round's upload."""

    round_seed: np.ndarray
    round_index: int
    num_clients: int
    mask_scale: float = DEFAULT_MASK_SCALE
    key_bits: int = DEFAULT_PAIR_KEY_BITS

    def __post_init__(self):
        seed = np.asarray(self.round_seed, dtype=np.uint8)
        object.__setattr__(self, "round_seed", seed)
        if seed.size < MIN_ROUND_SEED_BITS:
            raise ValueError(
                f"round_seed must be >= {MIN_ROUND_SEED_BITS} bits, got {seed.size}"
            )
        if self.num_clients < 2:
            raise ValueError("num_clients must be >= 2 for pairwise masking")
        if self.round_index < 0:
            raise ValueError("round_index must be non-negative")
        # gamma = 0 is allowed as a degenerate diagnostic mode (masks vanish).
        if self.mask_scale < 0:
            raise ValueError("mask_scale must be non-negative")
        if self.key_bits < 1:
            raise ValueError("key_bits must be >= 1")


@dataclass
class MaskedUpdate:
    """One client's masked parameters, tagged with its coordinates."""

    client_index: int
    round_index: int
    params: ParamVec


def derive_pair_key(ctx: MaskingContext, i: int, j: int) -> np.ndarray:
    """Symmetric pairwise key: derive_pair_key(i, j) == derive_pair_key(j, i)."""
    if i == j:
        raise InvalidPairError(f"no pairwise key for a client with itself (i = j = {i})")
    for idx in (i, j):
        if not 0 <= idx < ctx.num_clients:
            raise InvalidPairError(
                f"client index {idx} out of range for K = {ctx.num_clients}"
            )
    lo, hi = min(i, j), max(i, j)
    prefix = pack_bits(ctx.round_seed) + le64(ctx.round_index) + le64(lo) + le64(hi)
    return sha256_expand_bits(prefix, ctx.key_bits)


def signs_from_bits(stream_bits: np.ndarray, gamma: float) -> np.ndarray:
    """Map keystream bits to mask values: bit 1 -> +gamma, bit 0 -> -gamma."""
    return np.where(np.asarray(stream_bits) == 1, gamma, -gamma).astype(np.float64)


def mask_keystream(key_bits: np.ndarray, tensor_ordinal: int, num_bits: int) -> np.ndarray:
    """Per-tensor keystream expansion of a pair key (golden-file contract)."""
    prefix = pack_bits(key_bits) + le64(tensor_ordinal)
    return sha256_expand_bits(prefix, num_bits)


def bits_to_mask(
    key_bits: np.ndarray,
    shape: tuple[int, ...],
    tensor_ordinal: int,
    gamma: float,
) -> np.ndarray:
    """A +/-gamma tensor of the given shape, read from the pair key's keystream."""
    key = np.asarray(key_bits, dtype=np.uint8)
    if key.size == 0:
        raise ValueError("key_bits must be nonempty")
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if n < 1:
        raise ValueError(f"mask shape {shape} has no elements")
    stream = mask_keystream(key, tensor_ordinal, n)
    return signs_from_bits(stream, gamma).reshape(shape)


def pair_mask_sum(pv: ParamVec, client_index: int, ctx: MaskingContext) -> ParamVec:
    """Signed sum of all pair masks for one client, shaped like `pv`.

    Client i adds m_ij for j > i and subtracts it for j < i; the tensor
    ordinal is the entry's position in canonical order.
    """
    out = []
    for ordinal, (name, arr) in enumerate(pv.entries):
        total = np.zeros_like(arr)
        for j in range(ctx.num_clients):
            if j == client_index:
                continue
            key = derive_pair_key(ctx, client_index, j)
            mask = bits_to_mask(key, arr.shape, ordinal, ctx.mask_scale)
            if client_index < j:
                total += mask
            else:
                total -= mask
        out.append((name, total))
    return ParamVec(out)


def apply_pairwise_masks(
    pv: ParamVec, client_index: int, ctx: MaskingContext
) -> MaskedUpdate:
    """Mask one client's parameters for upload."""
    if not 0 <= client_index < ctx.num_clients:
        raise ValueError(
            f"client_index {client_index} out of range for K = {ctx.num_clients}"
        )
    if not pv.all_finite():
        raise ValueError("parameters must be finite before masking")
    masked = pvops.add(pv, pair_mask_sum(pv, client_index, ctx))
    return MaskedUpdate(
        client_index=client_index, round_index=ctx.round_index, params=masked
    )


def aggregate(masked: list[MaskedUpdate]) -> ParamVec:
    """Element-wise mean of masked uploads; pair masks cancel in the sum."""
    if len(masked) < 2:
        raise AggregationShapeError("aggregation needs at least two masked updates")
    rounds = {m.round_index for m in masked}
    if len(rounds) != 1:
        raise ProtocolError(f"masked updates span multiple rounds: {sorted(rounds)}")
    clients = [m.client_index for m in masked]
    if len(set(clients)) != len(clients):
        raise ProtocolError("duplicate client index in aggregation batch")
    first = masked[0].params
    for m in masked[1:]:
        if not first.same_structure(m.params):
            raise AggregationShapeError(
                f"update from client {m.client_index} does not match the batch structure"
            )
    # Canonical summation order makes the result independent of list order.
    ordered = sorted(masked, key=lambda m: m.client_index)
    return pvops.mean([m.params for m in ordered])


def leakage_proxies(true_delta: ParamVec, masked_delta: ParamVec) -> tuple[float, float]:
    """(cosine similarity, Pearson correlation) between the flattened deltas."""
    if not true_delta.same_structure(masked_delta):
        raise ValueError("deltas are structurally incompatible")
    a = true_delta.flat()
    b = masked_delta.flat()
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 or nb2 == 0.0:
        raise UndefinedProxyError("leakage proxies are undefined for zero-norm deltas")
    cosine = float(a @ b) / float(np.sqrt(na2 * nb2))
    ac = a - a.mean()
    bc = b - b.mean()
    va = float(ac @ ac)
    vb = float(bc @ bc)
    if va == 0.0 or vb == 0.0:
        raise UndefinedProxyError("Pearson correlation is undefined for constant deltas")
    pearson = float(ac @ bc) / float(np.sqrt(va * vb))
    return cosine, pearson
