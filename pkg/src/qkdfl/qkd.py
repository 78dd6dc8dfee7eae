"""BB84 key agreement at the protocol level.

Qubits are tracked as (bit, basis) pairs rather than state vectors: a
measurement in the preparation basis reads the bit exactly, a measurement
in the conjugate basis yields a uniform coin flip.  The channel supports
two impairments, an intercept-resend eavesdropper (measures in a random
basis, resends her outcome in that basis) and depolarizing noise (with
probability eta the in-flight bit is replaced by a uniform random bit,
giving a matched-basis error rate of eta/2).  Eve acts before the noise.

A session is a pure function of its config: every random choice comes
from one of five labeled substreams (Alice bits, Alice bases, Eve, noise,
Bob) spawned from the session seed, so toggling the eavesdropper or the
noise level does not perturb the other draws.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bits import pack_bits, random_bits, sha256_expand_bits
from .errors import DegenerateSessionError

logger = logging.getLogger(__name__)

# Final keys never shrink below this, regardless of the amplification ratio.
MIN_FINAL_KEY_BITS = 256


@dataclass(frozen=True)
class BB84Config:
    """Inputs of one key-agreement session."""

    raw_len: int = 2000
    pa_ratio: float = 0.8
    depolarize_prob: float = 0.0
    eve_present: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.raw_len < 64:
            raise ValueError(f"raw_len must be >= 64, got {self.raw_len}")
        if not 0.0 < self.pa_ratio <= 1.0:
            raise ValueError(f"pa_ratio must be in (0, 1], got {self.pa_ratio}")
        if not 0.0 <= self.depolarize_prob <= 1.0:
            raise ValueError(
                f"depolarize_prob must be in [0, 1], got {self.depolarize_prob}"
            )


@dataclass(frozen=True)
class QkdSession:
    """Outcome of one session: final key bits plus the public statistics."""

    key: np.ndarray
    sifted_len: int
    final_len: int
    qber: float


def final_key_len(pa_ratio: float, sifted_len: int) -> int:
    return max(MIN_FINAL_KEY_BITS, int(pa_ratio * sifted_len))


def qber_of(alice_bits, bob_bits, sift_mask) -> float:
    """Mismatch fraction between the two bit strings over the sifted positions."""
    alice = np.asarray(alice_bits, dtype=np.uint8)
    bob = np.asarray(bob_bits, dtype=np.uint8)
    mask = np.asarray(sift_mask, dtype=bool)
    if not (alice.shape == bob.shape == mask.shape):
        raise ValueError("alice_bits, bob_bits and sift_mask must have equal length")
    n_sift = int(mask.sum())
    if n_sift == 0:
        raise DegenerateSessionError("sift mask selects no positions")
    return float(np.count_nonzero(alice[mask] != bob[mask])) / n_sift


def privacy_amplify(sifted_bits, final_len: int) -> np.ndarray:
    """Compress/expand sifted bits into `final_len` key bits.

    Layout (test-vector contract): the output is the first
    ceil(final_len/8) bytes of SHA-256(sifted_bytes || LE64(counter)) for
    counter = 0, 1, ..., truncated to final_len bits; sifted_bytes packs
    the input MSB-first.
    """
    sifted = np.asarray(sifted_bits, dtype=np.uint8)
    if sifted.size == 0:
        raise ValueError("sifted_bits must be nonempty")
    if final_len < 1:
        raise ValueError("final_len must be >= 1")
    if final_len > sifted.size:
        # Possible via the MIN_FINAL_KEY_BITS floor on very short sifted keys;
        # the expansion is not information-theoretically sound in that regime.
        logger.warning(
            "privacy amplification expanding %d sifted bits to %d output bits",
            sifted.size,
            final_len,
        )
    return sha256_expand_bits(pack_bits(sifted), final_len)


def run_bb84(cfg: BB84Config) -> QkdSession:
    """Run one session: prepare, attack/noise, measure, sift, estimate, amplify."""
    n = cfg.raw_len
    streams = [
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.rng_seed).spawn(5)
    ]
    rng_bits, rng_bases, rng_eve, rng_noise, rng_bob = streams

    alice_bits = random_bits(rng_bits, n)
    alice_bases = random_bits(rng_bases, n)

    # The qubit in flight, as (bit, basis) in its own preparation basis.
    state_bits, state_bases = alice_bits, alice_bases

    if cfg.eve_present:
        eve_bases = random_bits(rng_eve, n)
        eve_coins = random_bits(rng_eve, n)
        eve_outcomes = np.where(eve_bases == state_bases, state_bits, eve_coins)
        state_bits, state_bases = eve_outcomes, eve_bases

    # Depolarizing noise: replace the in-flight bit with a uniform draw.
    # Both arrays are always consumed so the stream layout is eta-independent.
    replace = rng_noise.random(n) < cfg.depolarize_prob
    noise_bits = random_bits(rng_noise, n)
    state_bits = np.where(replace, noise_bits, state_bits)

    bob_bases = random_bits(rng_bob, n)
    bob_coins = random_bits(rng_bob, n)
    bob_bits = np.where(bob_bases == state_bases, state_bits, bob_coins)

    sift_mask = alice_bases == bob_bases
    sifted_len = int(sift_mask.sum())
    if sifted_len == 0:
        raise DegenerateSessionError(
            f"no sifted positions out of {n} raw qubits (seed {cfg.rng_seed})"
        )

    qber = qber_of(alice_bits, bob_bits, sift_mask)
    flen = final_key_len(cfg.pa_ratio, sifted_len)
    key = privacy_amplify(bob_bits[sift_mask], flen)
    return QkdSession(key=key, sifted_len=sifted_len, final_len=flen, qber=qber)
