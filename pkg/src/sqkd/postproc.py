"""Classical postprocessing of checked raw keys.

Reconciliation is block-parity with discard: mismatched blocks are thrown
away rather than repaired, so an even number of errors inside one block
survives. Privacy amplification is a binary Toeplitz hash.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Origin(Enum):
    RAW_ALICE = "RawAlice"
    RAW_BOB = "RawBob"
    CORRECTED = "Corrected"
    FINAL = "Final"


@dataclass(frozen=True)
class KeyMaterial:
    bits: np.ndarray
    origin: Origin
    leaked_bits: int = 0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size and bits.max() > 1:
            raise ValueError("key bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return self.bits.size

    def hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()


def parity_block_reconcile(alice: KeyMaterial, bob: KeyMaterial, block_size: int = 8,
                           rng=None, log: list | None = None):
    """Compare block parities under a shared random shuffle; drop mismatches.

    ``log``, if given, receives one ``{"block", "alice_parity",
    "bob_parity", "kept"}`` dict per announced parity.
    """
    if len(alice) != len(bob):
        raise ValueError(f"key lengths differ: {len(alice)} vs {len(bob)}")
    if block_size < 1:
        raise ValueError("block_size must be positive")
    rng = np.random.default_rng() if rng is None else rng
    n = len(alice)
    perm = rng.permutation(n)
    a, b = alice.bits[perm], bob.bits[perm]
    keep = np.ones(n, dtype=bool)
    n_blocks = 0
    for k, start in enumerate(range(0, n, block_size)):
        sl = slice(start, start + block_size)
        pa, pb = int(a[sl].sum() & 1), int(b[sl].sum() & 1)
        n_blocks += 1
        if pa != pb:
            keep[sl] = False
        if log is not None:
            log.append({"block": k, "alice_parity": pa, "bob_parity": pb, "kept": pa == pb})
    return (
        KeyMaterial(a[keep], Origin.CORRECTED, alice.leaked_bits + n_blocks),
        KeyMaterial(b[keep], Origin.CORRECTED, bob.leaked_bits + n_blocks),
    )


def toeplitz_matrix(seed, n_in: int, n_out: int) -> np.ndarray:
    """``T[i, j] = seed[i - j + n_in - 1]``: seed[n_in-1:] is the first column,
    seed[n_in-1::-1] the first row."""
    seed = np.asarray(seed, dtype=np.uint8)
    idx = np.arange(n_out)[:, None] - np.arange(n_in)[None, :] + n_in - 1
    return seed[idx]


def privacy_amplify(key: KeyMaterial, output_length: int, hash_seed) -> KeyMaterial:
    n = len(key)
    hash_seed = np.asarray(hash_seed, dtype=np.uint8).reshape(-1)
    if not 0 <= output_length <= n:
        raise ValueError(f"output_length {output_length} outside [0, {n}]")
    if output_length == 0:
        return replace(key, bits=np.zeros(0, dtype=np.uint8), origin=Origin.FINAL)
    if hash_seed.size != n + output_length - 1:
        raise ValueError(
            f"hash seed has {hash_seed.size} bits, need {n + output_length - 1}"
        )
    # row i of T @ key is entry i + n - 1 of the full convolution seed * key
    size = 1 << (hash_seed.size + n - 1).bit_length()
    conv = np.fft.irfft(np.fft.rfft(hash_seed, size) * np.fft.rfft(key.bits, size), size)
    out = np.rint(conv[n - 1:n - 1 + output_length]).astype(np.int64) & 1
    return replace(key, bits=out.astype(np.uint8), origin=Origin.FINAL)


def recommend_output_length(n: int, leaked_bits: int, safety_margin: int = 8) -> int:
    if n < 0:
        raise ValueError("n must be non-negative")
    return max(0, n - leaked_bits - safety_margin)
