"""Word-packed binary linear algebra.

Bit vectors are packed LSB-first into 64-bit little-endian words: logical
bit i lives at bit (i % 64) of word (i // 64).  Padding bits beyond the
logical length are always zero, so AND/popcount never needs masking.

The signed binary dot product uses the popcount identity: for a column m
over {-1,+1} (packed as the mask of its +1 positions) and a {0,1} bitplane
b, the restriction of m to b's support sums to

    2 * popcount(m AND b) - popcount(b).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LengthMismatch

WORD_BITS = 64


def words_needed(nbits):
    return (nbits + WORD_BITS - 1) // WORD_BITS


def pack_words(bits):
    """Pack a {0,1} array into uint64 words along the last axis.

    Works on any leading batch shape; output has ceil(D/64) words per row.
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    nbits = bits.shape[-1]
    nwords = max(words_needed(nbits), 1) if nbits else 0
    if nbits == 0:
        return np.zeros(bits.shape[:-1] + (0,), dtype=np.uint64)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    target_bytes = nwords * 8
    if packed.shape[-1] < target_bytes:
        pad = [(0, 0)] * (packed.ndim - 1) + [(0, target_bytes - packed.shape[-1])]
        packed = np.pad(packed, pad)
    words = np.ascontiguousarray(packed).view("<u8")
    return words.astype(np.uint64).reshape(bits.shape[:-1] + (nwords,))


def unpack_words(words, nbits):
    """Inverse of pack_words: uint64 words -> {0,1} uint8 array of length nbits."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    raw = words.astype("<u8").view(np.uint8).reshape(words.shape[:-1] + (-1,))
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :nbits]


def popcount_words(words):
    """Total set bits across the last axis."""
    if words.size == 0:
        return np.zeros(words.shape[:-1], dtype=np.int64)
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True)
class PackedBits:
    """A bit vector of logical length nbits with a precomputed popcount."""

    nbits: int
    words: np.ndarray  # (ceil(nbits/64),) uint64, padding bits zero
    pop: int

    def to_bits(self):
        return unpack_words(self.words, self.nbits)


def pack_bits(bits):
    """Pack a {0,1} vector into a PackedBits value."""
    bits = np.asarray(bits)
    words = pack_words(bits.reshape(-1))
    return PackedBits(nbits=int(bits.size), words=words,
                      pop=int(popcount_words(words)))


def binary_dot(m, b):
    """Signed inner product of a {-1,+1} column with a {0,1} bitplane.

    m packs the +1 positions of the sign vector; b is the bitplane.
    Returns the exact integer sum of m's signs over b's support.
    """
    if m.nbits != b.nbits:
        raise LengthMismatch(f"{m.nbits} != {b.nbits}")
    return int(2 * popcount_words(m.words & b.words) - b.pop)


def approx_dot(basis, qmap, offset_scale=1.0):
    """Approximate inner product of a decomposed weight vector with a
    quantized activation vector.

    Accumulates the k x Q integer popcount table first, then applies the
    two real contractions (bit significances r, then coefficients c) and
    the offset term c . colsum * x_min in float64.  offset_scale scales
    the offset term and exists for testing; the forward paths use 1.
    """
    if basis.D != qmap.D:
        raise DimensionMismatch(f"basis D={basis.D} != map D={qmap.D}")
    k = basis.k
    q_planes = qmap.planes        # (Q, W) uint64
    col_words = basis.words       # (k, W) uint64
    # (k, Q) signed integer dot products, exact
    and_pc = np.bitwise_count(
        col_words[:, None, :] & q_planes[None, :, :]
    ).sum(axis=-1, dtype=np.int64)
    dots = 2 * and_pc - qmap.popb[None, :]
    coeffs = basis.coeffs
    r = qmap.r
    total = 0.0
    for j in range(k):
        srj = 0.0
        for qq in range(qmap.Q):
            srj += r[qq] * float(dots[j, qq])
        total += float(coeffs[j]) * srj
    offset = 0.0
    for j in range(k):
        offset += float(coeffs[j]) * float(basis.colsum[j])
    return total + offset_scale * float(qmap.x_min) * offset
