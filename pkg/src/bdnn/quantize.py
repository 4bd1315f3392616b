"""Run-time activation quantization into bitplanes.

A real tensor x is mapped to integer levels on a uniform grid:

    step  = (max(x) - min(x)) / (2^Q - 1)
    level = floor((x - min(x)) / step + 0.5)        (0 when step == 0)

and the levels are sliced into Q bitplanes.  Reconstruction is
B . r + min(x) with bit significances r_q = step * 2^q, so the round-trip
error of any element is at most step / 2.
"""

from dataclasses import dataclass

import numpy as np

from .bitkernel import pack_words, popcount_words, unpack_words
from .errors import BadBitDepth, EmptyInput

MAX_QBITS = 16


def _check_q(qbits):
    if not 1 <= int(qbits) <= MAX_QBITS:
        raise BadBitDepth(f"Q must be in 1..{MAX_QBITS}, got {qbits}")


def quantization_step(x, qbits):
    """Grid spacing (max - min) / (2^Q - 1) of a tensor's value range."""
    x = np.asarray(x)
    if x.size == 0:
        raise EmptyInput("cannot quantize an empty tensor")
    _check_q(qbits)
    lo = float(x.min())
    hi = float(x.max())
    return (hi - lo) / (2 ** int(qbits) - 1)


def quantize_levels(x, qbits):
    """Integer level map plus (x_min, step); shared by all quantize paths."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("cannot quantize an empty tensor")
    _check_q(qbits)
    qbits = int(qbits)
    x_min = float(x.min())
    step = (float(x.max()) - x_min) / (2 ** qbits - 1)
    if step == 0.0:
        levels = np.zeros(x.shape, dtype=np.int32)
    else:
        levels = np.floor((x - x_min) / step + 0.5)
        levels = np.clip(levels, 0, 2 ** qbits - 1).astype(np.int32)
    return levels, x_min, step


def value_level(value, x_min, step, qbits):
    """Level encoding an arbitrary real value on an existing grid, clipped
    into the representable range (used for zero padding in conv inputs)."""
    if step == 0.0:
        return 0
    lvl = int(np.floor((value - x_min) / step + 0.5))
    return int(np.clip(lvl, 0, 2 ** int(qbits) - 1))


@dataclass(frozen=True)
class QuantizedMap:
    """Bitplane encoding of a flat activation tensor.

    planes holds one packed bitplane per row (Q x ceil(D/64) uint64,
    LSB-first words); popb caches each plane's popcount for the offset-free
    part of the popcount inner product.
    """

    D: int
    Q: int
    planes: np.ndarray   # (Q, W) uint64
    r: np.ndarray        # (Q,) float64, r_q = step * 2^q
    x_min: float
    step: float
    popb: np.ndarray     # (Q,) int64

    def plane_bits(self, q):
        return unpack_words(self.planes[q], self.D)


def levels_to_planes(levels, qbits):
    """Slice an integer level array into packed bitplanes (Q, W)."""
    flat = levels.reshape(-1)
    qbits = int(qbits)
    bits = ((flat[None, :] >> np.arange(qbits, dtype=np.int32)[:, None]) & 1)
    return pack_words(bits.astype(np.uint8))


def quantize(x, qbits):
    """Quantize a real tensor into a QuantizedMap with Q bitplanes."""
    levels, x_min, step = quantize_levels(x, qbits)
    qbits = int(qbits)
    planes = levels_to_planes(levels, qbits)
    popb = popcount_words(planes)
    r = step * np.power(2.0, np.arange(qbits))
    return QuantizedMap(D=int(levels.size), Q=qbits, planes=planes, r=r,
                        x_min=x_min, step=step, popb=popb)


def dequantize(qmap):
    """Reconstruct the flat tensor: sum_q B[:, q] * r_q + x_min."""
    out = np.full(qmap.D, qmap.x_min, dtype=np.float64)
    for q in range(qmap.Q):
        out += qmap.plane_bits(q).astype(np.float64) * qmap.r[q]
    return out
