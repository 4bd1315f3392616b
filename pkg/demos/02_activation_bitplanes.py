"""Quantize activations into bitplanes at run time.

Weights can be decomposed offline, but activations depend on the input, so
they are quantized during the forward pass: shift by the tensor minimum,
divide by the step (max - min) / (2^Q - 1), round to the nearest level,
and slice the level integers into Q packed bitplanes.
"""

import numpy as np

from bdnn import dequantize, quantization_step, quantize

x = np.array([-1.2, 0.0, 0.4, 1.5, 2.0, -0.7, 0.9, 1.1])
print("input:", x)

for qbits in (2, 4, 8):
    step = quantization_step(x, qbits)
    qmap = quantize(x, qbits)
    recon = dequantize(qmap)
    print(f"\nQ={qbits}: step={step:.4f}, x_min={qmap.x_min}")
    for q in range(min(qmap.Q, 4)):
        print(f"  bitplane {q} (significance {qmap.r[q]:.4f}):",
              qmap.plane_bits(q))
    if qmap.Q > 4:
        print(f"  ... {qmap.Q - 4} more planes")
    err = np.abs(recon - x)
    print("  reconstruction:", np.round(recon, 4))
    print(f"  max |error| = {err.max():.4f}  (bound step/2 = {step / 2:.4f})")

print("\nValues already on the grid round-trip exactly:")
lattice = np.array([0.0, 1.0, 2.0, 3.0])
print("  input ", lattice)
print("  output", dequantize(quantize(lattice, 2)))

print("\nConstant tensors take the degenerate step=0 path:")
const = np.full(5, 7.25)
print("  output", dequantize(quantize(const, 6)))
