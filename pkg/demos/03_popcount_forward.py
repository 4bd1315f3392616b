"""Run a network forward pass with AND + popcount inner products.

With weights as binary bases and activations as bitplanes, each inner
product reduces to a small table of binary dot products computed as
2 * popcount(m AND b) - popcount(b), followed by two tiny real-valued
contractions.  This script walks the identity on a worked example, then
compares exact and binary forward passes on a small network.
"""

import numpy as np

from bdnn import (DecomposeConfig, approx_dot, binary_dot, decompose_model,
                  decompose_vector, forward, generate_synthetic, pack_bits,
                  quantize, toy_convnet)

# --- the popcount identity on a 3-bit example ------------------------------
m = pack_bits([1, 0, 1])          # sign vector [+1, -1, +1], +1 positions set
b = pack_bits([1, 1, 0])          # bitplane
print("signed sum over the plane's support:", binary_dot(m, b))
print("  (by hand: +1 - 1 + 0 = 0)")

# --- a full approximate inner product --------------------------------------
w = np.array([1.0, -1.0])
x = np.array([2.0, 0.0])
basis = decompose_vector(w, DecomposeConfig(k=1, L=4, seed=0))
qmap = quantize(x, 1)
print("\nw . x exact:", float(w @ x))
print("w . x via popcount path:", approx_dot(basis, qmap))

# --- whole-network comparison ----------------------------------------------
net = generate_synthetic(toy_convnet((3, 16, 16), filters=8, classes=10),
                         seed=42)
dec = decompose_model(net, DecomposeConfig(k=6, L=8, seed=7))

rng = np.random.default_rng(0)
x = rng.standard_normal((3, 16, 16))
exact = forward(net, x, mode="exact")
approx = forward(dec, x, mode="approx", qbits=6)

print("\ntoy conv net, k=6, Q=6")
print("exact  logits:", np.round(exact, 3))
print("binary logits:", np.round(approx, 3))
rel = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
print(f"relative L2 error: {rel:.4f}")
print("argmax agrees:", np.argmax(exact) == np.argmax(approx))
