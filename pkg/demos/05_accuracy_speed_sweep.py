"""Sweep basis rank and bit-depth, then time the binary path.

Error falls as k and Q grow while compute grows with k * Q: the usual
operating points are k, Q in {4, 6, 8}.  The timing section benchmarks the
large-fc shape (9216 -> 4096) against a scalar float reference.
"""

import numpy as np

from bdnn import (DecomposeConfig, decompose_model, fc6, forward,
                  generate_synthetic, random_decomposed, run_bench,
                  toy_convnet)

net = generate_synthetic(toy_convnet((3, 16, 16), filters=8, classes=10),
                         seed=42)
rng = np.random.default_rng(123)
inputs = [rng.standard_normal((3, 16, 16)) for _ in range(10)]
exact = [forward(net, x, mode="exact") for x in inputs]

print("mean relative L2 error over 10 inputs")
print(f"{'':>6}" + "".join(f"{f'Q={q}':>10}" for q in (2, 4, 6, 8)))
for k in (2, 4, 6, 8):
    dec = decompose_model(net, DecomposeConfig(k=k, L=8, seed=7))
    row = []
    for q in (2, 4, 6, 8):
        errs = [np.linalg.norm(forward(dec, x, mode="approx", qbits=q) - ref)
                / np.linalg.norm(ref) for x, ref in zip(inputs, exact)]
        row.append(np.mean(errs))
    print(f"{f'k={k}':>6}" + "".join(f"{e:>10.4f}" for e in row))

print("\ntiming the classic 9216 -> 4096 fc shape, k=6")
dec = random_decomposed(fc6(), rank=6, seed=0)
result = run_bench(dec, [4, 6, 8], runs=5, seed=0, eval_inputs=4)
print(result.format_table())
print("\n(the report also records reference full-model speedups for "
      "context: alexnet 1.79x, vgg16 2.07x at k=Q=6)")
