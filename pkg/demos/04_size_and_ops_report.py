"""Model-size and operation-count accounting for classic architectures.

Dense layers cost 4 bytes per weight; the decomposed form costs k bits per
weight plus k float32 scales per output unit.  At rank 6 that takes the
ungrouped AlexNet conv stack from 14.29 MB to 2.71 MB and its fc stack to
42.14 MB.  Operation counts use word-level AND/popcount ops (one popcount
per AND) plus the small real contractions.
"""

from bdnn import alexnet, opcount_report, size_report, vgg16

for model in (alexnet(), vgg16()):
    print("=" * 64)
    print(model.name)
    print("=" * 64)
    sizes = size_report(model, rank=6)
    print(sizes.format_table())
    print()
    ops = opcount_report(model, rank=6, qbits=6)
    conv, fc = ops.totals("conv"), ops.totals("fc")
    print(f"word ops at k=Q=6: conv AND {conv['and_ops'] / 1e6:.1f}M "
          f"(= bitcount), fc AND {fc['and_ops'] / 1e6:.1f}M")
    print(f"real multiplies:   conv {conv['multiply_ops'] / 1e6:.2f}M, "
          f"fc {fc['multiply_ops'] / 1e6:.4f}M")
    print()

print("Compression ratio of a big fc layer approaches 32/k as D grows:")
sizes = size_report(alexnet(), rank=6)
fc_ratio = sizes.fc_original_bytes / sizes.fc_decomposed_bytes
print(f"  alexnet fc stack at k=6: {fc_ratio:.2f}x (32/6 = {32 / 6:.2f}x)")
