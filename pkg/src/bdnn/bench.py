"""Timing and accuracy benchmark harness.

The float baseline is a deliberately straightforward scalar dot-product
reference (one multiply-accumulate per element, no hand vectorization),
run on the dense weights reconstructed from the binary bases, so both
paths compute the same nominal function.  Reference full-model speedups
published for this technique on desktop CPUs (AlexNet 1.79x, VGG-16
2.07x at k = Q = 6) are recorded in the report for context; they are not
targets for single-layer desk-scale runs.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BadConfig
from .inference import forward, im2col, maxpool, relu
from .reports import size_report

MIN_RUNS = 5

REFERENCE_FULL_MODEL_SPEEDUPS = {"alexnet": 1.79, "vgg16": 2.07}

BASELINE_DESCRIPTION = (
    "scalar float dot-product loops over reconstructed dense weights "
    "(float64 accumulate, no hand vectorization)"
)


@dataclass(frozen=True)
class BenchCell:
    rank: int
    qbits: int
    exact_ms: float
    approx_ms: float
    speedup: float
    rel_l2_error: float
    top1_agreement: float


@dataclass(frozen=True)
class BenchResult:
    model: str
    rank: int
    runs: int
    threads: int
    baseline: str
    cells: tuple
    size_totals: dict

    def to_json(self):
        return {
            "schema": "bdnn.bench/1",
            "model": self.model,
            "rank": self.rank,
            "runs": self.runs,
            "threads": self.threads,
            "baseline": self.baseline,
            "reference_full_model_speedups": REFERENCE_FULL_MODEL_SPEEDUPS,
            "size_totals": self.size_totals,
            "cells": [
                {"rank": c.rank, "qbits": c.qbits, "exact_ms": c.exact_ms,
                 "approx_ms": c.approx_ms, "speedup": c.speedup,
                 "rel_l2_error": c.rel_l2_error,
                 "top1_agreement": c.top1_agreement}
                for c in self.cells
            ],
        }

    def format_table(self):
        lines = [
            f"Benchmark: {self.model}, k={self.rank}, median of {self.runs} "
            f"runs, {self.threads} thread(s)",
            f"baseline: {self.baseline}",
        ]
        header = f"{'Q':>3} {'exact ms':>10} {'approx ms':>10} " \
                 f"{'speedup':>8} {'rel L2 err':>11} {'top-1 agree':>11}"
        lines.append(header)
        lines.append("-" * len(header))
        for c in self.cells:
            lines.append(
                f"{c.qbits:>3} {c.exact_ms:>10.3f} {c.approx_ms:>10.3f} "
                f"{c.speedup:>8.2f} {c.rel_l2_error:>11.3e} "
                f"{c.top1_agreement:>11.2f}"
            )
        return "\n".join(lines)


def reconstruct_dense(decomposed):
    """Dense float32 weights per conv/fc layer, from bases or kept-exact."""
    dense = {}
    for i, layer in enumerate(decomposed.layers):
        spec = layer.spec
        if spec.kind not in ("conv", "fc"):
            continue
        if layer.weights is not None:
            dense[i] = layer.weights.reshape(spec.units, -1).astype(np.float32)
        else:
            dense[i] = np.stack(
                [b.reconstruct() for b in layer.bases]
            ).astype(np.float32)
    return dense


def scalar_forward(decomposed, dense, x):
    """Forward pass through the scalar float reference kernels."""
    current = np.asarray(x)
    for i, layer in enumerate(decomposed.layers):
        spec = layer.spec
        if spec.kind == "relu":
            current = relu(current)
        elif spec.kind == "maxpool":
            current = maxpool(current, spec.window, spec.stride)
        elif spec.kind == "conv":
            patch = im2col(current.astype(np.float32), spec.kernel,
                           spec.stride, spec.pad)
            cols_t = np.ascontiguousarray(patch.columns.T, dtype=np.float32)
            out = np.empty((spec.out_maps, cols_t.shape[0]))
            kernels.scalar_matmat(dense[i], cols_t, out)
            if layer.bias is not None:
                out = out + np.asarray(layer.bias, dtype=np.float64)[:, None]
            current = out.reshape(spec.out_maps, patch.out_h, patch.out_w)
        elif spec.kind == "fc":
            vec = np.ascontiguousarray(current.reshape(-1), dtype=np.float32)
            out = np.empty(spec.out_dim)
            kernels.scalar_matvec(dense[i], vec, out)
            if layer.bias is not None:
                out = out + np.asarray(layer.bias, dtype=np.float64)
            current = out
    return current


def _median_ms(fn, runs):
    fn()  # warm-up, excluded
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) * 1e3


def run_bench(decomposed, qbits_list, runs=7, seed=0, threads=1,
              eval_inputs=8):
    """Benchmark the binary path against the scalar float reference.

    Times one forward per path (median of `runs`, a warm-up run excluded)
    and evaluates error/agreement on eval_inputs seeded random inputs.
    The exact baseline does not depend on Q, so it is measured once and
    shared across cells.
    """
    if runs < MIN_RUNS:
        raise BadConfig(f"runs must be >= {MIN_RUNS}, got {runs}")
    qbits_list = [int(q) for q in qbits_list]
    kernels.warmup()
    dense = reconstruct_dense(decomposed)
    rng = np.random.default_rng(seed)
    timing_input = rng.standard_normal(decomposed.input_shape)
    inputs = [rng.standard_normal(decomposed.input_shape)
              for _ in range(eval_inputs)]

    exact_ms = _median_ms(
        lambda: scalar_forward(decomposed, dense, timing_input), runs)
    exact_outputs = [scalar_forward(decomposed, dense, x) for x in inputs]

    cells = []
    for qbits in qbits_list:
        approx_ms = _median_ms(
            lambda: forward(decomposed, timing_input, mode="approx",
                            qbits=qbits, threads=threads),
            runs)
        errors = []
        agree = 0
        for x, ref in zip(inputs, exact_outputs):
            out = forward(decomposed, x, mode="approx", qbits=qbits,
                          threads=threads)
            denom = np.linalg.norm(ref.ravel())
            errors.append(np.linalg.norm((out - ref).ravel())
                          / (denom if denom > 0 else 1.0))
            agree += int(np.argmax(out.ravel()) == np.argmax(ref.ravel()))
        cells.append(BenchCell(
            rank=decomposed.rank, qbits=qbits, exact_ms=exact_ms,
            approx_ms=approx_ms, speedup=exact_ms / approx_ms,
            rel_l2_error=float(np.mean(errors)),
            top1_agreement=agree / len(inputs) if inputs else float("nan"),
        ))
    totals = size_report(decomposed, decomposed.rank).to_json()["totals"]
    return BenchResult(
        model=decomposed.name, rank=decomposed.rank, runs=runs,
        threads=threads, baseline=BASELINE_DESCRIPTION, cells=tuple(cells),
        size_totals=totals,
    )


def first_decomposable_index(model):
    """Index of the first conv/fc layer, or None."""
    for i, spec in enumerate(model.specs):
        if spec.kind in ("conv", "fc"):
            return i
    return None


def run_compare(model, decomposed_models, qbits_list, n_inputs, seed=0,
                keep_exact_first=False, threads=1):
    """Exact-vs-approximate error sweep over (rank, Q) cells.

    Runs the dense exact forward and each decomposed model's approximate
    forward on n_inputs seeded random inputs; reports the mean/std relative
    L2 output error and the top-1 agreement rate per cell.  With
    keep_exact_first, the first conv/fc layer runs the exact path (using
    the dense model's weights) inside the approximate forward.
    """
    from .errors import ShapeMismatch
    from .model import infer_shapes

    qbits_list = [int(q) for q in qbits_list]
    cells = []
    overrides = {}
    if keep_exact_first:
        idx = first_decomposable_index(model)
        if idx is not None:
            overrides = {idx: (model.layers[idx].weights,
                               model.layers[idx].bias)}
    for dec in decomposed_models:
        if tuple(dec.input_shape) != tuple(model.input_shape):
            raise ShapeMismatch(-1, tuple(model.input_shape),
                                tuple(dec.input_shape))
        if [s.kind for s in dec.specs] != [s.kind for s in model.specs]:
            raise ShapeMismatch(-1, "matching layer stacks", "divergent kinds")
        infer_shapes(dec)
    rng = np.random.default_rng(seed)
    inputs = [rng.standard_normal(model.input_shape)
              for _ in range(n_inputs)]
    exact_outputs = [forward(model, x, mode="exact") for x in inputs]
    for dec in decomposed_models:
        for qbits in qbits_list:
            errors = []
            agree = 0
            for x, ref in zip(inputs, exact_outputs):
                out = forward(dec, x, mode="approx", qbits=qbits,
                              exact_overrides=overrides, threads=threads)
                denom = np.linalg.norm(ref.ravel())
                errors.append(np.linalg.norm((out - ref).ravel())
                              / (denom if denom > 0 else 1.0))
                agree += int(np.argmax(out.ravel()) == np.argmax(ref.ravel()))
            errors = np.asarray(errors)
            cells.append({
                "rank": dec.rank,
                "qbits": qbits,
                "inputs": n_inputs,
                "mean_rel_l2": float(errors.mean()) if n_inputs else None,
                "std_rel_l2": float(errors.std(ddof=1))
                if n_inputs > 1 else None,
                "top1_agreement": agree / n_inputs if n_inputs else None,
            })
    return {
        "schema": "bdnn.compare/1",
        "model": model.name,
        "inputs": n_inputs,
        "seed": seed,
        "keep_exact_first": bool(keep_exact_first),
        "cells": cells,
    }
