"""Bundled network shapes and synthetic weight generators.

The AlexNet description is the ungrouped variant (conv2 sees all 96 input
maps, conv4/5 all 384): that is the canonical shape whose conv parameter
count (3,745,824) reproduces the published size table.  Weights are
optional: shape-only models feed the accounting reports, and the
generators below fill them in deterministically for experiments.
"""

import numpy as np

from .decompose import BinaryBasis
from .inference import DecomposedLayer, DecomposedModel
from .model import Layer, LayerSpec, NetworkModel


def _net(name, input_shape, specs):
    return NetworkModel(name=name, input_shape=input_shape,
                        layers=[Layer(spec=s) for s in specs])


def alexnet():
    """Ungrouped AlexNet shape manifest (weights not populated)."""
    c, f, r, p = LayerSpec.conv, LayerSpec.fc, LayerSpec.relu, LayerSpec.maxpool
    return _net("alexnet", (3, 227, 227), [
        c(96, 3, 11, stride=4, pad=0), r(), p(3, 2),
        c(256, 96, 5, stride=1, pad=2), r(), p(3, 2),
        c(384, 256, 3, stride=1, pad=1), r(),
        c(384, 384, 3, stride=1, pad=1), r(),
        c(256, 384, 3, stride=1, pad=1), r(), p(3, 2),
        f(9216, 4096), r(),
        f(4096, 4096), r(),
        f(4096, 1000),
    ])


def vgg16():
    """VGG-16 shape manifest (weights not populated)."""
    c, f, r, p = LayerSpec.conv, LayerSpec.fc, LayerSpec.relu, LayerSpec.maxpool
    specs = []
    in_maps = 3
    for block, out_maps in zip((2, 2, 3, 3, 3), (64, 128, 256, 512, 512)):
        for _ in range(block):
            specs += [c(out_maps, in_maps, 3, stride=1, pad=1), r()]
            in_maps = out_maps
        specs.append(p(2, 2))
    specs += [f(25088, 4096), r(), f(4096, 4096), r(), f(4096, 1000)]
    return _net("vgg16", (3, 224, 224), specs)


def toy_convnet(in_shape=(3, 16, 16), filters=8, classes=10):
    """Small conv-relu-pool-fc stack for experiments and sweeps."""
    c, h, w = in_shape
    fc_dim = filters * (h // 2) * (w // 2)
    return _net("toy-conv", in_shape, [
        LayerSpec.conv(filters, c, 3, stride=1, pad=1), LayerSpec.relu(),
        LayerSpec.maxpool(2, 2),
        LayerSpec.fc(fc_dim, classes),
    ])


def toy_tiny():
    """Minimal conv-relu-fc stack with small per-unit dimensionalities
    (D = 4 and 8), where exact low-rank recovery is reliable."""
    return _net("toy-tiny", (1, 4, 4), [
        LayerSpec.conv(2, 1, 2, stride=2, pad=0), LayerSpec.relu(),
        LayerSpec.fc(8, 3),
    ])


def fc6():
    """Single fully-connected 9216 -> 4096 layer (the classic large fc)."""
    return _net("fc6", (9216,), [LayerSpec.fc(9216, 4096)])


ARCHITECTURES = {
    "alexnet": alexnet,
    "vgg16": vgg16,
    "toy-conv": toy_convnet,
    "toy-tiny": toy_tiny,
    "fc6": fc6,
}


def _dyadic_coeffs(rng, rank):
    # sixteenths: exactly representable in float32, and small sums of them
    # are exact, so constructed weights decompose to literal zero cost
    return rng.integers(1, 64, size=rank) / 16.0


def generate_synthetic(model, seed=0, mode="gaussian", rank=None, scale=0.5):
    """Fill a shape manifest with deterministic synthetic weights.

    mode "gaussian" draws float32 N(0, scale^2) weights.  mode "exact"
    builds every filter/unit as a rank-`rank` binary combination with
    dyadic coefficients, so decomposition at that rank reaches zero cost.
    Biases are small gaussians in both modes.
    """
    if mode not in ("gaussian", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exact" and (rank is None or rank < 1):
        raise ValueError("exact mode requires rank >= 1")
    layers = []
    for i, spec in enumerate(model.specs):
        if spec.kind not in ("conv", "fc"):
            layers.append(Layer(spec=spec))
            continue
        rng = np.random.default_rng([seed, i])
        shape = spec.weight_shape()
        n, d = spec.units, spec.weight_dim
        if mode == "gaussian":
            weights = (rng.standard_normal((n, d)) * scale).astype(np.float32)
        else:
            signs = rng.integers(0, 2, size=(n, d, rank)) * 2.0 - 1.0
            coeffs = np.stack([_dyadic_coeffs(rng, rank) for _ in range(n)])
            weights = np.einsum("ndk,nk->nd", signs, coeffs).astype(np.float32)
        bias = (rng.standard_normal(n) * 0.1).astype(np.float32)
        layers.append(Layer(spec=spec, weights=weights.reshape(shape),
                            bias=bias))
    return NetworkModel(name=model.name, input_shape=model.input_shape,
                        layers=layers)


def random_decomposed(model, rank, seed=0, default_q=None):
    """Build a DecomposedModel with random bases directly (no solver).

    Timing benchmarks only need structurally correct packed bases; this
    skips the (slow) decomposition for large layers.
    """
    layers = []
    for i, spec in enumerate(model.specs):
        if spec.kind not in ("conv", "fc"):
            layers.append(DecomposedLayer(spec=spec))
            continue
        rng = np.random.default_rng([seed, i])
        n, d = spec.units, spec.weight_dim
        bases = []
        for unit in range(n):
            signs = rng.integers(0, 2, size=(d, rank)) * 2.0 - 1.0
            coeffs = _dyadic_coeffs(rng, rank)
            bases.append(BinaryBasis.from_dense(signs, coeffs))
        bias = (rng.standard_normal(n) * 0.1).astype(np.float32)
        layers.append(DecomposedLayer(spec=spec, bases=bases, bias=bias))
    return DecomposedModel(name=model.name, input_shape=model.input_shape,
                           layers=layers, rank=rank, default_q=default_q,
                           source=model.name)
