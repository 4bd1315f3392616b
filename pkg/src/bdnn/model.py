"""Network data model: layer descriptions, dense models, shape validation.

Tensors are plain numpy arrays, float32, row-major with the innermost
dimension last.  Feature maps are (channels, height, width); conv weights
are (out_maps, in_maps, kernel, kernel); fc weights are (out_dim, in_dim).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import KernelLargerThanInput, NonFiniteWeight, ShapeMismatch


def conv_output_extent(in_extent, kernel, stride, pad):
    """Output extent of a convolution along one spatial axis.

    floor((in_extent + 2*pad - kernel) / stride) + 1
    """
    if in_extent + 2 * pad < kernel:
        raise KernelLargerThanInput(
            f"kernel {kernel} exceeds padded extent {in_extent + 2 * pad}"
        )
    return (in_extent + 2 * pad - kernel) // stride + 1


@dataclass(frozen=True)
class LayerSpec:
    """Shape-level description of one layer.

    kind is one of "conv", "fc", "relu", "maxpool".  Only the fields
    relevant to the kind are set; the rest stay None.
    """

    kind: str
    out_maps: int | None = None   # conv: N
    in_maps: int | None = None    # conv: M
    kernel: int | None = None     # conv: H
    stride: int | None = None     # conv / maxpool
    pad: int | None = None        # conv
    in_dim: int | None = None     # fc: M
    out_dim: int | None = None    # fc: N
    window: int | None = None     # maxpool

    def __post_init__(self):
        if self.kind == "conv":
            if min(self.out_maps, self.in_maps, self.kernel, self.stride) < 1:
                raise ValueError("conv dims and stride must be >= 1")
            if self.pad < 0:
                raise ValueError("conv padding must be >= 0")
        elif self.kind == "fc":
            if min(self.in_dim, self.out_dim) < 1:
                raise ValueError("fc dims must be >= 1")
        elif self.kind == "maxpool":
            if min(self.window, self.stride) < 1:
                raise ValueError("maxpool window and stride must be >= 1")
        elif self.kind != "relu":
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @classmethod
    def conv(cls, out_maps, in_maps, kernel, stride=1, pad=0):
        return cls("conv", out_maps=out_maps, in_maps=in_maps, kernel=kernel,
                   stride=stride, pad=pad)

    @classmethod
    def fc(cls, in_dim, out_dim):
        return cls("fc", in_dim=in_dim, out_dim=out_dim)

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def maxpool(cls, window, stride):
        return cls("maxpool", window=window, stride=stride)

    @property
    def weight_dim(self):
        """Flattened per-unit weight dimensionality D (conv/fc only)."""
        if self.kind == "conv":
            return self.in_maps * self.kernel * self.kernel
        if self.kind == "fc":
            return self.in_dim
        return None

    @property
    def units(self):
        """Number of output filters / units (conv/fc only)."""
        return self.out_maps if self.kind == "conv" else self.out_dim

    def weight_shape(self):
        if self.kind == "conv":
            return (self.out_maps, self.in_maps, self.kernel, self.kernel)
        if self.kind == "fc":
            return (self.out_dim, self.in_dim)
        return None


@dataclass
class Layer:
    """A LayerSpec plus optional dense parameters.

    Shape-only models (used for size/op accounting) carry weights=None.
    """

    spec: LayerSpec
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None


@dataclass
class NetworkModel:
    """Ordered layer stack with an input shape.

    input_shape is (channels, height, width) for conv-first models or
    (dim,) for fc-only models.
    """

    name: str
    input_shape: tuple
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)

    @property
    def specs(self):
        return [layer.spec for layer in self.layers]


def layer_output_shape(spec, in_shape):
    """Shape produced by one layer given its input shape.

    Raises ShapeMismatch / KernelLargerThanInput when the layer does not
    compose with in_shape.  layer_index in errors is filled by callers.
    """
    if spec.kind == "conv":
        if len(in_shape) != 3 or in_shape[0] != spec.in_maps:
            raise ShapeMismatch(None, f"{spec.in_maps} input maps", in_shape)
        oh = conv_output_extent(in_shape[1], spec.kernel, spec.stride, spec.pad)
        ow = conv_output_extent(in_shape[2], spec.kernel, spec.stride, spec.pad)
        return (spec.out_maps, oh, ow)
    if spec.kind == "fc":
        flat = int(np.prod(in_shape))
        if flat != spec.in_dim:
            raise ShapeMismatch(None, spec.in_dim, flat)
        return (spec.out_dim,)
    if spec.kind == "relu":
        return in_shape
    if spec.kind == "maxpool":
        if len(in_shape) != 3:
            raise ShapeMismatch(None, "3-d feature map", in_shape)
        if in_shape[1] < spec.window or in_shape[2] < spec.window:
            raise KernelLargerThanInput(
                f"pool window {spec.window} exceeds extent {in_shape[1:]}"
            )
        oh = (in_shape[1] - spec.window) // spec.stride + 1
        ow = (in_shape[2] - spec.window) // spec.stride + 1
        return (in_shape[0], oh, ow)
    raise ValueError(f"unknown layer kind {spec.kind!r}")


def infer_shapes(model):
    """Per-layer output shapes, starting from model.input_shape.

    Returns a list with one shape tuple per layer.  ShapeMismatch errors
    are re-raised with the offending layer index attached.
    """
    shapes = []
    current = tuple(model.input_shape)
    for i, spec in enumerate(model.specs):
        try:
            current = layer_output_shape(spec, current)
        except ShapeMismatch as err:
            raise ShapeMismatch(i, err.expected, err.actual) from None
        shapes.append(current)
    return shapes


def validate_model(model):
    """Check shape composition and parameter sanity of a model.

    Shape-only layers (weights None) are checked for composition only.
    Raises ShapeMismatch or NonFiniteWeight; returns None when valid.
    """
    if not model.layers:
        raise ValueError("model has no layers")
    infer_shapes(model)
    for i, layer in enumerate(model.layers):
        spec = layer.spec
        if spec.kind not in ("conv", "fc"):
            continue
        if layer.weights is not None:
            expected = spec.weight_shape()
            if tuple(layer.weights.shape) != expected:
                raise ShapeMismatch(i, expected, tuple(layer.weights.shape))
            if not np.isfinite(layer.weights).all():
                raise NonFiniteWeight(i)
        if layer.bias is not None:
            if layer.bias.shape != (spec.units,):
                raise ShapeMismatch(i, (spec.units,), tuple(layer.bias.shape))
            if not np.isfinite(layer.bias).all():
                raise NonFiniteWeight(i)
