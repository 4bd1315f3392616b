"""Layer-level forward execution: exact float paths, the approximate
popcount paths, and whole-network orchestration.

The approximate conv path quantizes the layer input once (one x_min and
step for the whole tensor), pads the integer level map with the level that
encodes original-domain zero, gathers patch columns, and runs the packed
popcount kernel per (filter, position).  The fc path is the same without
the spatial gather.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .bitkernel import pack_words, popcount_words
from .decompose import decompose_conv_layer, decompose_fc_layer
from .errors import KernelLargerThanInput, ShapeMismatch
from .model import conv_output_extent, infer_shapes
from .quantize import quantize, quantize_levels, value_level


@dataclass(frozen=True)
class PatchMatrix:
    """im2col result: one flattened receptive field per output position.

    columns is (M*H*H, out_h*out_w); row m*H*H + a*H + b of column
    (i*out_w + j) holds input channel m at padded offset (i*stride + a,
    j*stride + b) — identical to the filter flattening order used by the
    decomposition.
    """

    columns: np.ndarray
    out_h: int
    out_w: int
    stride: int
    pad: int


def im2col(x, kernel, stride, pad, pad_value=0):
    """Extract convolution patches of a (M, h, w) tensor as columns."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeMismatch(None, "(channels, h, w)", x.shape)
    out_h = conv_output_extent(x.shape[1], kernel, stride, pad)
    out_w = conv_output_extent(x.shape[2], kernel, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)),
                   constant_values=pad_value)
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    win = win[:, ::stride, ::stride]                 # (M, oh, ow, H, H)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(
        x.shape[0] * kernel * kernel, out_h * out_w
    )
    return PatchMatrix(columns=np.ascontiguousarray(cols), out_h=out_h,
                       out_w=out_w, stride=stride, pad=pad)


def relu(x):
    return np.maximum(x, 0)


def maxpool(x, window, stride):
    """Max over valid (unpadded) windows of a (M, h, w) tensor."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeMismatch(None, "(channels, h, w)", x.shape)
    if x.shape[1] < window or x.shape[2] < window:
        raise KernelLargerThanInput(
            f"pool window {window} exceeds extent {x.shape[1:]}"
        )
    win = sliding_window_view(x, (window, window), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    return win.max(axis=(3, 4))


def conv_forward_exact(x, weights, bias, stride, pad):
    """Dense float convolution (im2col + per-filter dot products)."""
    weights = np.asarray(weights)
    n_filters, in_maps, kernel, _ = weights.shape
    x = np.asarray(x)
    if x.shape[0] != in_maps:
        raise ShapeMismatch(None, f"{in_maps} input maps", x.shape)
    patch = im2col(x, kernel, stride, pad)
    flat = weights.reshape(n_filters, -1).astype(np.float64)
    out = flat @ patch.columns.astype(np.float64)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None]
    return out.reshape(n_filters, patch.out_h, patch.out_w)


def fc_forward_exact(x, weights, bias):
    """Dense float matrix-vector product plus bias."""
    weights = np.asarray(weights)
    x = np.asarray(x).reshape(-1)
    if weights.shape[1] != x.size:
        raise ShapeMismatch(None, weights.shape[1], x.size)
    out = weights.astype(np.float64) @ x.astype(np.float64)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


@dataclass
class DecomposedLayer:
    """One layer of a decomposed model.

    conv/fc layers carry either a per-unit basis list (decomposed) or the
    dense weights (kept exact); relu/maxpool carry neither.
    """

    spec: object
    bases: list | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    _stack: tuple | None = field(default=None, repr=False, compare=False)

    def stacked(self):
        """Basis arrays stacked across units: (N,k,W) words, (N,k) coeffs,
        (N,k) column sums.  Cached after the first call."""
        if self._stack is None:
            words = np.stack([b.words for b in self.bases])
            coeffs = np.stack([b.coeffs for b in self.bases])
            colsums = np.stack([b.colsum for b in self.bases]).astype(np.int64)
            self._stack = (words, coeffs, colsums)
        return self._stack


@dataclass
class DecomposedModel:
    """Decomposed network: layer stack plus decomposition metadata."""

    name: str
    input_shape: tuple
    layers: list
    rank: int
    default_q: int | None = None
    source: str | None = None
    source_hash: str | None = None

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)

    @property
    def specs(self):
        return [layer.spec for layer in self.layers]


def validate_decomposed(model):
    """Check basis counts and dimensionalities against the layer specs."""
    infer_shapes(model)
    for i, layer in enumerate(model.layers):
        spec = layer.spec
        if spec.kind not in ("conv", "fc"):
            continue
        if layer.bases is None and layer.weights is None:
            raise ShapeMismatch(i, "bases or dense weights", None)
        if layer.bases is not None:
            if len(layer.bases) != spec.units:
                raise ShapeMismatch(i, spec.units, len(layer.bases))
            for b in layer.bases:
                if b.D != spec.weight_dim:
                    raise ShapeMismatch(i, spec.weight_dim, b.D)


def decompose_model(model, cfg, keep_exact=(), threads=1):
    """Decompose every conv/fc layer of a dense model.

    Layers whose index is in keep_exact retain their dense weights and run
    the exact path inside an approximate forward (the usual choice for a
    first conv layer whose receptive field is too small to benefit).
    """
    keep_exact = set(keep_exact)
    layers = []
    for i, layer in enumerate(model.layers):
        spec = layer.spec
        if spec.kind not in ("conv", "fc"):
            layers.append(DecomposedLayer(spec=spec))
            continue
        if layer.weights is None:
            raise ValueError(f"layer {i} has no weights to decompose")
        bias = None if layer.bias is None else layer.bias.copy()
        if i in keep_exact:
            layers.append(DecomposedLayer(spec=spec, weights=layer.weights.copy(),
                                          bias=bias))
            continue
        if spec.kind == "conv":
            bases = decompose_conv_layer(layer.weights, cfg, layer_index=i,
                                         threads=threads)
        else:
            bases = decompose_fc_layer(layer.weights, cfg, layer_index=i,
                                       threads=threads)
        layers.append(DecomposedLayer(spec=spec, bases=bases, bias=bias))
    return DecomposedModel(name=model.name, input_shape=model.input_shape,
                           layers=layers, rank=cfg.k, source=model.name)


def decomposition_residuals(model, decomposed):
    """Per-layer reconstruction error statistics of a decomposition.

    Returns one record per conv/fc layer with the mean and max squared
    residual and the mean relative L2 residual across units.
    """
    from .decompose import cost

    records = []
    for i, (dense, dec) in enumerate(zip(model.layers, decomposed.layers)):
        spec = dense.spec
        if spec.kind not in ("conv", "fc"):
            continue
        if dec.bases is None:
            records.append({"layer": i, "kind": spec.kind, "kept_exact": True})
            continue
        vectors = dense.weights.reshape(spec.units, -1)
        costs = np.array([cost(vectors[n], b) for n, b in enumerate(dec.bases)])
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        rel = np.sqrt(costs) / np.where(norms == 0, 1.0, norms)
        records.append({
            "layer": i,
            "kind": spec.kind,
            "units": spec.units,
            "mean_cost": float(costs.mean()),
            "max_cost": float(costs.max()),
            "mean_rel_residual": float(rel.mean()),
        })
    return records


def _run_fc_kernel(words, coeffs, colsums, planes, popb, r, x_min, threads=1):
    n_units = words.shape[0]
    out = np.empty(n_units)
    if threads <= 1 or n_units < 4 * threads:
        kernels.binary_fc_forward(words, coeffs, colsums, planes, popb, r,
                                  x_min, out)
        return out
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, n_units, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(kernels.binary_fc_forward, words[a:b], coeffs[a:b],
                        colsums[a:b], planes, popb, r, x_min, out[a:b])
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        ]
        for f in futures:
            f.result()
    return out


def _run_conv_kernel(words, coeffs, colsums, col_planes, col_pops, r, x_min,
                     threads=1):
    n_filters = words.shape[0]
    out = np.empty((n_filters, col_pops.shape[0]))
    if threads <= 1 or n_filters < 2 * threads:
        kernels.binary_conv_forward(words, coeffs, colsums, col_planes,
                                    col_pops, r, x_min, out)
        return out
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, n_filters, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(kernels.binary_conv_forward, words[a:b], coeffs[a:b],
                        colsums[a:b], col_planes, col_pops, r, x_min, out[a:b])
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        ]
        for f in futures:
            f.result()
    return out


def quantized_patch_planes(x, kernel, stride, pad, qbits):
    """Quantize a conv input once and gather packed per-patch bitplanes.

    Returns (col_plane_words (P, Q, W), col_plane_pops (P, Q), r, x_min,
    geometry PatchMatrix of the integer level columns).  Padded positions
    encode the level of original-domain zero so reconstruction stays ~0
    there (clipped into the representable range when zero lies outside the
    tensor's value range).
    """
    levels, x_min, step = quantize_levels(x, qbits)
    pad_level = value_level(0.0, x_min, step, qbits)
    if pad:
        levels = np.pad(levels, ((0, 0), (pad, pad), (pad, pad)),
                        constant_values=pad_level)
    patch = im2col(levels, kernel, stride, 0)
    patch = PatchMatrix(columns=patch.columns, out_h=patch.out_h,
                        out_w=patch.out_w, stride=stride, pad=pad)
    cols_t = np.ascontiguousarray(patch.columns.T)   # (P, D)
    qbits = int(qbits)
    n_cols = cols_t.shape[0]
    n_words = max((cols_t.shape[1] + 63) // 64, 1)
    col_planes = np.empty((n_cols, qbits, n_words), dtype=np.uint64)
    for q in range(qbits):
        col_planes[:, q, :] = pack_words(((cols_t >> q) & 1).astype(np.uint8))
    col_pops = popcount_words(col_planes)
    r = step * np.power(2.0, np.arange(qbits))
    return col_planes, col_pops, r, x_min, patch


def conv_forward_approx(x, layer, qbits, threads=1):
    """Popcount convolution of one decomposed conv layer."""
    spec = layer.spec
    x = np.asarray(x)
    if x.shape[0] != spec.in_maps:
        raise ShapeMismatch(None, f"{spec.in_maps} input maps", x.shape)
    words, coeffs, colsums = layer.stacked()
    col_planes, col_pops, r, x_min, patch = quantized_patch_planes(
        x, spec.kernel, spec.stride, spec.pad, qbits
    )
    out = _run_conv_kernel(words, coeffs, colsums, col_planes, col_pops, r,
                           x_min, threads)
    if layer.bias is not None:
        out = out + np.asarray(layer.bias, dtype=np.float64)[:, None]
    return out.reshape(words.shape[0], patch.out_h, patch.out_w)


def fc_forward_approx(x, layer, qbits, threads=1):
    """Popcount fully-connected forward of one decomposed fc layer."""
    x = np.asarray(x).reshape(-1)
    spec = layer.spec
    if x.size != spec.in_dim:
        raise ShapeMismatch(None, spec.in_dim, x.size)
    qmap = quantize(x, qbits)
    words, coeffs, colsums = layer.stacked()
    out = _run_fc_kernel(words, coeffs, colsums, qmap.planes, qmap.popb,
                         qmap.r, qmap.x_min, threads)
    if layer.bias is not None:
        out = out + np.asarray(layer.bias, dtype=np.float64)
    return out


def forward(model, x, mode="exact", qbits=None, keep_exact=(),
            exact_overrides=None, threads=1):
    """Run a full forward pass.

    mode "exact" takes a dense NetworkModel; mode "approx" takes a
    DecomposedModel plus qbits and runs the popcount path on every
    decomposed conv/fc layer.  Layers listed in keep_exact (or present in
    exact_overrides as {index: (weights, bias)}) run the exact path inside
    an approximate forward.
    """
    x = np.asarray(x)
    if x.shape != tuple(model.input_shape):
        raise ShapeMismatch(-1, tuple(model.input_shape), x.shape)
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    if mode == "approx" and qbits is None:
        raise ValueError("approx mode requires qbits")
    keep_exact = set(keep_exact)
    exact_overrides = exact_overrides or {}

    current = x
    for i, layer in enumerate(model.layers):
        spec = layer.spec
        if spec.kind == "relu":
            current = relu(current)
        elif spec.kind == "maxpool":
            current = maxpool(current, spec.window, spec.stride)
        elif spec.kind == "conv":
            weights, bias, run_exact = _resolve_layer(
                layer, i, mode, keep_exact, exact_overrides)
            if run_exact:
                current = conv_forward_exact(current, weights, bias,
                                             spec.stride, spec.pad)
            else:
                current = conv_forward_approx(current, layer, qbits, threads)
        elif spec.kind == "fc":
            weights, bias, run_exact = _resolve_layer(
                layer, i, mode, keep_exact, exact_overrides)
            if run_exact:
                current = fc_forward_exact(current, weights, bias)
            else:
                current = fc_forward_approx(current, layer, qbits, threads)
    return current


def _resolve_layer(layer, index, mode, keep_exact, exact_overrides):
    """Decide exact vs approximate execution for a conv/fc layer."""
    if mode == "exact":
        if layer.weights is None:
            raise ValueError(f"layer {index}: exact mode needs dense weights")
        return layer.weights, layer.bias, True
    if index in exact_overrides:
        weights, bias = exact_overrides[index]
        return weights, bias, True
    dec_bases = getattr(layer, "bases", None)
    if index in keep_exact or dec_bases is None:
        if layer.weights is None:
            raise ValueError(
                f"layer {index}: marked keep-exact but has no dense weights"
            )
        return layer.weights, layer.bias, True
    return None, layer.bias, False
