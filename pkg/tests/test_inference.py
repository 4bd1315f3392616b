import numpy as np
import pytest

from bdnn.bitkernel import approx_dot, pack_words, popcount_words
from bdnn.decompose import BinaryBasis, DecomposeConfig, decompose_conv_layer
from bdnn.errors import KernelLargerThanInput, ShapeMismatch
from bdnn.inference import (DecomposedLayer, DecomposedModel,
                            conv_forward_approx, conv_forward_exact,
                            decompose_model, fc_forward_approx,
                            fc_forward_exact, forward, im2col, maxpool, relu,
                            validate_decomposed)
from bdnn.model import Layer, LayerSpec, NetworkModel
from bdnn.quantize import QuantizedMap, quantize_levels, value_level


def conv_loop_oracle(x, weights, bias, stride, pad):
    """Direct six-nested-loop convolution."""
    n_f, in_c, kh, kw = weights.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (xp.shape[1] - kh) // stride + 1
    ow = (xp.shape[2] - kw) // stride + 1
    out = np.zeros((n_f, oh, ow))
    for n in range(n_f):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for c in range(in_c):
                    for a in range(kh):
                        for b in range(kw):
                            acc += (weights[n, c, a, b]
                                    * xp[c, i * stride + a, j * stride + b])
                out[n, i, j] = acc + (bias[n] if bias is not None else 0.0)
    return out


# --------------------------------------------------------------- im2col


def test_im2col_single_patch():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    patch = im2col(x, 2, 1, 0)
    assert patch.columns.shape == (4, 1)
    np.testing.assert_array_equal(patch.columns[:, 0], [1, 2, 3, 4])


def test_im2col_1x1_is_identity_extraction():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4, 5))
    patch = im2col(x, 1, 1, 0)
    np.testing.assert_array_equal(patch.columns, x.reshape(3, -1))


def test_im2col_padding_corners():
    x = np.arange(1, 10, dtype=np.float64).reshape(1, 3, 3)
    patch = im2col(x, 3, 1, 1)
    assert patch.columns.shape == (9, 9)
    corner = patch.columns[:, 0]
    assert (corner == 0).sum() == 5  # top row and left column of the window
    np.testing.assert_array_equal(
        corner.reshape(3, 3), [[0, 0, 0], [0, 1, 2], [0, 4, 5]])


def test_im2col_kernel_too_large():
    with pytest.raises(KernelLargerThanInput):
        im2col(np.zeros((1, 3, 3)), 5, 1, 0)


def test_im2col_matches_flatten_order_of_filters():
    # column ordering must equal the (channel, row, col) filter flattening
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 5, 5))
    w = rng.standard_normal((1, 2, 3, 3))
    patch = im2col(x, 3, 2, 1)
    via_cols = (w.reshape(1, -1) @ patch.columns).reshape(
        1, patch.out_h, patch.out_w)
    np.testing.assert_allclose(via_cols, conv_loop_oracle(x, w, None, 2, 1),
                               rtol=1e-12)


# ------------------------------------------------------------ exact paths


def test_conv_exact_identity_1x1():
    out = conv_forward_exact(np.array([[[3.5]]]),
                             np.ones((1, 1, 1, 1)), None, 1, 0)
    np.testing.assert_array_equal(out, [[[3.5]]])


def test_conv_exact_zero_input_broadcasts_bias():
    out = conv_forward_exact(np.zeros((2, 4, 4)), np.ones((3, 2, 3, 3)),
                             np.array([1.0, -2.0, 0.5]), 1, 1)
    assert out.shape == (3, 4, 4)
    np.testing.assert_allclose(out[0], 1.0)
    np.testing.assert_allclose(out[1], -2.0)


def test_conv_exact_matches_loop_oracle():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    got = conv_forward_exact(x, w, b, 1, 1)
    np.testing.assert_allclose(got, conv_loop_oracle(x, w, b, 1, 1),
                               rtol=1e-5)


def test_fc_exact_identity():
    x = np.arange(5, dtype=np.float64)
    out = fc_forward_exact(x, np.eye(5), None)
    np.testing.assert_array_equal(out, x)


def test_fc_exact_zero_input_is_bias():
    out = fc_forward_exact(np.zeros(4), np.ones((3, 4)), np.array([1., 2., 3.]))
    np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])


def test_fc_exact_matches_naive_loop():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(256)
    w = rng.standard_normal((64, 256))
    got = fc_forward_exact(x, w, None)
    want = np.array([sum(w[n, d] * x[d] for d in range(256))
                     for n in range(64)])
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])


def test_maxpool_2x2():
    out = maxpool(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2, 2)
    np.testing.assert_array_equal(out, [[[4.0]]])


def test_maxpool_matches_loop_oracle():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((4, 6, 6))
    got = maxpool(x, 2, 2)
    want = np.zeros((4, 3, 3))
    for c in range(4):
        for i in range(3):
            for j in range(3):
                want[c, i, j] = x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
    np.testing.assert_array_equal(got, want)


def test_maxpool_window_too_large():
    with pytest.raises(KernelLargerThanInput):
        maxpool(np.zeros((1, 2, 2)), 3, 1)


# ----------------------------------------------------------- approx paths


def exact_conv_layer(weights, bias, stride, pad, rank, seed=0):
    spec = LayerSpec.conv(weights.shape[0], weights.shape[1],
                          weights.shape[2], stride=stride, pad=pad)
    cfg = DecomposeConfig(k=rank, L=16, seed=seed)
    bases = decompose_conv_layer(weights, cfg)
    return DecomposedLayer(spec=spec, bases=bases, bias=bias)


def test_conv_approx_degenerate_constant_input():
    # 1x1 input is a constant map: step 0, output recovers v exactly
    layer = DecomposedLayer(
        spec=LayerSpec.conv(1, 1, 1),
        bases=[BinaryBasis.from_dense(np.array([[1.0]]), np.array([1.0]))],
    )
    out = conv_forward_approx(np.array([[[2.75]]]), layer, qbits=6)
    np.testing.assert_allclose(out, [[[2.75]]], rtol=1e-12)


def test_conv_approx_exact_on_lattice_input():
    rng = np.random.default_rng(42)
    signs = rng.integers(0, 2, size=(2, 12, 2)) * 2.0 - 1.0
    coeffs = rng.integers(1, 8, size=(2, 2)).astype(np.float64)
    weights = np.einsum("ndk,nk->nd", signs, coeffs).reshape(2, 3, 2, 2)
    layer = exact_conv_layer(weights.astype(np.float32),
                             np.array([0.5, -0.25]), 1, 0, rank=2)
    # integer lattice input spanning 0..3: aligned for every even Q
    x = rng.integers(0, 4, size=(3, 4, 4)).astype(np.float64)
    x.flat[0], x.flat[1] = 0.0, 3.0
    exact = conv_forward_exact(x, weights, np.array([0.5, -0.25]), 1, 0)
    for qbits in (2, 4, 8):
        got = conv_forward_approx(x, layer, qbits=qbits)
        np.testing.assert_allclose(got, exact, rtol=1e-5, atol=1e-9)


def test_conv_approx_padding_encodes_true_zero():
    # with min(x) < 0 < max(x), padded entries reconstruct ~0, so a
    # same-padded conv of an exactly decomposable filter stays exact
    signs = np.array([[1.0], [-1.0], [1.0], [1.0]])
    weights = signs.reshape(1, 1, 2, 2).astype(np.float32) * 2.0
    layer = exact_conv_layer(weights, None, 1, 1, rank=1)
    x = np.array([[[-2.0, 1.0], [3.0, 0.0]]])  # lattice for Q=2 has step 5/3
    exact = conv_forward_exact(x, weights, None, 1, 1)
    got = conv_forward_approx(x, layer, qbits=4)
    # padding is exact; interior error bounded by step/2 per element times w
    assert np.abs(got - exact).max() <= 8 * (5.0 / 15)


def test_conv_approx_refinement():
    rng = np.random.default_rng(2)
    weights = rng.standard_normal((8, 3, 3, 3)).astype(np.float32)
    errors = {}
    for kq in (4, 8):
        layer = exact_conv_layer(weights, None, 1, 1, rank=kq, seed=1)
        errs = []
        for s in range(20):
            x = np.random.default_rng([3, s]).standard_normal((3, 16, 16))
            exact = conv_forward_exact(x, weights, None, 1, 1)
            got = conv_forward_approx(x, layer, qbits=kq)
            errs.append(np.linalg.norm(got - exact) / np.linalg.norm(exact))
        errors[kq] = np.mean(errs)
    assert errors[8] < errors[4]


def test_conv_approx_consistent_with_columnwise_approx_dot():
    """Every output position equals approx_dot on its own patch column."""
    rng = np.random.default_rng(5)
    weights = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    layer = exact_conv_layer(weights, None, 1, 1, rank=4, seed=2)
    x = rng.standard_normal((3, 6, 6))
    qbits = 6
    out = conv_forward_approx(x, layer, qbits=qbits)

    levels, x_min, step = quantize_levels(x, qbits)
    pad_level = value_level(0.0, x_min, step, qbits)
    padded = np.pad(levels, ((0, 0), (1, 1), (1, 1)),
                    constant_values=pad_level)
    patch = im2col(padded, 3, 1, 0)
    r = step * 2.0 ** np.arange(qbits)
    for p in range(patch.columns.shape[1]):
        col = patch.columns[:, p]
        bits = ((col[None, :] >> np.arange(qbits)[:, None]) & 1).astype(np.uint8)
        planes = pack_words(bits)
        qmap = QuantizedMap(D=col.size, Q=qbits, planes=planes, r=r,
                            x_min=x_min, step=step,
                            popb=popcount_words(planes))
        for n, basis in enumerate(layer.bases):
            assert out[n].ravel()[p] == pytest.approx(
                approx_dot(basis, qmap), rel=1e-12, abs=1e-12)


def test_fc_approx_worked_case():
    basis = BinaryBasis.from_dense(np.array([[1.0], [-1.0]]), np.array([1.0]))
    layer = DecomposedLayer(spec=LayerSpec.fc(2, 1), bases=[basis])
    out = fc_forward_approx(np.array([2.0, 0.0]), layer, qbits=1)
    np.testing.assert_allclose(out, [2.0], rtol=1e-12)


def test_fc_approx_constant_input_exact():
    rng = np.random.default_rng(1)
    signs = rng.integers(0, 2, size=(3, 9, 2)) * 2.0 - 1.0
    coeffs = rng.integers(1, 64, size=(3, 2)) / 16.0
    weights = np.einsum("ndk,nk->nd", signs, coeffs).astype(np.float32)
    cfg = DecomposeConfig(k=2, L=32, seed=0)
    from bdnn.decompose import cost, decompose_fc_layer
    bases = decompose_fc_layer(weights, cfg)
    # the Δd=0 identity needs a zero-residual decomposition
    assert all(cost(weights[n], b) <= 1e-12 for n, b in enumerate(bases))
    layer = DecomposedLayer(spec=LayerSpec.fc(9, 3), bases=bases)
    x = np.full(9, 4.25)
    got = fc_forward_approx(x, layer, qbits=6)
    np.testing.assert_allclose(got, fc_forward_exact(x, weights, None),
                               rtol=1e-9)


def test_fc_approx_refinement():
    rng = np.random.default_rng(8)
    weights = rng.standard_normal((32, 512)).astype(np.float32)
    from bdnn.decompose import decompose_fc_layer
    errors = {}
    for kq in (4, 8):
        cfg = DecomposeConfig(k=kq, L=4, seed=0)
        layer = DecomposedLayer(spec=LayerSpec.fc(512, 32),
                                bases=decompose_fc_layer(weights, cfg))
        errs = []
        for s in range(20):
            x = np.random.default_rng([9, s]).standard_normal(512)
            exact = fc_forward_exact(x, weights, None)
            got = fc_forward_approx(x, layer, qbits=kq)
            errs.append(np.linalg.norm(got - exact) / np.linalg.norm(exact))
        errors[kq] = np.mean(errs)
    assert errors[8] < errors[4]


def test_fc_approx_threaded_identical():
    rng = np.random.default_rng(14)
    weights = rng.standard_normal((64, 100)).astype(np.float32)
    from bdnn.decompose import decompose_fc_layer
    cfg = DecomposeConfig(k=4, L=2, seed=0)
    layer = DecomposedLayer(spec=LayerSpec.fc(100, 64),
                            bases=decompose_fc_layer(weights, cfg))
    x = rng.standard_normal(100)
    np.testing.assert_array_equal(fc_forward_approx(x, layer, qbits=6),
                                  fc_forward_approx(x, layer, qbits=6,
                                                    threads=4))


# ------------------------------------------------------------ forward


def identity_fc_net(dim=6):
    return NetworkModel("idnet", (dim,), [
        Layer(LayerSpec.fc(dim, dim), weights=np.eye(dim, dtype=np.float32),
              bias=np.zeros(dim, dtype=np.float32)),
    ])


def exactness_net():
    """conv(+-1 filters) -> relu -> fc({+-1,+-3} rows): every layer has an
    exact rank-2 decomposition, and on the frozen input every quantizer
    input is lattice-aligned for Q in {2,4,6,8}."""
    w1 = np.array([[[1.0, 1], [1, 1]], [[1, -1], [-1, 1]]],
                  dtype=np.float32).reshape(2, 1, 2, 2)
    rng = np.random.default_rng(3)
    signs = rng.integers(0, 2, size=(3, 8, 2)) * 2 - 1
    wfc = (signs @ np.array([2.0, 1.0])).astype(np.float32)
    net = NetworkModel("exactcase", (1, 4, 4), [
        Layer(LayerSpec.conv(2, 1, 2, stride=2, pad=0), w1,
              np.zeros(2, dtype=np.float32)),
        Layer(LayerSpec.relu()),
        Layer(LayerSpec.fc(8, 3), wfc,
              np.array([0.125, 0.0, -0.25], dtype=np.float32)),
    ])
    x = np.array([[0, 0, 3, 0], [0, 0, 0, 0], [1, 0, 0, 1], [0, 0, 1, 0]],
                 dtype=np.float64).reshape(1, 4, 4)
    return net, x


def test_forward_identity_exact():
    net = identity_fc_net()
    x = np.arange(6, dtype=np.float64)
    np.testing.assert_array_equal(forward(net, x, mode="exact"), x)


def test_forward_exactness_composition():
    net, x = exactness_net()
    exact = forward(net, x, mode="exact")
    dec = decompose_model(net, DecomposeConfig(k=2, L=16, seed=1))
    for qbits in (2, 4, 6, 8):
        approx = forward(dec, x, mode="approx", qbits=qbits)
        np.testing.assert_allclose(approx, exact, rtol=1e-5, atol=1e-9)


def test_forward_keep_exact_first():
    net, x = exactness_net()
    rng = np.random.default_rng(0)
    noisy = NetworkModel(net.name, net.input_shape, [
        Layer(net.layers[0].spec,
              net.layers[0].weights
              + rng.standard_normal((2, 1, 2, 2)).astype(np.float32),
              net.layers[0].bias),
        net.layers[1],
        net.layers[2],
    ])
    dec = decompose_model(noisy, DecomposeConfig(k=2, L=4, seed=0),
                          keep_exact={0})
    assert dec.layers[0].bases is None
    # the kept layer runs the dense path: composing it by hand matches
    out = forward(dec, x, mode="approx", qbits=6)
    stage = conv_forward_exact(x, noisy.layers[0].weights,
                               noisy.layers[0].bias, 2, 0)
    stage = relu(stage)
    want = fc_forward_approx(stage, dec.layers[2], qbits=6)
    np.testing.assert_array_equal(out, want)


def test_forward_exact_override_matches_dense_layer():
    net, x = exactness_net()
    dec = decompose_model(net, DecomposeConfig(k=2, L=4, seed=0))
    overrides = {0: (net.layers[0].weights, net.layers[0].bias)}
    out = forward(dec, x, mode="approx", qbits=6, exact_overrides=overrides)
    stage = relu(conv_forward_exact(x, net.layers[0].weights,
                                    net.layers[0].bias, 2, 0))
    want = fc_forward_approx(stage, dec.layers[2], qbits=6)
    np.testing.assert_array_equal(out, want)


def test_forward_error_sources_isolate():
    net, x = exactness_net()
    dec_exact_weights = decompose_model(net, DecomposeConfig(k=2, L=16, seed=1))
    # lattice input + exact weights: no error at all (tested above); now
    # perturb the input off the lattice: only quantization error remains,
    # bounded by the per-layer step sizes
    x_off = x + 0.01
    exact = forward(net, x_off, mode="exact")
    approx = forward(dec_exact_weights, x_off, mode="approx", qbits=8)
    assert np.abs(approx - exact).max() < 0.5


def test_lattice_input_isolates_weight_error():
    # with a lattice-aligned input the quantizer is exact, so the approx
    # output equals the exact forward on the reconstructed weights: all
    # remaining error is weight approximation
    rng = np.random.default_rng(20)
    weights = rng.standard_normal((5, 12)).astype(np.float32)
    from bdnn.decompose import decompose_fc_layer
    cfg = DecomposeConfig(k=2, L=4, seed=0)
    bases = decompose_fc_layer(weights, cfg)
    layer = DecomposedLayer(spec=LayerSpec.fc(12, 5), bases=bases)
    qbits = 4
    x = rng.integers(0, 2 ** qbits, size=12).astype(np.float64)
    x[0], x[1] = 0, 2 ** qbits - 1
    recon = np.stack([b.reconstruct() for b in bases])
    got = fc_forward_approx(x, layer, qbits=qbits)
    np.testing.assert_allclose(got, fc_forward_exact(x, recon, None),
                               rtol=1e-9, atol=1e-9)


def test_forward_input_validation():
    net = identity_fc_net()
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros(7), mode="exact")
    with pytest.raises(ValueError):
        forward(net, np.full(6, np.nan), mode="exact")
    dec = decompose_model(net, DecomposeConfig(k=2, L=2, seed=0))
    with pytest.raises(ValueError):
        forward(dec, np.zeros(6), mode="approx")  # missing qbits


def test_validate_decomposed_checks_counts():
    net = identity_fc_net()
    dec = decompose_model(net, DecomposeConfig(k=2, L=2, seed=0))
    validate_decomposed(dec)
    broken = DecomposedModel(name="x", input_shape=(6,), layers=[
        DecomposedLayer(spec=LayerSpec.fc(6, 6),
                        bases=dec.layers[0].bases[:3]),
    ], rank=2)
    with pytest.raises(ShapeMismatch):
        validate_decomposed(broken)
