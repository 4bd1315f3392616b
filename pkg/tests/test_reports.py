import numpy as np
import pytest

from bdnn.errors import BadConfig
from bdnn.model import Layer, LayerSpec, NetworkModel
from bdnn.reports import opcount_report, size_report
from bdnn.zoo import alexnet, vgg16

MIB = float(1 << 20)


def test_alexnet_size_table():
    report = size_report(alexnet(), rank=6)
    assert report.conv_original_bytes / MIB == pytest.approx(14.29, abs=0.005)
    assert report.conv_decomposed_bytes / MIB == pytest.approx(2.71, abs=0.005)
    assert report.fc_decomposed_bytes / MIB == pytest.approx(42.14, abs=0.005)


def test_vgg16_size_table():
    report = size_report(vgg16(), rank=6)
    assert report.conv_original_bytes / MIB == pytest.approx(56.12, abs=0.005)
    assert report.fc_decomposed_bytes / MIB == pytest.approx(88.64, abs=0.005)


def test_tiny_layer_size_arithmetic():
    net = NetworkModel("tiny", (8,), [Layer(LayerSpec.fc(8, 1))])
    report = size_report(net, rank=2)
    (entry,) = report.layers
    assert entry.original_bytes == 32.0          # 4 bytes x 8 weights
    assert entry.decomposed_bytes == 10.0        # 8*2/8 + 4*2


def test_fc_compression_ratio_approaches_32_over_k():
    net = NetworkModel("fc6", (9216,), [Layer(LayerSpec.fc(9216, 4096))])
    report = size_report(net, rank=6)
    ratio = report.fc_original_bytes / report.fc_decomposed_bytes
    assert ratio == pytest.approx(32 / 6, rel=0.02)


def test_size_report_is_shape_function_only():
    # weights never enter the accounting
    specs = [LayerSpec.conv(4, 2, 3, stride=1, pad=1), LayerSpec.fc(144, 5)]
    bare = NetworkModel("a", (2, 6, 6), [Layer(s) for s in specs])
    rng = np.random.default_rng(0)
    filled = NetworkModel("b", (2, 6, 6), [
        Layer(specs[0],
              rng.standard_normal((4, 2, 3, 3)).astype(np.float32)),
        Layer(specs[1], rng.standard_normal((5, 144)).astype(np.float32)),
    ])
    assert size_report(bare, 4).to_json()["totals"] == \
        size_report(filled, 4).to_json()["totals"]


def test_opcount_and_equals_bitcount_everywhere():
    for model in (alexnet(), vgg16()):
        for rank in (4, 6, 8):
            for qbits in (4, 6, 8):
                report = opcount_report(model, rank, qbits)
                for entry in report.layers:
                    assert entry.and_ops == entry.bitcount_ops


def test_opcount_word_arithmetic():
    net = NetworkModel("unit", (64,), [Layer(LayerSpec.fc(64, 1))])
    report = opcount_report(net, rank=6, qbits=6)
    (entry,) = report.layers
    assert entry.and_ops == 36        # 6 * 6 * ceil(64/64)
    assert entry.multiply_ops == 6 * 6 + 6 + 1


def test_opcount_counts_conv_positions():
    net = NetworkModel("c", (1, 5, 5),
                       [Layer(LayerSpec.conv(2, 1, 3, stride=1, pad=0))])
    report = opcount_report(net, rank=4, qbits=2)
    (entry,) = report.layers
    assert entry.units == 2 * 3 * 3
    assert entry.and_ops == entry.units * 4 * 2 * 1


def test_report_guards():
    net = NetworkModel("tiny", (8,), [Layer(LayerSpec.fc(8, 1))])
    with pytest.raises(BadConfig):
        size_report(net, 0)
    with pytest.raises(BadConfig):
        opcount_report(net, 0, 4)
    with pytest.raises(BadConfig):
        opcount_report(net, 4, 0)


def test_report_formatting_runs():
    sizes = size_report(alexnet(), 6)
    ops = opcount_report(alexnet(), 6, 6)
    assert "14.29" in sizes.format_table()
    assert "2.71" in sizes.format_table()
    assert sizes.to_json()["schema"].startswith("bdnn.size-report/")
    assert ops.to_json()["schema"].startswith("bdnn.opcount-report/")
