"""Binary-decomposed CNN inference.

Converts trained conv/fc weights into binary basis matrices plus scaling
coefficients, quantizes activations into bitplanes at run time, and
executes forward passes with word-packed AND + popcount kernels — no
retraining involved.
"""

from .bench import BenchResult, run_bench, run_compare
from .bitkernel import PackedBits, approx_dot, binary_dot, pack_bits
from .decompose import (BinaryBasis, DecomposeConfig, cost,
                        decompose_conv_layer, decompose_fc_layer,
                        decompose_vector, exhaustive_update_basis,
                        least_squares_coeffs)
from .inference import (DecomposedLayer, DecomposedModel, conv_forward_approx,
                        conv_forward_exact, decompose_model, fc_forward_approx,
                        fc_forward_exact, forward, im2col, maxpool, relu)
from .io import load_model, save_model
from .model import (Layer, LayerSpec, NetworkModel, conv_output_extent,
                    validate_model)
from .quantize import QuantizedMap, dequantize, quantization_step, quantize
from .reports import opcount_report, size_report
from .zoo import (ARCHITECTURES, alexnet, fc6, generate_synthetic,
                  random_decomposed, toy_convnet, vgg16)

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES", "BenchResult", "BinaryBasis", "DecomposeConfig",
    "DecomposedLayer", "DecomposedModel", "Layer", "LayerSpec",
    "NetworkModel", "PackedBits", "QuantizedMap", "alexnet", "approx_dot",
    "binary_dot", "conv_forward_approx", "conv_forward_exact",
    "conv_output_extent", "cost", "decompose_conv_layer",
    "decompose_fc_layer", "decompose_model", "decompose_vector",
    "dequantize", "exhaustive_update_basis", "fc6", "fc_forward_approx",
    "fc_forward_exact", "forward", "generate_synthetic", "im2col",
    "least_squares_coeffs", "load_model", "maxpool", "opcount_report",
    "pack_bits", "quantization_step", "quantize", "random_decomposed",
    "relu", "run_bench", "run_compare", "save_model", "size_report",
    "toy_convnet", "validate_model", "vgg16",
]
