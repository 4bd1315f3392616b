"""Exception types raised across the package."""


class BdnnError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(BdnnError):
    """Adjacent layers (or an operand pair) do not compose."""

    def __init__(self, layer_index, expected, actual):
        self.layer_index = layer_index
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"layer {layer_index}: expected input {expected}, got {actual}"
        )


class NonFiniteWeight(BdnnError):
    """A layer's weights or bias contain NaN or Inf."""

    def __init__(self, layer_index):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: non-finite weight values")


class KernelLargerThanInput(BdnnError):
    """Kernel extent exceeds the padded input extent."""


class DimensionMismatch(BdnnError):
    """Vector/matrix operands have incompatible dimensions."""


class SingularSystem(BdnnError):
    """Normal equations are singular and no regularization was allowed."""


class RankTooLarge(BdnnError):
    """Basis rank exceeds the exhaustive-enumeration guard."""


class EmptyInput(BdnnError):
    """Operation received an empty tensor."""


class BadBitDepth(BdnnError):
    """Quantization bit-depth outside the supported 1..16 range."""


class LengthMismatch(BdnnError):
    """Packed bit vectors have different logical lengths."""


class BadConfig(BdnnError):
    """Invalid configuration value (rank, bit-depth, run count, ...)."""


class BadMagic(BdnnError):
    """File does not start with the container magic."""


class VersionMismatch(BdnnError):
    """Container version is not supported."""


class CorruptManifest(BdnnError):
    """Container manifest is malformed or inconsistent with the blobs."""


class TruncatedBlob(BdnnError):
    """Container blob section is shorter than the manifest declares."""
