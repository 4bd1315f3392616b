"""Model-size and operation-count accounting.

Sizes follow the 4-byte-per-parameter convention with tight bit packing
for the decomposed form: a layer of N units with per-unit dimensionality D
costs 4*N*D bytes dense and N*(D*k/8 + 4*k) bytes decomposed (k packed
bit-columns plus k float32 coefficients per unit).  Figures display in
MiB (2^20 bytes) labelled "MB".  The accounting deliberately ignores the
64-bit word padding the runtime adds, so reported decomposed sizes are the
information-theoretic ones.

Operation counts use one documented convention: per output unit the binary
path needs k*Q*ceil(D/64) word-AND operations, each followed by exactly
one popcount, plus k*Q + k + 1 real multiplies for the two contractions
and the offset term.
"""

from dataclasses import dataclass

from .errors import BadConfig
from .model import infer_shapes

MIB = float(1 << 20)


def _mib(nbytes):
    return nbytes / MIB


@dataclass(frozen=True)
class LayerSize:
    layer: int
    kind: str
    units: int
    dim: int
    original_bytes: float
    decomposed_bytes: float


@dataclass(frozen=True)
class SizeReport:
    rank: int
    layers: tuple

    def _total(self, kind, attr):
        return sum(getattr(e, attr) for e in self.layers if e.kind == kind)

    @property
    def conv_original_bytes(self):
        return self._total("conv", "original_bytes")

    @property
    def conv_decomposed_bytes(self):
        return self._total("conv", "decomposed_bytes")

    @property
    def fc_original_bytes(self):
        return self._total("fc", "original_bytes")

    @property
    def fc_decomposed_bytes(self):
        return self._total("fc", "decomposed_bytes")

    def to_json(self):
        return {
            "schema": "bdnn.size-report/1",
            "rank": self.rank,
            "unit": "MB (2^20 bytes)",
            "layers": [
                {"layer": e.layer, "kind": e.kind, "units": e.units,
                 "dim": e.dim, "original_mb": _mib(e.original_bytes),
                 "decomposed_mb": _mib(e.decomposed_bytes)}
                for e in self.layers
            ],
            "totals": {
                "conv_original_mb": _mib(self.conv_original_bytes),
                "conv_decomposed_mb": _mib(self.conv_decomposed_bytes),
                "fc_original_mb": _mib(self.fc_original_bytes),
                "fc_decomposed_mb": _mib(self.fc_decomposed_bytes),
            },
        }

    def format_table(self):
        lines = [f"Model size [MB], rank k={self.rank}"]
        header = f"{'layer':>5} {'kind':<5} {'units':>7} {'D':>7} " \
                 f"{'original':>10} {'decomposed':>11}"
        lines.append(header)
        lines.append("-" * len(header))
        for e in self.layers:
            lines.append(
                f"{e.layer:>5} {e.kind:<5} {e.units:>7} {e.dim:>7} "
                f"{_mib(e.original_bytes):>10.2f} "
                f"{_mib(e.decomposed_bytes):>11.2f}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"conv total: {_mib(self.conv_original_bytes):.2f} -> "
            f"{_mib(self.conv_decomposed_bytes):.2f}   "
            f"fc total: {_mib(self.fc_original_bytes):.2f} -> "
            f"{_mib(self.fc_decomposed_bytes):.2f}"
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class LayerOps:
    layer: int
    kind: str
    units: int
    dim: int
    and_ops: int
    bitcount_ops: int
    multiply_ops: int


@dataclass(frozen=True)
class OpCountReport:
    rank: int
    qbits: int
    layers: tuple

    def _total(self, kind, attr):
        return sum(getattr(e, attr) for e in self.layers if e.kind == kind)

    def totals(self, kind):
        return {
            "and_ops": self._total(kind, "and_ops"),
            "bitcount_ops": self._total(kind, "bitcount_ops"),
            "multiply_ops": self._total(kind, "multiply_ops"),
        }

    def to_json(self):
        return {
            "schema": "bdnn.opcount-report/1",
            "rank": self.rank,
            "qbits": self.qbits,
            "layers": [
                {"layer": e.layer, "kind": e.kind, "units": e.units,
                 "dim": e.dim, "and_ops": e.and_ops,
                 "bitcount_ops": e.bitcount_ops,
                 "multiply_ops": e.multiply_ops}
                for e in self.layers
            ],
            "totals": {"conv": self.totals("conv"), "fc": self.totals("fc")},
        }

    def format_table(self):
        lines = [f"Binary-path operations, k={self.rank}, Q={self.qbits}"]
        header = f"{'layer':>5} {'kind':<5} {'units':>9} {'AND':>13} " \
                 f"{'bitcount':>13} {'multiply':>13}"
        lines.append(header)
        lines.append("-" * len(header))
        for e in self.layers:
            lines.append(
                f"{e.layer:>5} {e.kind:<5} {e.units:>9} {e.and_ops:>13} "
                f"{e.bitcount_ops:>13} {e.multiply_ops:>13}"
            )
        lines.append("-" * len(header))
        conv, fc = self.totals("conv"), self.totals("fc")
        lines.append(
            f"conv: AND {conv['and_ops']}, bitcount {conv['bitcount_ops']}, "
            f"multiply {conv['multiply_ops']}"
        )
        lines.append(
            f"fc:   AND {fc['and_ops']}, bitcount {fc['bitcount_ops']}, "
            f"multiply {fc['multiply_ops']}"
        )
        return "\n".join(lines)


def size_report(model, rank):
    """Size accounting of every conv/fc layer at basis rank k."""
    if rank < 1:
        raise BadConfig(f"rank must be >= 1, got {rank}")
    entries = []
    for i, spec in enumerate(model.specs):
        if spec.kind not in ("conv", "fc"):
            continue
        n, d = spec.units, spec.weight_dim
        entries.append(LayerSize(
            layer=i, kind=spec.kind, units=n, dim=d,
            original_bytes=4.0 * n * d,
            decomposed_bytes=n * (d * rank / 8.0 + 4.0 * rank),
        ))
    return SizeReport(rank=rank, layers=tuple(entries))


def opcount_report(model, rank, qbits):
    """Binary-path operation counts per layer under the documented
    convention (word ops for AND/bitcount, real multiplies for the rest)."""
    if rank < 1:
        raise BadConfig(f"rank must be >= 1, got {rank}")
    if qbits < 1:
        raise BadConfig(f"qbits must be >= 1, got {qbits}")
    shapes = infer_shapes(model)
    entries = []
    for i, spec in enumerate(model.specs):
        if spec.kind not in ("conv", "fc"):
            continue
        if spec.kind == "conv":
            _, oh, ow = shapes[i]
            units = spec.out_maps * oh * ow
        else:
            units = spec.out_dim
        d = spec.weight_dim
        words = (d + 63) // 64
        word_ops = units * rank * qbits * words
        entries.append(LayerOps(
            layer=i, kind=spec.kind, units=units, dim=d,
            and_ops=word_ops, bitcount_ops=word_ops,
            multiply_ops=units * (rank * qbits + rank + 1),
        ))
    return OpCountReport(rank=rank, qbits=qbits, layers=tuple(entries))
