"""BDN1 container: dense and decomposed models in one binary format.

Layout:  4-byte magic "BDN1" | uint64 LE manifest length | canonical JSON
manifest | raw blob section.  Blobs are little-endian: float32 for dense
tensors and coefficients, uint64 words for packed bases.  The manifest
stores per-blob offset/length/dtype/shape, so load can validate bounds
before touching the data; save is deterministic, making save(load(p))
byte-identical to the original file.
"""

import hashlib
import json
import struct

import numpy as np

from .decompose import BinaryBasis
from .errors import (BadMagic, CorruptManifest, TruncatedBlob,
                     VersionMismatch)
from .inference import DecomposedLayer, DecomposedModel, validate_decomposed
from .model import Layer, LayerSpec, NetworkModel, validate_model

MAGIC = b"BDN1"
VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<u8": np.dtype("<u8")}


class _BlobWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def add(self, arr, dtype):
        raw = np.ascontiguousarray(arr).astype(dtype).tobytes()
        ref = {"offset": self.offset, "length": len(raw), "dtype": dtype,
               "shape": list(arr.shape)}
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref


def _spec_fields(spec):
    if spec.kind == "conv":
        return {"kind": "conv", "out_maps": spec.out_maps,
                "in_maps": spec.in_maps, "kernel": spec.kernel,
                "stride": spec.stride, "pad": spec.pad}
    if spec.kind == "fc":
        return {"kind": "fc", "in_dim": spec.in_dim, "out_dim": spec.out_dim}
    if spec.kind == "maxpool":
        return {"kind": "maxpool", "window": spec.window, "stride": spec.stride}
    return {"kind": "relu"}


def _spec_from_fields(entry):
    kind = entry["kind"]
    if kind == "conv":
        return LayerSpec.conv(entry["out_maps"], entry["in_maps"],
                              entry["kernel"], entry["stride"], entry["pad"])
    if kind == "fc":
        return LayerSpec.fc(entry["in_dim"], entry["out_dim"])
    if kind == "maxpool":
        return LayerSpec.maxpool(entry["window"], entry["stride"])
    if kind == "relu":
        return LayerSpec.relu()
    raise CorruptManifest(f"unknown layer kind {kind!r}")


def _encode(model):
    writer = _BlobWriter()
    manifest = {
        "version": VERSION,
        "endianness": "little",
        "name": model.name,
        "input_shape": list(model.input_shape),
        "layers": [],
    }
    if isinstance(model, DecomposedModel):
        manifest["kind"] = "decomposed"
        manifest["meta"] = {
            "rank": model.rank,
            "default_qbits": model.default_q,
            "source": model.source,
            "source_sha256": model.source_hash,
        }
    else:
        manifest["kind"] = "dense"
    for layer in model.layers:
        entry = _spec_fields(layer.spec)
        if layer.spec.kind in ("conv", "fc"):
            if getattr(layer, "bases", None) is not None:
                words = np.stack([b.words for b in layer.bases])
                coeffs = np.stack([b.coeffs for b in layer.bases])
                entry["rank"] = layer.bases[0].k
                entry["basis_words"] = writer.add(words, "<u8")
                entry["coeffs"] = writer.add(coeffs, "<f4")
            elif layer.weights is not None:
                entry["weights"] = writer.add(layer.weights, "<f4")
            if layer.bias is not None:
                entry["bias"] = writer.add(layer.bias, "<f4")
        manifest["layers"].append(entry)
    blob = b"".join(writer.chunks)
    header = json.dumps(manifest, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + blob


def save_model(model, path):
    """Serialize a NetworkModel or DecomposedModel to a BDN1 file."""
    data = _encode(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def _read_blob(blob, ref, what):
    try:
        offset, length = int(ref["offset"]), int(ref["length"])
        dtype = _DTYPES[ref["dtype"]]
        shape = tuple(int(v) for v in ref["shape"])
    except (KeyError, TypeError, ValueError):
        raise CorruptManifest(f"bad blob reference for {what}") from None
    if int(np.prod(shape)) * dtype.itemsize != length:
        raise CorruptManifest(
            f"{what}: shape {shape} does not match byte length {length}"
        )
    if offset < 0 or offset + length > len(blob):
        raise TruncatedBlob(
            f"{what}: blob [{offset}:{offset + length}] exceeds section "
            f"of {len(blob)} bytes"
        )
    arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)),
                        offset=offset).reshape(shape)
    return arr


def load_model(path):
    """Load a BDN1 file back into a NetworkModel or DecomposedModel."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a BDN1 container")
    if len(data) < 12:
        raise TruncatedBlob(f"{path}: shorter than the fixed header")
    (mlen,) = struct.unpack("<Q", data[4:12])
    if 12 + mlen > len(data):
        raise TruncatedBlob(f"{path}: manifest extends past end of file")
    try:
        manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptManifest(f"{path}: manifest is not valid JSON ({err})")
    if manifest.get("version") != VERSION:
        raise VersionMismatch(
            f"{path}: container version {manifest.get('version')!r}, "
            f"supported {VERSION}"
        )
    blob = data[12 + mlen:]
    try:
        kind = manifest["kind"]
        name = manifest["name"]
        input_shape = tuple(int(v) for v in manifest["input_shape"])
        entries = manifest["layers"]
    except (KeyError, TypeError, ValueError):
        raise CorruptManifest(f"{path}: manifest missing required fields") from None

    if kind == "dense":
        model = _decode_dense(name, input_shape, entries, blob)
        validate_model(model)
        return model
    if kind == "decomposed":
        model = _decode_decomposed(name, input_shape, entries,
                                   manifest.get("meta", {}), blob)
        validate_decomposed(model)
        return model
    raise CorruptManifest(f"{path}: unknown container kind {kind!r}")


def _decode_dense(name, input_shape, entries, blob):
    layers = []
    for i, entry in enumerate(entries):
        spec = _spec_from_fields(entry)
        weights = bias = None
        if "weights" in entry:
            weights = _read_blob(blob, entry["weights"], f"layer {i} weights")
            weights = np.ascontiguousarray(weights, dtype=np.float32)
        if "bias" in entry:
            bias = _read_blob(blob, entry["bias"], f"layer {i} bias")
            bias = np.ascontiguousarray(bias, dtype=np.float32)
        layers.append(Layer(spec=spec, weights=weights, bias=bias))
    return NetworkModel(name=name, input_shape=input_shape, layers=layers)


def _decode_decomposed(name, input_shape, entries, meta, blob):
    layers = []
    for i, entry in enumerate(entries):
        spec = _spec_from_fields(entry)
        if spec.kind not in ("conv", "fc"):
            layers.append(DecomposedLayer(spec=spec))
            continue
        bias = None
        if "bias" in entry:
            bias = np.ascontiguousarray(
                _read_blob(blob, entry["bias"], f"layer {i} bias"),
                dtype=np.float32)
        if "basis_words" in entry:
            words = _read_blob(blob, entry["basis_words"],
                               f"layer {i} basis words")
            coeffs = _read_blob(blob, entry["coeffs"], f"layer {i} coeffs")
            k = int(entry.get("rank", words.shape[1]))
            if words.ndim != 3 or coeffs.shape != words.shape[:2] \
                    or words.shape[1] != k:
                raise CorruptManifest(f"layer {i}: inconsistent basis blobs")
            D = spec.weight_dim
            if words.shape[2] != max((D + 63) // 64, 1):
                raise CorruptManifest(
                    f"layer {i}: basis word count does not match D={D}"
                )
            native = words.astype(np.uint64)
            bases = []
            for n in range(words.shape[0]):
                w_n = np.ascontiguousarray(native[n])
                colsum = (2 * np.bitwise_count(w_n).sum(axis=1, dtype=np.int64)
                          - D)
                bases.append(BinaryBasis(
                    D=D, k=k, words=w_n,
                    coeffs=coeffs[n].astype(np.float64),
                    colsum=colsum))
            layers.append(DecomposedLayer(spec=spec, bases=bases, bias=bias))
        elif "weights" in entry:
            weights = np.ascontiguousarray(
                _read_blob(blob, entry["weights"], f"layer {i} weights"),
                dtype=np.float32)
            layers.append(DecomposedLayer(spec=spec, weights=weights, bias=bias))
        else:
            raise CorruptManifest(f"layer {i}: no basis or weight blobs")
    return DecomposedModel(
        name=name, input_shape=input_shape, layers=layers,
        rank=int(meta.get("rank", 0) or 0),
        default_q=meta.get("default_qbits"),
        source=meta.get("source"),
        source_hash=meta.get("source_sha256"),
    )
