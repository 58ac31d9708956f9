'''
Binary weight file, all integers little-endian:

    magic           : 4 bytes  b"SPKN"
    version         : u32      (currently 1)
    layer_count     : u32
    layer_count x
        kind        : u8       (LayerKind code)
        filters     : u32      (output channels / dense width, 0 if n/a)
        kernel      : u32      (kernel size, 0 if n/a)
        stride      : u32
        padding     : u8       (0 = same, 1 = valid)
    for each parameterized layer, in layer order,
    for each of its tensors (kernel or weights first, then bias):
        rank        : u32
        dims        : u32 x rank
        data        : float32 x prod(dims), row-major

Input channels are not stored; they are read back from the first
parameter tensor and then checked against the rest of the ModelSpec.
'''
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from specklenet.errors import (
    BadMagicError,
    SpecMismatchError,
    TruncatedFileError,
    VersionMismatchError,
    WeightFileError,
)
from specklenet.layers import Padding
from specklenet.model import LayerKind, LayerSpec, Model, ModelSpec

MAGIC = b"SPKN"
VERSION = 1
_LAYER = struct.Struct("<BIIIB")
_PADDING_CODES = {Padding.SAME: 0, Padding.VALID: 1}


def _tensor_keys(spec: ModelSpec) -> list[str]:
    keys = []
    for i, layer in enumerate(spec.layers):
        if layer.has_params:
            role = "weights" if layer.kind is LayerKind.DENSE else "kernel"
            keys += [f"{i}.{role}", f"{i}.bias"]
    return keys


def encode(model: Model) -> bytes:
    spec = model.spec
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(spec.layers))
    for layer in spec.layers:
        out += _LAYER.pack(int(layer.kind), layer.filters, layer.kernel_size, layer.stride,
                           _PADDING_CODES[layer.padding])
    for key in _tensor_keys(spec):
        arr = model.params[key]
        out += struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def header_size(spec: ModelSpec) -> int:
    shapes = spec.param_shapes()
    return 12 + _LAYER.size * len(spec.layers) + sum(4 + 4 * len(shapes[k]) for k in _tensor_keys(spec))


def save_weights(model: Model, path) -> int:
    """Write ``model`` to ``path``; returns the number of bytes written."""
    data = encode(model)
    Path(path).write_bytes(data)
    return len(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"weight file truncated reading {what}: need {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size, what))


def decode(data: bytes) -> Model:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatchError(f"weight file version {version}, this reader supports {VERSION}")
    (count,) = r.unpack("<I", "layer count")
    layers = []
    pad_by_code = {v: k for k, v in _PADDING_CODES.items()}
    for i in range(count):
        kind, filters, kernel, stride, pad = r.unpack(_LAYER.format, f"layer {i} record")
        try:
            layers.append(LayerSpec(LayerKind(kind), filters, kernel, stride, pad_by_code[pad]))
        except (ValueError, KeyError):
            raise WeightFileError(f"layer {i}: unknown kind {kind} or padding code {pad}") from None

    tensors = []
    for _ in range(2 * sum(layer.has_params for layer in layers)):
        (rank,) = r.unpack("<I", "tensor rank")
        dims = r.unpack(f"<{rank}I", "tensor dims")
        n = int(np.prod(dims)) if dims else 1
        raw = r.take(4 * n, f"tensor data of shape {dims}")
        tensors.append(np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims))
    if r.pos != len(data):
        raise WeightFileError(f"{len(data) - r.pos} trailing bytes after last tensor")

    if not tensors:
        spec = ModelSpec(tuple(layers), input_channels=1, num_classes=0)
        return Model(spec, {})
    first = tensors[0]
    input_channels = first.shape[2] if first.ndim >= 3 else first.shape[0]
    dense_widths = [layer.filters for layer in layers if layer.kind is LayerKind.DENSE]
    try:
        spec = ModelSpec(tuple(layers), input_channels=input_channels,
                         num_classes=dense_widths[-1] if dense_widths else 0)
        keys = _tensor_keys(spec)
        expected = spec.param_shapes()
    except ValueError as exc:
        raise SpecMismatchError(f"embedded spec is inconsistent: {exc}") from None
    params = {}
    for key, arr in zip(keys, tensors):
        if arr.shape != expected[key]:
            raise SpecMismatchError(f"tensor {key} has shape {arr.shape}, embedded spec implies {expected[key]}")
        params[key] = arr
    return Model(spec, params)


def load_weights(path) -> Model:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc.strerror}") from None
    return decode(data)
