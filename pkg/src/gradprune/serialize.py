"""Binary model format.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic "SPRN"
    4       2     format version u16 (currently 1)
    6       1     cell tag        (0 = rnn, 1 = gru)
    7       1     activation tag  (0 = tanh, 1 = clipped_relu)
    8       1     output mode tag (0 = last, 1 = all)
    9       1     reserved, 0
    10      4     input_dim u32
    14      4     hidden_size u32
    18      4     depth u32
    22      4     output_dim u32
    26      4     record count u32

followed by one record per parameter:

    2            name length u16, then that many UTF-8 bytes
    1            layer type tag (0 = recurrent, 1 = linear)
    1            rank u8 (1 = vector, 2 = matrix)
    4 * rank     dims u32
    1            storage tag (0 = dense row-major f32, 1 = CSR)
    payload      dense: prod(dims) float32
                 CSR:   nnz u32, row_ptr (rows+1) u32,
                        col_idx nnz u32, values nnz float32

A CSR payload is therefore exactly 8 * nnz + 4 * (rows + 1) + 4 bytes.
Serialization is deterministic, so serialize(deserialize(b)) == b.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ModelFormatError, ParameterError
from .sparse import CsrMatrix, SparseModel

MAGIC = b"SPRN"
FORMAT_VERSION = 1

_CELL_TAGS = {"rnn": 0, "gru": 1}
_ACT_TAGS = {"tanh": 0, "clipped_relu": 1}
_MODE_TAGS = {"last": 0, "all": 1}
_TYPE_TAGS = {"recurrent": 0, "linear": 1}

DENSE_STORAGE = 0
CSR_STORAGE = 1


def dense_payload_bytes(shape):
    n = 1
    for d in shape:
        n *= d
    return 4 * n


def csr_payload_bytes(rows, nnz):
    return 4 + 4 * (rows + 1) + 8 * nnz


def record_header_bytes(name, rank):
    return 2 + len(name.encode()) + 1 + 1 + 4 * rank + 1


def serialize(model):
    """Encode a SparseModel to bytes."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", FORMAT_VERSION)
    out += struct.pack(
        "<BBBB", _CELL_TAGS[model.cell], _ACT_TAGS[model.activation],
        _MODE_TAGS[model.output_mode], 0,
    )
    out += struct.pack(
        "<IIII", model.input_dim, model.hidden_size, model.depth, model.output_dim
    )
    out += struct.pack("<I", len(model.params))
    for name, value in model.params.items():
        nb = name.encode()
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", _TYPE_TAGS[model.layer_types[name]])
        if isinstance(value, CsrMatrix):
            out += struct.pack("<BII", 2, value.rows, value.cols)
            out += struct.pack("<B", CSR_STORAGE)
            out += struct.pack("<I", value.nnz)
            out += value.row_ptr.astype("<u4").tobytes()
            out += value.col_idx.astype("<u4").tobytes()
            out += value.values.astype("<f4").tobytes()
        else:
            a = np.ascontiguousarray(value, dtype=np.float32)
            out += struct.pack("<B", a.ndim)
            for d in a.shape:
                out += struct.pack("<I", d)
            out += struct.pack("<B", DENSE_STORAGE)
            out += a.astype("<f4").tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if self.offset + n > len(self.data):
            raise ModelFormatError(f"truncated file while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count, what):
        raw = self.take(np.dtype(dtype).itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype).copy()


def _untag(tags, tag, what, offset):
    for name, value in tags.items():
        if value == tag:
            return name
    raise ModelFormatError(f"unknown {what} tag {tag}", offset)


def deserialize(data):
    """Decode bytes produced by serialize()."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise ModelFormatError("bad magic, not a model file", 0)
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}", 4)
    tag_offset = r.offset
    cell_tag, act_tag, mode_tag, _reserved = r.unpack("<BBBB", "model tags")
    cell = _untag(_CELL_TAGS, cell_tag, "cell", tag_offset)
    activation = _untag(_ACT_TAGS, act_tag, "activation", tag_offset + 1)
    output_mode = _untag(_MODE_TAGS, mode_tag, "output mode", tag_offset + 2)
    input_dim, hidden_size, depth, output_dim = r.unpack("<IIII", "model dims")
    (count,) = r.unpack("<I", "record count")
    params = {}
    layer_types = {}
    for _ in range(count):
        record_offset = r.offset
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode()
        (type_tag,) = r.unpack("<B", "layer type")
        layer_type = _untag(_TYPE_TAGS, type_tag, "layer type", r.offset - 1)
        (rank,) = r.unpack("<B", "rank")
        if rank not in (1, 2):
            raise ModelFormatError(f"unsupported rank {rank}", r.offset - 1)
        dims = [r.unpack("<I", "dim")[0] for _ in range(rank)]
        (storage,) = r.unpack("<B", "storage tag")
        if storage == DENSE_STORAGE:
            n = int(np.prod(dims, dtype=np.int64))
            value = r.array("<f4", n, f"dense payload of {name}").reshape(dims)
        elif storage == CSR_STORAGE:
            if rank != 2:
                raise ModelFormatError("CSR storage requires a matrix", r.offset - 1)
            (nnz,) = r.unpack("<I", "nnz")
            row_ptr = r.array("<u4", dims[0] + 1, f"row_ptr of {name}")
            col_idx = r.array("<u4", nnz, f"col_idx of {name}")
            values = r.array("<f4", nnz, f"values of {name}")
            try:
                value = CsrMatrix(dims[0], dims[1], row_ptr, col_idx, values)
            except ParameterError as exc:
                raise ModelFormatError(f"invalid CSR record {name!r}: {exc}", record_offset) from exc
        else:
            raise ModelFormatError(f"unknown storage tag {storage}", r.offset - 1)
        params[name] = value
        layer_types[name] = layer_type
    if r.offset != len(data):
        raise ModelFormatError("trailing bytes after final record", r.offset)
    return SparseModel(
        cell=cell,
        activation=activation,
        output_mode=output_mode,
        input_dim=input_dim,
        hidden_size=hidden_size,
        depth=depth,
        output_dim=output_dim,
        params=params,
        layer_types=layer_types,
    )


def save_model(model, path):
    data = serialize(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def dense_equivalent_bytes(model):
    """Size the file would have with every record stored dense."""
    total = len(MAGIC) + 2 + 4 + 16 + 4
    for name, value in model.params.items():
        shape = value.shape
        total += record_header_bytes(name, len(shape))
        total += dense_payload_bytes(shape)
    return total


def compression_report(model):
    """Per-record byte accounting: (name, storage, dense_bytes, actual_bytes)."""
    rows = []
    for name, value in model.params.items():
        if isinstance(value, CsrMatrix):
            rows.append((name, "csr", dense_payload_bytes(value.shape),
                         csr_payload_bytes(value.rows, value.nnz)))
        else:
            b = dense_payload_bytes(value.shape)
            rows.append((name, "dense", b, b))
    return rows
