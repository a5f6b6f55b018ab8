"""Binary model files (``.racn``).

Layout, all little-endian::

    magic        4 bytes  b"RACN"
    version      u32      FORMAT_VERSION
    input dims   u32 x 3  h, c, d of the graph input
    layer count  u32
    per layer:
      kind tag   u8       index into KIND_TAGS
      ndims      u32      number of dimension words that follow
      dims       u32 x ndims
      payload    f32 x N  parameters, sizes implied by kind and dims
    crc32        u32      zlib CRC-32 of every preceding byte

Dimension words and payload order per kind:

    std_conv3 / std_conv1   [d, f]     w (k*k*d x f)
    racnn_conv              [d, f]     w1 (d x f), w3_hollow (9d x f),
                                       w_alpha (d), b_alpha (1)
    dense                   [in, out]  w (in x out), b (out)
    relu, maxpool2, flatten, softmax_xent   []   (no payload)

Matrices are row-major. The hollow kernel's zero centre rows are stored.
"""

import os
import struct
import tempfile
import zlib

import numpy as np

from .adaptive import RacnnParams
from .lowering import center_rows
from .nn.graph import Graph
from .nn.layers import Conv, Dense, Flatten, LayerSpec, MaxPool2, RacnnConv, ReLU

MAGIC = b"RACN"
FORMAT_VERSION = 1
KIND_TAGS = ("std_conv3", "std_conv1", "racnn_conv", "relu", "maxpool2",
             "flatten", "dense", "softmax_xent")


class ModelFileError(ValueError):
    """Base class for unreadable model files."""


class FormatError(ModelFileError):
    pass


class VersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


class CorruptModelError(ModelFileError):
    """File decodes but violates a model invariant."""


def _f32(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def encode_graph(graph):
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<3I", *graph.input_shape),
             struct.pack("<I", len(graph.layers) + 1)]
    for layer in graph.layers:
        tag = KIND_TAGS.index(layer.kind)
        if layer.kind in ("std_conv3", "std_conv1"):
            dims, payload = (layer.d, layer.f), [layer.w]
        elif layer.kind == "racnn_conv":
            p = layer.p
            dims = (p.d, p.f)
            payload = [p.w1, p.w3_hollow, p.w_alpha, np.array([p.b_alpha])]
        elif layer.kind == "dense":
            dims, payload = (layer.n_in, layer.units), [layer.w, layer.b]
        else:
            dims, payload = (), []
        parts.append(struct.pack("<BI", tag, len(dims)))
        parts.append(struct.pack(f"<{len(dims)}I", *dims))
        parts.extend(_f32(a) for a in payload)
    parts.append(struct.pack("<BI", KIND_TAGS.index("softmax_xent"), 0))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(graph, path):
    """Write ``graph`` atomically: temp file in the target directory, then rename."""
    data = encode_graph(graph)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".racn-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise FormatError(f"truncated file at byte {self.pos}")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def floats(self, count, shape):
        size = 4 * count
        if self.pos + size > len(self.buf):
            raise FormatError(f"truncated payload at byte {self.pos}")
        arr = np.frombuffer(self.buf, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        return arr.astype(np.float32).reshape(shape)


def decode_graph(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r} (\"RACN\")")
    if len(data) < 8 + 4:
        raise FormatError("file too short")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}, expected {FORMAT_VERSION}")
    body, (crc,) = data[:-4], struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumError(f"CRC-32 mismatch: stored {crc:#010x}, computed {zlib.crc32(body):#010x}")

    r = _Reader(body)
    r.pos = 8
    input_shape = r.take("<3I")
    (count,) = r.take("<I")
    specs, layers = [], []
    for i in range(count):
        tag, ndims = r.take("<BI")
        if tag >= len(KIND_TAGS):
            raise FormatError(f"unknown layer tag {tag} in record {i}")
        kind = KIND_TAGS[tag]
        dims = r.take(f"<{ndims}I")
        want = 2 if kind in ("std_conv3", "std_conv1", "racnn_conv", "dense") else 0
        if ndims != want:
            raise FormatError(f"layer {i} ({kind}) has {ndims} dims, expected {want}")
        if kind in ("std_conv3", "std_conv1"):
            d, f = dims
            k = 3 if kind == "std_conv3" else 1
            layers.append(Conv(d, f, k, w=r.floats(k * k * d * f, (k * k * d, f))))
            specs.append(LayerSpec(kind, d=d, f=f))
        elif kind == "racnn_conv":
            d, f = dims
            w1 = r.floats(d * f, (d, f))
            w3h = r.floats(9 * d * f, (9 * d, f))
            wa = r.floats(d, (d,))
            b = float(r.floats(1, (1,))[0])
            if np.any(w3h[center_rows(d)] != 0):
                raise CorruptModelError(f"layer {i}: hollow kernel has non-zero centre taps")
            layers.append(RacnnConv(d, f, params=RacnnParams(w1, w3h, wa, b)))
            specs.append(LayerSpec(kind, d=d, f=f))
        elif kind == "dense":
            n_in, units = dims
            w = r.floats(n_in * units, (n_in, units))
            layers.append(Dense(n_in, units, w=w, b=r.floats(units, (units,))))
            specs.append(LayerSpec(kind, units=units))
        elif kind == "softmax_xent":
            if i != count - 1:
                raise CorruptModelError("softmax_xent head must be the last record")
            specs.append(LayerSpec(kind))
        else:
            layers.append({"relu": ReLU, "maxpool2": MaxPool2, "flatten": Flatten}[kind]())
            specs.append(LayerSpec(kind))
    if r.pos != len(body):
        raise FormatError(f"{len(body) - r.pos} unexpected bytes after the last layer")
    if not specs or specs[-1].kind != "softmax_xent":
        raise CorruptModelError("model has no softmax_xent head")
    try:
        return Graph(specs, input_shape, layers=layers)
    except ValueError as exc:
        raise CorruptModelError(f"layer shapes do not chain: {exc}") from exc


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_graph(data)
