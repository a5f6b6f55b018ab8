"""Datasets: seeded synthetic texture classes and IDX (ubyte) files.

IDX layout: big-endian magic ``0x00000800 | (type << 8) | ndim`` (only
unsigned-byte type 0x08 is accepted), ``ndim`` big-endian u32 sizes, then the
raw bytes. Images are 0x00000803 (n, rows, cols) and labels 0x00000801 (n,).
"""

import gzip
import os
import re
import struct
from dataclasses import dataclass

import numpy as np

from .. import config
from ..tensor import make_rng

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803


class IdxFormatError(ValueError):
    def __init__(self, message, offset, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (byte offset {offset})")
        self.offset = offset
        self.path = path


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    num_classes: int

    @property
    def input_shape(self):
        return tuple(self.x_train.shape[1:])


# -- IDX ---------------------------------------------------------------

def parse_idx(buf, path=None):
    """Decode an IDX ubyte buffer; raises :class:`IdxFormatError` on any defect."""
    if len(buf) < 4:
        raise IdxFormatError("file too short for IDX magic", len(buf), path)
    zero, dtype_code, ndim = struct.unpack_from(">HBB", buf, 0)
    if zero != 0:
        raise IdxFormatError(f"bad IDX magic 0x{int.from_bytes(buf[:4], 'big'):08x}", 0, path)
    if dtype_code != 0x08:
        raise IdxFormatError(f"unsupported IDX element type 0x{dtype_code:02x} (need ubyte 0x08)", 2, path)
    if ndim == 0:
        raise IdxFormatError("IDX file declares zero dimensions", 3, path)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxFormatError(f"header truncated: need {header} bytes, have {len(buf)}", len(buf), path)
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(buf) < expected:
        raise IdxFormatError(
            f"payload truncated: dims {dims} need {expected} bytes, have {len(buf)}", len(buf), path)
    if len(buf) > expected:
        raise IdxFormatError(f"{len(buf) - expected} trailing bytes after payload", expected, path)
    data = np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)
    return int.from_bytes(buf[:4], "big"), data.copy()


def read_idx(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        buf = fh.read()
    return parse_idx(buf, path=str(path))


def write_idx(path, array):
    """Write a uint8 array as IDX (used to build test fixtures)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_idx_dataset(images_path, labels_path, *, val_fraction=0.2, seed=0, dtype=None):
    magic, images = read_idx(images_path)
    if magic != IDX_IMAGES:
        raise IdxFormatError(f"expected image magic 0x{IDX_IMAGES:08x}, got 0x{magic:08x}", 0, str(images_path))
    magic, labels = read_idx(labels_path)
    if magic != IDX_LABELS:
        raise IdxFormatError(f"expected label magic 0x{IDX_LABELS:08x}, got 0x{magic:08x}", 0, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", 4, str(labels_path))
    if images.shape[0] == 0:
        raise ValueError("IDX dataset is empty")
    dt = dtype or config.default_dtype()
    x = (images.astype(np.float64) / 255.0).astype(dt)[..., None]
    y = labels.astype(np.int64)
    return _split(x, y, int(y.max()) + 1, val_fraction, seed)


def _split(x, y, num_classes, val_fraction, seed):
    order = make_rng([seed, 99]).permutation(len(y))
    n_val = max(1, int(round(val_fraction * len(y)))) if len(y) > 1 else 0
    val, train = order[:n_val], order[n_val:]
    return Dataset(x[train], y[train], x[val], y[val], num_classes)


# -- synthetic textures ----------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 4
    size: int = 16
    n_train: int = 800
    n_val: int = 200
    seed: int = 7
    noise: float = 0.05


_SYNTH_RE = re.compile(r"^(\d+)class$")


def parse_synthetic(name, **overrides):
    """``"4class"`` -> SyntheticSpec(classes=4, ...)."""
    m = _SYNTH_RE.match(name.strip().lower())
    if not m:
        raise ValueError(f"synthetic dataset spec must look like '4class', got {name!r}")
    return SyntheticSpec(classes=int(m.group(1)), **overrides)


def _pattern(kind, rng, size):
    yy, xx = np.mgrid[0:size, 0:size]
    period = int(rng.integers(2, 4))
    phase = int(rng.integers(0, 2 * period))
    if kind == 0:  # horizontal stripes
        return (((yy + phase) // period) % 2).astype(float)
    if kind == 1:  # vertical stripes
        return (((xx + phase) // period) % 2).astype(float)
    if kind == 2:  # single soft blob
        cy, cx = rng.uniform(size * 0.3, size * 0.7, size=2)
        sigma = rng.uniform(size * 0.12, size * 0.22)
        return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    if kind == 3:  # checkerboard
        return ((((yy + phase) // period) + ((xx + phase) // period)) % 2).astype(float)
    if kind == 4:  # diagonal stripes
        return (((yy + xx + phase) // period) % 2).astype(float)
    raise ValueError(f"no generator for class {kind}")


def _synth_image(label, rng, spec):
    size = spec.size
    background = rng.uniform(0.0, 0.25)
    img = np.full((size, size), background)
    if label == 2:
        img += rng.uniform(0.5, 0.75) * _pattern(label, rng, size)
    else:
        # textured patch on a flat background
        side = int(rng.integers(size // 2, size + 1))
        top = int(rng.integers(0, size - side + 1))
        left = int(rng.integers(0, size - side + 1))
        patch = _pattern(label, rng, side)
        img[top:top + side, left:left + side] += rng.uniform(0.5, 0.75) * patch
    img += rng.normal(0.0, spec.noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_dataset(spec=None, *, dtype=None):
    """Deterministic texture-classification set: stripes, blobs, checkers.

    Each class is balanced; images are (size, size, 1) in [0, 1].
    """
    spec = spec or SyntheticSpec()
    if not 2 <= spec.classes <= 5:
        raise ValueError("synthetic datasets support 2..5 classes")
    if spec.n_train < 1 or spec.n_val < 1:
        raise ValueError("synthetic dataset needs at least one train and one val image")
    dt = dtype or config.default_dtype()

    def make(n, stream):
        rng = make_rng([spec.seed, stream])
        labels = np.arange(n) % spec.classes
        rng.shuffle(labels)
        imgs = np.stack([_synth_image(int(lab), rng, spec) for lab in labels])
        return imgs[..., None].astype(dt), labels.astype(np.int64)

    x_train, y_train = make(spec.n_train, 0)
    x_val, y_val = make(spec.n_val, 1)
    return Dataset(x_train, y_train, x_val, y_val, spec.classes)


def brightness_dataset(n=200, size=4, seed=0, dtype=None):
    """Two linearly separable classes: dark images vs bright images."""
    rng = make_rng([seed, 5])
    dt = dtype or config.default_dtype()
    y = np.arange(n) % 2
    rng.shuffle(y)
    lo = np.where(y == 1, 0.6, 0.0)[:, None, None, None]
    x = lo + rng.uniform(0.0, 0.4, size=(n, size, size, 1))
    return _split(x.astype(dt), y.astype(np.int64), 2, 0.25, seed)


def load_dataset(source, **kwargs):
    """Dispatch on ``source``: SyntheticSpec, ``"4class"``-style name, or
    an ``(images_path, labels_path)`` pair of IDX files."""
    if isinstance(source, SyntheticSpec):
        return synthetic_dataset(source, dtype=kwargs.get("dtype"))
    if isinstance(source, str) and _SYNTH_RE.match(source.strip().lower()):
        dtype = kwargs.pop("dtype", None)
        return synthetic_dataset(parse_synthetic(source, **kwargs), dtype=dtype)
    if isinstance(source, (tuple, list)) and len(source) == 2:
        images, labels = source
        for p in (images, labels):
            if not os.path.exists(p):
                raise FileNotFoundError(p)
        return load_idx_dataset(images, labels, **kwargs)
    raise ValueError(f"cannot interpret dataset source {source!r}")
