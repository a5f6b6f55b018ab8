"""Process-wide numeric settings: scalar width and GEMM worker count.

fp32 is the production width. fp64 exists for finite-difference gradient
checks; enable it with ``RACNN_FP64=1``, :func:`set_fp64` or the
:func:`precision` context manager.
"""

import contextlib
import os

import numpy as np

_state = {
    "dtype": np.float64 if os.environ.get("RACNN_FP64") == "1" else np.float32,
    "threads": 1,
}


def default_dtype():
    return _state["dtype"]


def set_fp64(enabled=True):
    _state["dtype"] = np.float64 if enabled else np.float32


def scalar_bits():
    return np.dtype(_state["dtype"]).itemsize * 8


@contextlib.contextmanager
def precision(width):
    """Temporarily switch the default scalar type (``"fp32"`` or ``"fp64"``)."""
    if width not in ("fp32", "fp64"):
        raise ValueError(f"precision must be 'fp32' or 'fp64', got {width!r}")
    previous = _state["dtype"]
    set_fp64(width == "fp64")
    try:
        yield
    finally:
        _state["dtype"] = previous


def threads():
    return _state["threads"]


def set_threads(n):
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _state["threads"] = int(n)
