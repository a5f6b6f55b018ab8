"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback. ``RACNN_BACKEND=numpy`` forces the fallback at import time,
and :func:`use_backend` switches temporarily (benchmarks compare both).
"""

import contextlib
import os
import warnings

from . import _fallback

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None

_BACKENDS = {"numpy": _fallback}
if _native is not None:
    _BACKENDS["native"] = _native


def available():
    return sorted(_BACKENDS)


def _initial():
    requested = os.environ.get("RACNN_BACKEND", "").strip().lower()
    if requested:
        if requested in _BACKENDS:
            return requested
        warnings.warn(f"RACNN_BACKEND={requested!r} unavailable, using default")
    return "native" if _native is not None else "numpy"


_active = _initial()


def name():
    return _active


def kernels():
    return _BACKENDS[_active]


def set_backend(backend):
    global _active
    if backend not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {backend!r}; have {available()}")
    _active = backend


@contextlib.contextmanager
def use_backend(backend):
    previous = _active
    set_backend(backend)
    try:
        yield
    finally:
        set_backend(previous)
