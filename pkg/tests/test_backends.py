import json
import os
import subprocess
import sys

import numpy as np
import pytest

from racnn import _backend
from racnn.adaptive import RacnnParams, racnn_forward_sparse

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_numpy_fallback_always_available():
    assert "numpy" in _backend.available()
    assert _backend.name() in _backend.available()


def test_use_backend_restores():
    before = _backend.name()
    with _backend.use_backend("numpy"):
        assert _backend.name() == "numpy"
    assert _backend.name() == before
    with pytest.raises(ValueError):
        _backend.set_backend("fortran")


def test_env_override_selects_fallback():
    env = dict(os.environ, RACNN_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "from racnn import _backend; print(_backend.name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_native_extension_is_built():
    # the package is meant to ship the compiled kernels; the fallback is for
    # platforms without a compiler, not for this build
    assert "native" in _backend.available()


def test_backends_agree_on_sparse_layer():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (33, 31, 12)).astype(np.float32)
    p = RacnnParams.random(rng, 12, 10, alpha_bias=0.3, alpha_scale=1.0)
    outs = {}
    for name in _backend.available():
        with _backend.use_backend(name):
            outs[name] = racnn_forward_sparse(x, p)[0]
    ref = outs.pop("numpy")
    for out in outs.values():
        assert np.abs(out - ref).max() <= 1e-5


@pytest.mark.slow
def test_compare_backends_script():
    out = subprocess.run([sys.executable, os.path.join(ROOT, "benchmarks", "compare_backends.py"),
                          "--h", "32", "--c", "32", "--d", "16", "--f", "16", "--reps", "3"],
                         capture_output=True, text=True, check=True)
    report = json.loads(out.stdout)
    assert set(report["median_ms"]) == set(_backend.available())
    if "max_abs_diff" in report:
        assert report["max_abs_diff"] <= 1e-5
