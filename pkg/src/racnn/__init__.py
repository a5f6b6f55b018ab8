"""CPU engine for resolution-adaptive convolutions.

The adaptive layer blends a 1x1 and a hollow 3x3 convolution per pixel with
a learned weight alpha in [0, 1]; pixels with alpha == 0 skip the 3x3 work.
"""

from . import config
from ._backend import available as available_backends, name as backend_name, use_backend
from .adaptive import (AlphaMap, RacnnParams, SparseStats, conv2d, embed_center, hard_forward,
                       make_hollow, predict_time_factor, racnn_backward, racnn_forward_dense,
                       racnn_forward_sparse, selector_bias_for_zero_fraction)
from .errors import CacheError, NumericError, ShapeError
from .lowering import col2im, im2col
from .model_io import load_model, save_model
from .tensor import count_macs, matmul

__version__ = "0.1.0"
