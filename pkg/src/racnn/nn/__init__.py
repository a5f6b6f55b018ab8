"""Toy training stack: layers, sequential graphs, Adam, datasets."""

from .data import (Dataset, IdxFormatError, SyntheticSpec, brightness_dataset, load_dataset,
                   parse_synthetic, read_idx, synthetic_dataset, write_idx)
from .graph import (ForwardCache, Graph, backward, build_one_swap, build_toy_pair, forward,
                    loss_and_grads, predict, toy_specs)
from .layers import KINDS, LayerSpec, softmax_xent
from .optim import TrainConfig, adam_step, init_moments
from .train import alpha_summary, evaluate, layer_alpha_stats, train
