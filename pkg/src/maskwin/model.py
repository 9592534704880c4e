"""Small 1-D CNN classifier that pools only over the valid part of its input."""

from __future__ import annotations

import numpy as np

from .efficiency import BackboneDesc, Conv1dDesc, LinearDesc, PoolDesc
from .tensor import (Parameter, Tensor, add_bias, conv1d, log_softmax, masked_mean,
                     matmul, relu, reshape, slice_last)

__all__ = ["Backbone", "build_backbone", "backbone_desc", "propagate_valid"]

CONV_LAYERS = ((1, 16, 9, 4), (16, 32, 9, 4), (32, 64, 9, 2))


def backbone_desc(num_classes: int) -> BackboneDesc:
    convs = tuple(Conv1dDesc(*c) for c in CONV_LAYERS)
    return BackboneDesc(convs + (PoolDesc(), LinearDesc(CONV_LAYERS[-1][1], num_classes)))


def propagate_valid(valid: np.ndarray, k: int, stride: int) -> np.ndarray:
    """An output position is valid if its receptive field touches a valid input."""
    windows = np.lib.stride_tricks.sliding_window_view(valid, k)[::stride]
    return windows.any(axis=1)


class Backbone:
    """conv-relu x3, masked mean over time, linear, log-softmax."""

    def __init__(self, desc: BackboneDesc, rng: np.random.Generator):
        self.desc = desc
        self.params: list[Parameter] = []
        self.convs = desc.convs()
        for i, c in enumerate(self.convs):
            a = 1.0 / np.sqrt(c.c_in * c.k)
            w = rng.uniform(-a, a, (c.c_out, c.c_in, c.k))
            self.params.append(Parameter(f"conv{i + 1}.weight", Tensor(w)))
        fc = [layer for layer in desc.layers if isinstance(layer, LinearDesc)][-1]
        a = 1.0 / np.sqrt(fc.n_in)
        self.fc_weight = Parameter("fc.weight", Tensor(rng.uniform(-a, a, (fc.n_in, fc.n_out))))
        self.fc_bias = Parameter("fc.bias", Tensor(rng.uniform(-a, a, fc.n_out)))
        self.params += [self.fc_weight, self.fc_bias]

    @property
    def param_count(self) -> int:
        return sum(p.value.size for p in self.params)

    def crop_range(self, valid: np.ndarray):
        """Input span that feeds every valid output of the last conv layer.

        Outputs outside it are masked out of the pooling, so dropping the rest
        of the input changes neither the logits nor any gradient.
        """
        masks = [np.asarray(valid, dtype=bool)]
        for c in self.convs:
            masks.append(propagate_valid(masks[-1], c.k, c.stride))
        hit = np.flatnonzero(masks[-1])
        lo, hi = int(hit[0]), int(hit[-1])
        for c in reversed(self.convs):
            lo, hi = lo * c.stride, hi * c.stride + c.k - 1
        return lo, hi + 1

    def __call__(self, x: Tensor, valid, crop: bool = True) -> Tensor:
        valid = np.asarray(valid, dtype=bool)
        batch, n = x.shape
        h = reshape(x, (batch, 1, n))
        if crop:
            lo, hi = self.crop_range(valid)
            if (lo, hi) != (0, n):
                h = slice_last(h, lo, hi)
                valid = valid[lo:hi]
        for c, p in zip(self.convs, self.params):
            h = relu(conv1d(h, p.tensor, c.stride))
            valid = propagate_valid(valid, c.k, c.stride)
        pooled = masked_mean(h, valid)
        return log_softmax(add_bias(matmul(pooled, self.fc_weight.tensor), self.fc_bias.tensor))


def build_backbone(num_classes: int, seed: int = 0) -> Backbone:
    return Backbone(backbone_desc(num_classes), np.random.default_rng(seed))
