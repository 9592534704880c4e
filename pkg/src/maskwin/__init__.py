"""Learnable window length and spectral cutoff for raw-signal classifiers."""

from .data import Dataset, SyntheticTaskSpec, generate_dataset
from .efficiency import (BackboneDesc, EnergyReport, PenaltyState, energy_report, epoch_update,
                         mac_count, penalty)
from .frontend import DownsampleSpec, WindowSpec, apply_window, downsample, frontend_forward
from .model import Backbone, build_backbone
from .spectral import fft_real, ifft_real
from .tensor import Parameter, Tape, Tensor, backward, sgd_step
from .train import RunLog, TrainConfig, evaluate, fixed_values, grid_search, train

__all__ = [
    "Dataset", "SyntheticTaskSpec", "generate_dataset",
    "BackboneDesc", "EnergyReport", "PenaltyState", "energy_report", "epoch_update", "mac_count", "penalty",
    "DownsampleSpec", "WindowSpec", "apply_window", "downsample", "frontend_forward",
    "Backbone", "build_backbone", "fft_real", "ifft_real",
    "Parameter", "Tape", "Tensor", "backward", "sgd_step",
    "RunLog", "TrainConfig", "evaluate", "fixed_values", "grid_search", "train",
]
__version__ = "0.1.0"
