"""Energy-efficiency penalty and multiply-accumulate accounting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

from .frontend import DownsampleSpec, WindowSpec, export_length
from .tensor import Tensor, add, detach, mul, relu, scale, add_scalar

__all__ = [
    "PenaltyState", "penalty", "epoch_update",
    "Conv1dDesc", "LinearDesc", "PoolDesc", "BackboneDesc", "ChainError",
    "mac_count", "min_input_len", "effective_samples", "EnergyReport", "energy_report",
]


@dataclass
class PenaltyState:
    """Weight ``lam`` plus the previous-epoch means the penalty measures against."""

    lam: float
    mu_m: float
    mu_s: float
    sum_m: float = 0.0
    sum_s: float = 0.0
    count: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.mu_m <= 0 or self.mu_s <= 0:
            raise ValueError("mu_m and mu_s must be positive")

    @classmethod
    def initial(cls, lam: float, m0: float, s0: float) -> "PenaltyState":
        return cls(lam=lam, mu_m=float(m0), mu_s=float(s0))

    def accumulate(self, m: float, s: float) -> None:
        self.sum_m += float(m)
        self.sum_s += float(s)
        self.count += 1


def penalty(m: Tensor, s: Tensor, state: PenaltyState, loss_value: Tensor) -> Tensor:
    """``lam * [relu(m - mu_m)/mu_m + relu(s - mu_s)/mu_s] * loss`` with the loss detached."""
    growth = add(scale(relu(add_scalar(m, -state.mu_m)), 1.0 / state.mu_m),
                 scale(relu(add_scalar(s, -state.mu_s)), 1.0 / state.mu_s))
    return scale(mul(growth, detach(loss_value)), state.lam)


def epoch_update(state: PenaltyState) -> None:
    """Roll the epoch means into ``mu``; an empty epoch keeps the old means."""
    if state.count:
        state.mu_m = state.sum_m / state.count
        state.mu_s = state.sum_s / state.count
    state.sum_m = state.sum_s = 0.0
    state.count = 0


# ---------------------------------------------------------------------------
# backbone descriptions


@dataclass(frozen=True)
class Conv1dDesc:
    c_in: int
    c_out: int
    k: int
    stride: int = 1


@dataclass(frozen=True)
class LinearDesc:
    n_in: int
    n_out: int
    bias: bool = True


@dataclass(frozen=True)
class PoolDesc:
    """Mean over the time axis; collapses length to 1."""


Layer = Union[Conv1dDesc, LinearDesc, PoolDesc]


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class BackboneDesc:
    layers: tuple
    in_channels: int = 1

    def __post_init__(self):
        # a linear layer needs a flat input: pooled, or the chain has no convs before it
        channels, flat = self.in_channels, True
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv1dDesc):
                if layer.c_in != channels:
                    raise ChainError(f"layer {i}: conv1d expects {layer.c_in} channels, gets {channels}")
                channels, flat = layer.c_out, False
            elif isinstance(layer, PoolDesc):
                flat = True
            elif isinstance(layer, LinearDesc):
                if not flat or layer.n_in != channels:
                    raise ChainError(f"layer {i}: linear expects {layer.n_in} features, gets {channels}")
                channels = layer.n_out
            else:
                raise ChainError(f"layer {i}: unknown layer {layer!r}")

    @property
    def param_count(self) -> int:
        n = 0
        for layer in self.layers:
            if isinstance(layer, Conv1dDesc):
                n += layer.c_in * layer.c_out * layer.k
            elif isinstance(layer, LinearDesc):
                n += layer.n_in * layer.n_out + (layer.n_out if layer.bias else 0)
        return n

    def convs(self) -> list:
        return [layer for layer in self.layers if isinstance(layer, Conv1dDesc)]


def mac_count(desc: BackboneDesc, input_len: int) -> int:
    """Multiply-accumulates for one input of ``input_len`` samples."""
    length, macs = int(input_len), 0
    for i, layer in enumerate(desc.layers):
        if isinstance(layer, Conv1dDesc):
            if length < layer.k:
                raise ChainError(f"layer {i} (conv1d k={layer.k}): input length {length} too short")
            length = (length - layer.k) // layer.stride + 1
            macs += layer.c_in * layer.c_out * layer.k * length
        elif isinstance(layer, PoolDesc):
            length = 1
        elif isinstance(layer, LinearDesc):
            macs += layer.n_in * layer.n_out
    return macs


def min_input_len(desc: BackboneDesc) -> int:
    """Shortest input for which every conv layer yields at least one output."""
    length = 1
    for layer in reversed(desc.convs()):
        length = (length - 1) * layer.stride + layer.k
    return length


# ---------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    m_ms: float
    s_hz: float
    input_samples_effective: int
    macs: int
    mac_ratio_vs_reference: float
    param_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def effective_samples(m: float, s: float, n_bins: int, floor: int = 1) -> int:
    """Decimated window length ``round(round(m) * ceil(s) / n_bins)``, at least ``floor``."""
    m_len = int(math.floor(m + 0.5))
    return max(floor, export_length(m_len, s, n_bins))


def energy_report(wspec: WindowSpec, dspec: DownsampleSpec, desc: BackboneDesc,
                  reference: tuple) -> EnergyReport:
    """Cost of running ``desc`` on windows cut to ``(m, s)``, relative to ``reference``.

    Effective lengths shorter than the backbone's receptive field are counted
    as that minimum, since such inputs would be zero-padded before inference.
    """
    floor = min_input_len(desc)
    n_eff = effective_samples(wspec.m, dspec.s, dspec.n_bins, floor)
    n_ref = effective_samples(reference[0], reference[1], dspec.n_bins, floor)
    macs = mac_count(desc, n_eff)
    return EnergyReport(
        m_ms=wspec.m / dspec.rate_in * 1000.0,
        s_hz=dspec.s_hz,
        input_samples_effective=n_eff,
        macs=macs,
        mac_ratio_vs_reference=macs / mac_count(desc, n_ref),
        param_count=desc.param_count,
    )
