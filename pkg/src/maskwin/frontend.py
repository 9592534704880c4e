"""Learnable windowing and spectral down-sampling layers.

The window length ``m`` (samples) and cutoff ``s`` (half-spectrum bins) are
continuous.  Windowing multiplies the signal by a centred taper (soft mode) or
by the binary support of that taper (hard mode).  In hard mode the gradient
with respect to ``m`` is taken from the taper (straight-through), while the
signal gradient uses the binary mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .spectral import Spectrum, fft_real, ifft_real, next_pow2
from .tensor import Tensor, custom_op

__all__ = [
    "FAMILIES", "MIN_M", "WindowSpec", "DownsampleSpec",
    "window_values", "window_grad_m", "hard_mask", "apply_window",
    "spectrum_mask_values", "spectrum_mask_grad_s", "downsample",
    "frontend_forward", "export_length",
]

FAMILIES = ("gaussian", "hamming", "hann", "tukey")
MIN_M = 8.0
_COSINE = {"hamming": (0.54, 0.46), "hann": (0.5, 0.5)}


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class WindowSpec:
    family: str
    m: float
    n: int
    epsilon: float = 1e-5
    tukey_alpha: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown window family {self.family!r}; choose from {FAMILIES}")
        if not MIN_M <= self.m <= self.n:
            raise ValueError(f"window length m={self.m} outside [{MIN_M}, {self.n}]")
        if not 0.0 < self.tukey_alpha <= 1.0:
            raise ValueError(f"tukey_alpha must lie in (0, 1], got {self.tukey_alpha}")

    @property
    def center(self) -> int:
        return (self.n - 1) // 2

    @property
    def length(self) -> int:
        """Number of samples in the discrete support, ``round(m)``."""
        return min(self.n, _round_half_up(self.m))

    @property
    def start(self) -> int:
        return (self.n - self.length) // 2


@dataclass(frozen=True)
class DownsampleSpec:
    s: float
    r: float
    n_bins: int
    rate_in: float

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"ramp width r must be >= 1, got {self.r}")
        if not self.r + 1 <= self.s <= self.n_bins:
            raise ValueError(f"cutoff s={self.s} outside [{self.r + 1}, {self.n_bins}]")

    @property
    def n_fft(self) -> int:
        return 2 * (self.n_bins - 1)

    @property
    def s_hz(self) -> float:
        return self.s * self.rate_in / self.n_fft

    def bins_to_hz(self, bins: float) -> float:
        return bins * self.rate_in / self.n_fft

    def hz_to_bins(self, hz: float) -> float:
        return hz * self.n_fft / self.rate_in


# ---------------------------------------------------------------------------
# windows


def hard_mask(spec: WindowSpec) -> np.ndarray:
    """Boolean support of the window: the samples the hard mask lets through."""
    idx = np.arange(spec.n)
    if spec.family == "gaussian":
        return np.abs(idx - spec.center) <= spec.m / 2
    out = np.zeros(spec.n, dtype=bool)
    out[spec.start : spec.start + spec.length] = True
    return out


def _tapered(spec: WindowSpec):
    """(value, d value/d m) for the cosine families on their support."""
    m = spec.m
    u = np.arange(spec.length, dtype=np.float64)
    du = -u / (m - 1) ** 2  # d(u/(m-1))/dm
    if spec.family in _COSINE:
        a0, a1 = _COSINE[spec.family]
        theta = 2 * np.pi * u / (m - 1)
        return a0 - a1 * np.cos(theta), a1 * np.sin(theta) * 2 * np.pi * du
    alpha = spec.tukey_alpha
    x = u / (m - 1)
    val = np.ones_like(x)
    dval = np.zeros_like(x)
    left = x < alpha / 2
    right = x > 1 - alpha / 2
    k = 2 * np.pi / alpha
    val[left] = 0.5 * (1 - np.cos(k * x[left]))
    dval[left] = 0.5 * k * np.sin(k * x[left]) * du[left]
    val[right] = 0.5 * (1 - np.cos(k * (1 - x[right])))
    dval[right] = -0.5 * k * np.sin(k * (1 - x[right])) * du[right]
    return val, dval


def _window_and_grad(spec: WindowSpec):
    if spec.family == "gaussian":
        d2 = (np.arange(spec.n) - spec.center) ** 2.0
        log_eps = math.log(spec.epsilon)
        w = np.exp(4 * log_eps * d2 / spec.m**2)
        return w, w * (-8 * log_eps) * d2 / spec.m**3
    w = np.zeros(spec.n)
    dw = np.zeros(spec.n)
    sl = slice(spec.start, spec.start + spec.length)
    w[sl], dw[sl] = _tapered(spec)
    return w, dw


def window_values(spec: WindowSpec) -> np.ndarray:
    """Soft mask over ``[0, n)``; zero outside the support for the cosine families."""
    return _window_and_grad(spec)[0]


def window_grad_m(spec: WindowSpec) -> np.ndarray:
    """Elementwise derivative of :func:`window_values` with the support held fixed."""
    return _window_and_grad(spec)[1]


def apply_window(x: Tensor, spec: WindowSpec, mode: str = "hard",
                 m: Optional[Tensor] = None):
    """Window the last axis of ``x``; returns ``(y, valid)``.

    ``m``, when given, is the scalar tensor holding the window length; its
    value overrides ``spec.m`` and it receives the length gradient.
    """
    if x.shape[-1] != spec.n:
        raise ValueError(f"apply_window: signal length {x.shape[-1]} != window support {spec.n}")
    if mode not in ("soft", "hard"):
        raise ValueError(f"mask mode must be 'soft' or 'hard', got {mode!r}")
    if m is not None:
        spec = replace(spec, m=m.item())
    w, dw = _window_and_grad(spec)
    valid = hard_mask(spec)
    gate = w if mode == "soft" else valid.astype(np.float64)
    xd = x.data
    inputs = (x,) if m is None else (x, m)

    def grad_fn(g):
        gx = g * gate if x.requires_grad else None
        if m is None:
            return (gx,)
        return gx, np.sum(g * xd * dw)

    return custom_op(f"window_{mode}", xd * gate, inputs, grad_fn), valid


# ---------------------------------------------------------------------------
# spectral down-sampling


def spectrum_mask_values(spec: DownsampleSpec) -> np.ndarray:
    """1 up to bin ``s``, linear ramp to 0 at ``s + r``, 0 beyond."""
    k = np.arange(spec.n_bins, dtype=np.float64)
    return np.clip((spec.s + spec.r - k) / spec.r, 0.0, 1.0)


def spectrum_mask_grad_s(spec: DownsampleSpec) -> np.ndarray:
    k = np.arange(spec.n_bins, dtype=np.float64)
    on_ramp = (k > spec.s) & (k < spec.s + spec.r)
    return np.where(on_ramp, 1.0 / spec.r, 0.0)


def export_length(n: int, s: float, n_bins: int) -> int:
    """Samples kept when ``n`` samples are decimated to bins ``[0, ceil(s)]``."""
    return max(1, _round_half_up(n * math.ceil(s) / n_bins))


def _check_bins(n: int, spec: DownsampleSpec) -> None:
    if next_pow2(n) != spec.n_fft:
        raise ValueError(f"downsample: signal length {n} does not match {spec.n_bins} bins")


def downsample(x: Tensor, spec: DownsampleSpec, mode: str = "train",
               s: Optional[Tensor] = None) -> Tensor:
    """Low-pass ``x`` along its last axis by masking its half spectrum.

    ``train`` keeps the full length; ``export`` inverts only bins
    ``[0, ceil(s)]`` and returns the decimated signal (no gradient).
    """
    n = x.shape[-1]
    _check_bins(n, spec)
    if s is not None:
        spec = replace(spec, s=s.item())
    X = fft_real(x.data)
    w = spectrum_mask_values(spec)
    if mode == "export":
        return Tensor(_export(X, w, spec, n))
    if mode != "train":
        raise ValueError(f"downsample mode must be 'train' or 'export', got {mode!r}")
    dw = spectrum_mask_grad_s(spec)
    inputs = (x,) if s is None else (x, s)

    def grad_fn(g):
        # mask is real and even, so the filter is self-adjoint
        gx = ifft_real(fft_real(g).scaled(w)) if x.requires_grad else None
        if s is None:
            return (gx,)
        return gx, np.sum(g * ifft_real(X.scaled(dw)))

    return custom_op("downsample", ifft_real(X.scaled(w)), inputs, grad_fn)


def _export(X: Spectrum, w: np.ndarray, spec: DownsampleSpec, n: int) -> np.ndarray:
    # nearest-bin truncation: the kept band is rounded up to whole bins
    out_len = export_length(n, spec.s, spec.n_bins)
    keep = min(math.ceil(spec.s) + 1, out_len // 2 + 1, spec.n_bins)
    half = np.zeros(X.bins.shape[:-1] + (out_len // 2 + 1,), dtype=np.complex128)
    half[..., :keep] = X.bins[..., :keep] * w[:keep]
    return np.fft.irfft(half, n=out_len, axis=-1) * (out_len / X.n_fft)


def frontend_forward(x: Tensor, wspec: WindowSpec, dspec: DownsampleSpec,
                     mode: str = "train", mask: str = "hard",
                     m: Optional[Tensor] = None, s: Optional[Tensor] = None):
    """Down-sample then window; returns ``(signal, valid)``.

    In ``export`` mode the result is the decimated signal cropped to the
    window support (no gradient) and ``valid`` is all true.
    """
    if wspec.n != x.shape[-1]:
        raise ValueError(f"window support {wspec.n} != signal length {x.shape[-1]}")
    if mode == "export":
        if m is not None:
            wspec = replace(wspec, m=m.item())
        if s is not None:
            dspec = replace(dspec, s=s.item())
        z = downsample(x, dspec, "export").data
        keep = min(z.shape[-1], export_length(wspec.length, dspec.s, dspec.n_bins))
        start = (z.shape[-1] - keep) // 2
        return Tensor(z[..., start : start + keep]), np.ones(keep, dtype=bool)
    z = downsample(x, dspec, "train", s=s)
    return apply_window(z, wspec, mask, m=m)
