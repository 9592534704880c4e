"""Radix-2 FFT for real signals and its half-spectrum inverse.

All transforms operate on the last axis and broadcast over leading axes, so a
batch of signals is transformed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["Spectrum", "fft_real", "ifft_real", "dft_naive", "next_pow2", "full_spectrum"]

# Imaginary parts at DC/Nyquist below this (relative to the largest bin) count as zero.
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Non-negative-frequency bins of a real signal.

    ``bins`` has ``n_fft // 2 + 1`` entries along its last axis, where
    ``n_fft`` is the (possibly zero-padded) transform length and
    ``source_len`` the length of the signal before padding.
    """

    bins: np.ndarray
    source_len: int

    @property
    def n_bins(self) -> int:
        return self.bins.shape[-1]

    @property
    def n_fft(self) -> int:
        return 2 * (self.n_bins - 1)

    def scaled(self, weights) -> "Spectrum":
        return Spectrum(self.bins * weights, self.source_len)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


@lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(size: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(size // 2) / size)


def _fft_pow2(a: np.ndarray) -> np.ndarray:
    """Iterative decimation-in-time FFT over the last axis (length 2**k)."""
    n = a.shape[-1]
    lead = a.shape[:-1]
    out = np.asarray(a, dtype=np.complex128)[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size)
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return out


def fft_real(x) -> Spectrum:
    """Half spectrum of real ``x``; non power-of-two lengths are zero-padded."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError(f"fft_real needs at least 2 samples, got {n}")
    n_fft = next_pow2(n)
    if n_fft != n:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, n_fft - n)]
        x = np.pad(x, pad)
    full = _fft_pow2(x)
    return Spectrum(full[..., : n_fft // 2 + 1], n)


def full_spectrum(spec: Spectrum) -> np.ndarray:
    """Mirror the half spectrum into all ``n_fft`` bins using conjugate symmetry."""
    half = spec.bins
    n = spec.n_fft
    mirrored = np.conj(half[..., 1 : n // 2][..., ::-1])
    return np.concatenate([half, mirrored], axis=-1)


def ifft_real(spec: Spectrum) -> np.ndarray:
    """Real signal whose half spectrum is ``spec``, cut back to ``source_len``."""
    bins = spec.bins
    n = spec.n_fft
    if n < 2 or n & (n - 1):
        raise ValueError(f"malformed spectrum: {spec.n_bins} bins")
    scale = max(1.0, float(np.max(np.abs(bins)))) if bins.size else 1.0
    edge = np.abs(bins[..., [0, -1]].imag)
    if edge.size and edge.max() > SYMMETRY_TOL * scale:
        raise ValueError("malformed spectrum: DC/Nyquist bins must be real")
    full = full_spectrum(spec)
    full[..., 0] = full[..., 0].real
    full[..., n // 2] = full[..., n // 2].real
    x = np.conj(_fft_pow2(np.conj(full))).real / n
    return x[..., : spec.source_len]


def dft_naive(x) -> Spectrum:
    """Direct O(N^2) summation; reference for :func:`fft_real`."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    n_fft = next_pow2(n)
    k = np.arange(n_fft // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    kernel = np.exp(-2j * np.pi * k * t / n_fft)
    return Spectrum(x @ kernel.T, n)
