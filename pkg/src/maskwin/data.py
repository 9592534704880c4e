"""Synthetic classification tasks with a known informative band and time span."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["SyntheticTaskSpec", "Dataset", "generate_dataset", "class_frequencies", "LAYOUTS"]

LAYOUTS = ("chord", "sequence")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Each class is a chord of tones inside ``informative_band`` that sounds
    only during ``informative_span``; distractor tones and white noise cover
    the whole signal and carry no label information."""

    num_classes: int = 10
    rate_in: float = 16000.0
    n: int = 4096
    informative_band: tuple = (500.0, 2000.0)
    informative_span: tuple = (1248, 2848)
    tones_per_class: int = 2
    tone_amp: tuple = (3.0, 6.0)
    noise_sigma: float = 0.1
    n_train: int = 2000
    n_test: int = 500
    seed: int = 0
    distractor_hz: tuple = (150.0,) + tuple(2250.0 + 200.0 * i for i in range(29))
    distractor_amp: float = 3.0
    decoy_amp: tuple = (3.0, 6.0)
    layout: str = "chord"
    label_noise: float = 0.1
    fade: int = 64

    def __post_init__(self):
        f_lo, f_hi = self.informative_band
        t_lo, t_hi = self.informative_span
        if not 0 < f_lo < f_hi < self.rate_in / 2:
            raise ValueError(f"informative_band {self.informative_band} must satisfy 0 < lo < hi < rate_in/2")
        if not 0 <= t_lo < t_hi <= self.n:
            raise ValueError(f"informative_span {self.informative_span} must lie inside [0, {self.n})")
        for f in self.distractor_hz:
            if f_lo <= f <= f_hi or not 0 < f < self.rate_in / 2:
                raise ValueError(f"distractor {f} Hz must lie outside the informative band and below Nyquist")
        if self.num_classes < 1 or self.tones_per_class < 1:
            raise ValueError("num_classes and tones_per_class must be positive")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if self.decoy_amp[1] > 0 and self.num_classes < 2:
            raise ValueError("decoys need at least two classes")
        if 2 * self.fade > (t_hi - t_lo) // self.tones_per_class:
            raise ValueError("fade longer than half of one tone segment")

    @property
    def n_bins(self) -> int:
        return self.n // 2 + 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    freqs: np.ndarray = field(repr=False)
    spec: SyntheticTaskSpec = field(repr=False)


def _slots(spec, n_slots, rng):
    f_lo, f_hi = spec.informative_band
    width = (f_hi - f_lo) / n_slots
    centers = f_lo + width * (np.arange(n_slots) + 0.5)
    return centers + rng.uniform(-0.25, 0.25, n_slots) * width


def class_frequencies(spec: SyntheticTaskSpec, rng: np.random.Generator) -> np.ndarray:
    """[num_classes x tones_per_class] tone frequencies.

    ``chord``: the band is cut into one slot per tone and slots are dealt to
    classes at random, so no two classes share a tone.  ``sequence``: a small
    shared pool of slot frequencies; each class is a distinct subset of it,
    so a single tone never identifies the class.
    """
    k, t = spec.num_classes, spec.tones_per_class
    if spec.layout == "chord":
        freqs = _slots(spec, k * t, rng)[rng.permutation(k * t)]
        return freqs.reshape(k, t)
    pool = t
    while math.comb(pool, t) < k:
        pool += 1
    combos = list(itertools.combinations(range(pool), t))
    pick = rng.permutation(len(combos))[:k]
    freqs = _slots(spec, pool, rng)
    return np.array([[freqs[i] for i in combos[c]] for c in pick])


def _envelope(spec: SyntheticTaskSpec, lo: int, hi: int) -> np.ndarray:
    env = np.zeros(spec.n)
    env[lo:hi] = 1.0
    if spec.fade:
        ramp = np.arange(1, spec.fade + 1) / spec.fade
        env[lo : lo + spec.fade] = ramp
        env[hi - spec.fade : hi] = ramp[::-1]
    return env


def _tone_envelopes(spec: SyntheticTaskSpec) -> list:
    """One envelope per tone: the whole span (chord) or consecutive parts of it (sequence)."""
    t_lo, t_hi = spec.informative_span
    if spec.layout == "chord":
        return [_envelope(spec, t_lo, t_hi)] * spec.tones_per_class
    edges = np.linspace(t_lo, t_hi, spec.tones_per_class + 1).round().astype(int)
    return [_envelope(spec, a, b) for a, b in zip(edges[:-1], edges[1:])]


def _draw(spec, freqs, count, rng):
    labels = np.arange(count) % spec.num_classes
    rng.shuffle(labels)
    t = np.arange(spec.n) / spec.rate_in
    envs = _tone_envelopes(spec)
    outside = np.sum(envs, axis=0) == 0
    x = np.zeros((count, spec.n))
    tone_amp = rng.uniform(*spec.tone_amp, (count, spec.tones_per_class))
    tone_phase = rng.uniform(0, 2 * np.pi, (count, spec.tones_per_class))
    for j in range(spec.tones_per_class):
        f = freqs[labels, j]
        x += envs[j] * tone_amp[:, j, None] * np.sin(2 * np.pi * f[:, None] * t + tone_phase[:, j, None])
    if spec.decoy_amp[1] > 0:
        # tones of another class, sounding only outside the informative span
        other = (labels + rng.integers(1, spec.num_classes, count)) % spec.num_classes
        amp = rng.uniform(*spec.decoy_amp, (count, spec.tones_per_class))
        phase = rng.uniform(0, 2 * np.pi, (count, spec.tones_per_class))
        decoy = np.zeros_like(x)
        for j in range(spec.tones_per_class):
            f = freqs[other, j]
            decoy += amp[:, j, None] * np.sin(2 * np.pi * f[:, None] * t + phase[:, j, None])
        x += decoy * outside
    n_dist = len(spec.distractor_hz)
    dist_amp = rng.uniform(0.0, spec.distractor_amp, (count, n_dist))
    dist_phase = rng.uniform(0, 2 * np.pi, (count, n_dist))
    for j, f in enumerate(spec.distractor_hz):
        x += dist_amp[:, j, None] * np.sin(2 * np.pi * f * t + dist_phase[:, j, None])
    x += spec.noise_sigma * rng.standard_normal((count, spec.n))
    return x, labels


def generate_dataset(spec: SyntheticTaskSpec) -> Dataset:
    """Balanced train/test sets; identical specs give bit-identical data.

    ``label_noise`` relabels that fraction of training examples to a random
    other class; test labels stay clean.
    """
    freq_seq, train_seq, test_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(4)
    freqs = class_frequencies(spec, np.random.default_rng(freq_seq))
    x_tr, y_tr = _draw(spec, freqs, spec.n_train, np.random.default_rng(train_seq))
    x_te, y_te = _draw(spec, freqs, spec.n_test, np.random.default_rng(test_seq))
    if spec.label_noise > 0 and spec.num_classes > 1:
        rng = np.random.default_rng(noise_seq)
        flip = rng.random(spec.n_train) < spec.label_noise
        shift = rng.integers(1, spec.num_classes, spec.n_train)
        y_tr = np.where(flip, (y_tr + shift) % spec.num_classes, y_tr)
    return Dataset(x_tr, y_tr, x_te, y_te, freqs, spec)
