"""Reporting metrics: echo density profiles and loop eigenvalue spreads."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window
from scipy.special import erfc

from ..errors import DomainError, ShapeError
from ..grid import ComplexResponse, RealSignal

GAUSS_OUTLIER_FRACTION = float(erfc(1.0 / math.sqrt(2.0)))
MIN_WINDOW = 64


@dataclass
class EchoDensityProfile:
    times: np.ndarray
    eta: np.ndarray
    window: int

    def first_time_above(self, level: float = 0.9) -> float:
        """First time the profile reaches ``level``; ``inf`` if never."""
        hits = np.flatnonzero(self.eta >= level)
        return float(self.times[hits[0]]) if len(hits) else math.inf


def echo_density(ir, sample_rate=None, window=None, shape="hann", noise_floor=1e-6) -> EchoDensityProfile:
    """Normalized echo density of an impulse response.

    In each window the weighted fraction of samples exceeding the weighted
    standard deviation is divided by the Gaussian expectation
    ``erfc(1/sqrt(2))``, so Gaussian noise scores about 1. Windows advance
    by half their length; times are window centers in seconds.

    Samples at or below ``noise_floor`` times the peak never count as
    echoes, so numerical noise ahead of the first arrival scores 0 rather
    than looking like a dense Gaussian tail.
    """
    if isinstance(ir, RealSignal):
        sample_rate = ir.sample_rate if sample_rate is None else sample_rate
        x = ir.samples
    else:
        x = np.asarray(ir, dtype=float)
    if sample_rate is None:
        raise DomainError("sample_rate is required for a plain array")
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ShapeError("echo density needs a single channel")
        x = x[:, 0]
    window = int(round(0.02 * sample_rate)) if window is None else int(window)
    if window < MIN_WINDOW:
        raise DomainError(f"window must be at least {MIN_WINDOW} samples, got {window}")
    if len(x) < window:
        raise DomainError(f"signal of {len(x)} samples is shorter than the {window}-sample window")
    if shape == "rect":
        w = np.ones(window)
    else:
        w = get_window(shape, window, fftbins=False)
    w = w / w.sum()
    hop = window // 2
    frames = sliding_window_view(x, window)[::hop]
    std = np.sqrt(frames ** 2 @ w)
    floor = noise_floor * np.max(np.abs(x), initial=0.0)
    outside = (np.abs(frames) > std[:, None]) & (np.abs(frames) > floor)
    eta = (outside @ w) / GAUSS_OUTLIER_FRACTION
    times = (np.arange(len(frames)) * hop + window / 2) / sample_rate
    return EchoDensityProfile(times, eta, window)


@dataclass
class EigenStats:
    freqs_hz: np.ndarray
    magnitudes: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    max: np.ndarray

    @property
    def overall_q25(self) -> float:
        return float(np.percentile(self.magnitudes, 25))

    @property
    def overall_q75(self) -> float:
        return float(np.percentile(self.magnitudes, 75))

    @property
    def iqr(self) -> float:
        return self.overall_q75 - self.overall_q25

    @property
    def overall_max(self) -> float:
        return float(self.magnitudes.max())


def eig_magnitude_distribution(loop, freqs_hz=None) -> EigenStats:
    """Eigenvalue magnitudes of per-bin square matrices ``M x K x K``."""
    if isinstance(loop, ComplexResponse):
        freqs_hz = loop.grid.freqs_hz if freqs_hz is None else freqs_hz
        data = loop.data
    else:
        data = np.asarray(loop)
    if data.ndim != 3 or data.shape[1] != data.shape[2]:
        raise ShapeError(f"expected M x K x K matrices, got shape {data.shape}")
    mags = np.abs(np.linalg.eigvals(data))
    if freqs_hz is None:
        freqs_hz = np.arange(data.shape[0], dtype=float)
    q25, q75 = np.percentile(mags, [25, 75], axis=1)
    return EigenStats(np.asarray(freqs_hz), mags, q25, q75, mags.max(axis=1))


def write_echo_density_csv(path, profile: EchoDensityProfile):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "eta"])
        for t, e in zip(profile.times, profile.eta):
            writer.writerow([repr(float(t)), repr(float(e))])


def write_eig_csv(path, stats: EigenStats):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "q25", "q75", "max"])
        for row in zip(stats.freqs_hz, stats.q25, stats.q75, stats.max):
            writer.writerow([repr(float(v)) for v in row])
