"""WAV export and import (32-bit float)."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..errors import DomainError
from ..grid import RealSignal

log = logging.getLogger(__name__)


def write_wavs(stem, signal, sample_rate=None, normalize=True) -> list[Path]:
    """Write each channel to ``<stem>_ch<k>.wav``; returns the paths.

    With ``normalize`` the peak over all channels is scaled to 1 and the
    scale factor is logged.
    """
    if isinstance(signal, RealSignal):
        sample_rate = signal.sample_rate if sample_rate is None else sample_rate
        data = signal.samples
    else:
        data = np.asarray(signal, dtype=float)
    if sample_rate is None:
        raise DomainError("sample_rate is required for a plain array")
    if data.ndim == 1:
        data = data[:, None]
    if not np.all(np.isfinite(data)):
        raise DomainError("cannot write non-finite samples")
    scale = 1.0
    peak = float(np.max(np.abs(data), initial=0.0))
    if normalize and peak > 0:
        scale = 1.0 / peak
        log.info("%s: peak-normalized by factor %.6g", stem, scale)
    paths = []
    for k in range(data.shape[1]):
        path = Path(f"{stem}_ch{k}.wav")
        wavfile.write(path, int(round(sample_rate)), (data[:, k] * scale).astype(np.float32))
        paths.append(path)
    return paths


def read_wav(path) -> tuple[np.ndarray, float]:
    """Samples as float64 (integer formats scaled to [-1, 1)) and the rate."""
    fs, data = wavfile.read(path)
    if np.issubdtype(data.dtype, np.integer):
        data = data / float(np.iinfo(data.dtype).max + 1)
    return np.asarray(data, dtype=float), float(fs)
