"""Active acoustics feedback loop between microphones and loudspeakers.

The loop is ``Series(U, R, H_LM, G)``: a learnable FIR matrix ``U`` from
microphones to loudspeakers, a fixed noise reverberator ``R``, the fixed
room responses ``H_LM`` from loudspeakers back to microphones, and a
learnable per-microphone gain ``G``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..errors import ConfigurationError, DomainError, ShapeError
from ..grid import FrequencyGrid
from ..modules import Filter, ParallelGain
from ..system import Series

DECAY_60DB = 3.0 * np.log(10.0)  # ln(1000): amplitude envelope exp(-6.91 t / T60)


def synth_room_responses(n_out: int, n_in: int, t60: float, sample_rate: float, seed=0, length=None) -> np.ndarray:
    """Exponentially decaying Gaussian noise IRs, ``taps x n_out x n_in``.

    Every IR has unit energy. ``length`` defaults to ``T60`` seconds.
    """
    if not t60 > 0 or not sample_rate > 0:
        raise DomainError("T60 and sample rate must be positive")
    length = int(round(t60 * sample_rate)) if length is None else int(length)
    if length < 1:
        raise DomainError("IR length must be at least one sample")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / sample_rate
    env = np.exp(-DECAY_60DB * t / t60)
    irs = rng.standard_normal((length, n_out, n_in)) * env[:, None, None]
    return irs / np.sqrt(np.sum(irs ** 2, axis=0, keepdims=True))


def load_room_responses(folder, n_mics: int, n_louds: int) -> tuple[np.ndarray, float]:
    """Read ``mic<i>_ls<j>.wav`` (1-based) into ``taps x mics x louds``,
    zero-padding to the longest file."""
    from .audio import read_wav

    folder = Path(folder)
    found = {}
    for path in folder.glob("mic*_ls*.wav"):
        match = re.fullmatch(r"mic(\d+)_ls(\d+)\.wav", path.name)
        if match:
            found[(int(match[1]) - 1, int(match[2]) - 1)] = path
    missing = [(i + 1, j + 1) for i in range(n_mics) for j in range(n_louds) if (i, j) not in found]
    if missing:
        raise ConfigurationError(f"missing room responses for (mic, loudspeaker) pairs {missing}")
    data, rates = {}, set()
    for key in ((i, j) for i in range(n_mics) for j in range(n_louds)):
        x, fs = read_wav(found[key])
        data[key] = x if x.ndim == 1 else x[:, 0]
        rates.add(fs)
    if len(rates) != 1:
        raise ConfigurationError(f"room responses use mixed sample rates {sorted(rates)}")
    taps = max(len(x) for x in data.values())
    out = np.zeros((taps, n_mics, n_louds))
    for (i, j), x in data.items():
        out[: len(x), i, j] = x
    return out, float(rates.pop())


@dataclass
class AaSpec:
    mics: int = 4
    louds: int = 4
    room_t60: float = 0.3
    reverb_t60: float = 0.1
    fir_taps: int = 64
    gain: float = 1.0
    seed: int = 0
    room_irs: object = None


class AaLoop:
    """Container for the loop modules; :attr:`system` is the Series."""

    def __init__(self, spec: AaSpec, grid: FrequencyGrid):
        if spec.mics < 1 or spec.louds < 1 or spec.fir_taps < 1:
            raise ConfigurationError("channel counts and FIR length must be positive")
        self.spec = spec
        self.grid = grid
        fs = grid.sample_rate
        rng = np.random.default_rng(spec.seed)
        seeds = rng.integers(0, 2 ** 31, size=3)
        room = spec.room_irs
        if room is None:
            room = synth_room_responses(spec.mics, spec.louds, spec.room_t60, fs, seed=int(seeds[0]))
        room = np.asarray(room, dtype=float)
        if room.ndim != 3 or room.shape[1:] != (spec.mics, spec.louds):
            raise ShapeError(f"room responses must be taps x {spec.mics} x {spec.louds}, got {room.shape}")
        reverb = synth_room_responses(spec.louds, spec.louds, spec.reverb_t60, fs, seed=int(seeds[1]))
        u = np.random.default_rng(int(seeds[2])).normal(0.0, 1.0 / np.sqrt(spec.fir_taps * spec.mics),
                                                          size=(spec.fir_taps, spec.louds, spec.mics))
        self.U = Filter((spec.louds, spec.mics), grid, init=u, name="aa.U")
        self.R = Filter((spec.louds, spec.louds), grid, init=reverb, requires_grad=False, name="aa.R")
        self.H = Filter((spec.mics, spec.louds), grid, init=room, requires_grad=False, name="aa.H_LM")
        self.G = ParallelGain(spec.mics, grid, init=np.full(spec.mics, spec.gain), name="aa.G")
        self.system = Series(self.U, self.R, self.H, self.G, name="aa.loop")

    def loop_response(self) -> np.ndarray:
        """Per-bin ``mics x mics`` loop matrices."""
        return self.system.matrix_response().value


def max_magnitude_penalty(mag, limit: float = 1.0) -> ad.Var:
    """Mean squared excess of magnitudes above ``limit``."""
    mag = ad.as_var(mag)
    excess = (mag - limit) * (mag.value > limit)
    return ad.mean(ad.abs2(excess))
