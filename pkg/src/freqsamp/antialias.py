"""Time-aliasing mitigation with an exponential envelope.

Weighting an impulse response by ``gamma**n`` is the same as sampling its
transfer function on the circle of radius ``1/gamma``. Sampling every module
of a system on that circle, inverting, and multiplying by ``gamma**-n``
returns the impulse response with the wrapped-around tail attenuated by
``gamma**(2(M-1))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import FrequencyGrid, RealSignal, make_grid

NOISE_GUARD = 1e-12


@dataclass(frozen=True)
class AliasGuard:
    gamma: float
    wrap_length: int
    target_floor_db: float = 60.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")

    @classmethod
    def from_target(cls, num_bins: int, target_floor_db: float = 60.0) -> AliasGuard:
        gamma = choose_gamma(num_bins, None, target_floor_db)
        return cls(gamma, 2 * (num_bins - 1), target_floor_db)

    def grid(self, grid: FrequencyGrid) -> FrequencyGrid:
        return enveloped_grid(grid, self.gamma)


def choose_gamma(num_bins: int, sample_rate=None, target_floor_db: float = 60.0) -> float:
    """Decay so the envelope is ``-target_floor_db`` at the wrap point.

    ``sample_rate`` is accepted for call-site symmetry but unused: the rule is
    expressed in samples. Targets whose recovery gain ``gamma**-(2(M-1))``
    would exceed ``1/NOISE_GUARD`` are rejected.
    """
    if target_floor_db < 0:
        raise DomainError("target_floor_db must be non-negative")
    wrap = 2 * (num_bins - 1)
    if wrap < 1:
        raise DomainError("need at least 2 bins")
    if 10.0 ** (-target_floor_db / 20.0) < NOISE_GUARD:
        raise DomainError(
            f"a {target_floor_db} dB envelope would amplify numerical noise by more than "
            f"{1 / NOISE_GUARD:.0e}; use more frequency bins instead"
        )
    return float(10.0 ** (-target_floor_db / (20.0 * wrap)))


def enveloped_grid(grid: FrequencyGrid, gamma: float) -> FrequencyGrid:
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return make_grid(grid.num_bins, grid.sample_rate, grid.radius / gamma)


def recover_ir(hat_h, gamma: float):
    """Undo the envelope: ``h[n] = hat_h[n] * gamma**-n`` along axis 0."""
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    samples = hat_h.samples if isinstance(hat_h, RealSignal) else np.asarray(hat_h, dtype=float)
    n = np.arange(samples.shape[0], dtype=float)
    comp = np.exp(-n * np.log(gamma)).reshape((-1,) + (1,) * (samples.ndim - 1))
    out = samples * comp
    if isinstance(hat_h, RealSignal):
        return RealSignal(out, hat_h.sample_rate)
    return out
