"""Frequency grids, real-signal transforms and rational response evaluation.

A grid holds ``M`` points ``radius * exp(1j*pi*m/(M-1))`` covering angles
``0..pi``; together with Hermitian symmetry they describe a real signal of
``2*(M-1)`` samples. The forward transform carries no scaling, so the
response of taps ``b`` is literally ``sum_k b[k] z^-k``; the inverse carries
the ``1/(2(M-1))`` normalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .errors import (
    DomainError,
    InvalidGridError,
    NonHermitianError,
    ShapeError,
    SingularDenominatorError,
)


class TimeAliasingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    num_bins: int
    sample_rate: float
    radius: float = 1.0

    @cached_property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.num_bins) / (self.num_bins - 1)

    @cached_property
    def points(self) -> np.ndarray:
        z = self.radius * np.exp(1j * self.angles)
        # pin the endpoints so bins 0 and M-1 are exactly real
        z[0] = self.radius
        z[-1] = -self.radius
        return z

    @property
    def frame_length(self) -> int:
        """Length ``2(M-1)`` of the real signal described by the grid."""
        return 2 * (self.num_bins - 1)

    @property
    def freqs_hz(self) -> np.ndarray:
        return self.angles / np.pi * self.sample_rate / 2

    @property
    def gamma(self) -> float:
        return 1.0 / self.radius

    def bin_hz(self, index: int) -> float:
        return float(index) * self.sample_rate / self.frame_length

    def compatible(self, other: FrequencyGrid) -> bool:
        return (
            self.num_bins == other.num_bins
            and self.sample_rate == other.sample_rate
            and self.radius == other.radius
        )


def make_grid(num_bins: int, sample_rate: float, radius: float = 1.0) -> FrequencyGrid:
    if int(num_bins) != num_bins or num_bins < 2:
        raise InvalidGridError(f"a grid needs at least 2 bins, got {num_bins}")
    if not sample_rate > 0:
        raise DomainError(f"sample rate must be positive, got {sample_rate}")
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    return FrequencyGrid(int(num_bins), float(sample_rate), float(radius))


@dataclass(frozen=True)
class ComplexResponse:
    """Sampled response tied to the grid it was evaluated on.

    ``data`` has bins on axis 0 for module responses (``M x N_out x N_in`` or
    ``M x N``) and on axis 1 for batched signals (``B x M x N``).
    """

    data: np.ndarray
    grid: FrequencyGrid
    batched: bool = False

    def __post_init__(self):
        axis = 1 if self.batched else 0
        if self.data.ndim <= axis or self.data.shape[axis] != self.grid.num_bins:
            raise ShapeError(
                f"response of shape {self.data.shape} does not have {self.grid.num_bins} bins on axis {axis}"
            )

    @property
    def shape(self):
        return self.data.shape

    def _check(self, other: ComplexResponse):
        if not self.grid.compatible(other.grid):
            raise ShapeError("responses were sampled on different grids")

    def __mul__(self, other: ComplexResponse) -> ComplexResponse:
        self._check(other)
        return ComplexResponse(self.data * other.data, self.grid, self.batched or other.batched)

    def __add__(self, other: ComplexResponse) -> ComplexResponse:
        self._check(other)
        return ComplexResponse(self.data + other.data, self.grid, self.batched or other.batched)


@dataclass(frozen=True)
class RealSignal:
    """Time-domain samples; axis 0 is time, trailing axes are channels."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("signal contains non-finite samples")

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.length) / self.sample_rate


def _warn_if_aliasing(num_taps: int, grid: FrequencyGrid):
    if num_taps > grid.frame_length:
        warnings.warn(
            f"{num_taps} taps exceed the frame length {grid.frame_length}; "
            "the sampled response is time-aliased",
            TimeAliasingWarning,
            stacklevel=3,
        )


def dft_real(coeffs, grid: FrequencyGrid):
    """Evaluate ``sum_k coeffs[k] * z^-k`` at every grid point.

    Plain arrays give a :class:`ComplexResponse` of shape ``M x 1 x 1`` for a
    vector (``M x ...`` for taps with trailing channel axes). A :class:`Var`
    input gives a Var of shape ``M x ...`` so the call can sit inside a
    differentiable graph.
    """
    tracked = isinstance(coeffs, ad.Var)
    c = coeffs if tracked else ad.as_var(coeffs)
    if c.ndim == 0 or c.shape[0] == 0:
        raise DomainError("dft_real needs at least one coefficient")
    _warn_if_aliasing(c.shape[0], grid)
    out = ad.dft_real(c, grid.num_bins, grid.radius)
    if tracked:
        return out
    data = out.value
    if data.ndim == 1:
        data = data.reshape(-1, 1, 1)
    return ComplexResponse(data, grid)


def dft_direct(coeffs, grid: FrequencyGrid) -> np.ndarray:
    """Reference O(M*K) evaluation by explicit summation; used as an oracle."""
    c = np.asarray(coeffs, dtype=float)
    z = grid.points
    powers = z[:, None] ** -np.arange(c.shape[0])[None, :]
    return np.tensordot(powers, c, axes=([1], [0]))


def idft_hermitian(resp, sample_rate: float | None = None, check_radius: bool = True) -> RealSignal:
    """Inverse transform of a half spectrum to ``2(M-1)`` real samples.

    Accepts a :class:`ComplexResponse` or a plain array with bins on axis 0.
    The imaginary parts at DC and Nyquist must be below ``1e-6`` of the peak.
    """
    if isinstance(resp, ComplexResponse):
        if check_radius and resp.grid.radius != 1.0:
            raise DomainError(
                "idft_hermitian expects a unit-circle response; recover "
                "anti-aliased responses with antialias.recover_ir"
            )
        data = resp.data
        fs = resp.grid.sample_rate
    else:
        data = np.asarray(resp)
        fs = sample_rate if sample_rate is not None else 1.0
    data = np.asarray(data, dtype=complex)
    M = data.shape[0]
    if M < 2:
        raise InvalidGridError("need at least 2 bins")
    peak = np.max(np.abs(data), initial=0.0)
    edge = max(np.max(np.abs(data[0].imag), initial=0.0), np.max(np.abs(data[-1].imag), initial=0.0))
    if edge > 1e-6 * peak:
        raise NonHermitianError(
            f"imaginary part {edge:.3g} at DC/Nyquist exceeds 1e-6 of the peak {peak:.3g}"
        )
    samples = np.fft.irfft(data, n=2 * (M - 1), axis=0)
    return RealSignal(samples, fs)


def evaluate_rational(b, a, grid: FrequencyGrid, tol: float = 1e-12):
    """Ratio of the sampled numerator and denominator polynomials.

    Works on plain arrays (returns :class:`ComplexResponse`) or on :class:`Var`
    coefficient arrays with shape ``K x ...`` (returns a Var).
    """
    tracked = isinstance(b, ad.Var) or isinstance(a, ad.Var)
    bv, av = ad.as_var(b), ad.as_var(a)
    if av.ndim == 0 or av.shape[0] == 0 or bv.ndim == 0 or bv.shape[0] == 0:
        raise DomainError("coefficient vectors must be non-empty")
    if np.any(av.value[0] == 0):
        raise DomainError("a[0] must be non-zero")
    num = ad.dft_real(bv, grid.num_bins, grid.radius)
    den = ad.dft_real(av, grid.num_bins, grid.radius)
    small = np.abs(den.value) < tol
    if np.any(small):
        idx = np.argwhere(small)[0]
        m = int(idx[0])
        raise SingularDenominatorError(
            f"denominator vanishes at bin {m} ({grid.bin_hz(m):.6g} Hz): pole on the sampling contour",
            bin_index=m,
        )
    out = num / den
    if tracked:
        return out
    data = out.value
    if data.ndim == 1:
        data = data.reshape(-1, 1, 1)
    return ComplexResponse(data, grid)
