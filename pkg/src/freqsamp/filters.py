"""Parametric filters: RBJ biquads, state-variable filters and graphic EQs.

All coefficient formulas are written with :mod:`freqsamp.autodiff` ops so the
same code yields plain numbers or a differentiable graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DomainError
from .grid import evaluate_rational
from .modules import DspModule, register_module

LN10_40 = math.log(10.0) / 40.0
LN10_20 = math.log(10.0) / 20.0

BIQUAD_KINDS = ("lowpass", "highpass", "bandpass")
SVF_MODES = ("lowpass", "highpass", "bandpass", "lowshelf", "highshelf", "peaking", "notch", "generic")


def _db_to_amp(gain_db, per=LN10_20):
    return ad.exp(ad.as_var(gain_db) * per)


def biquad_coeffs(kind, w0, Q, gain_db=0.0):
    """RBJ cookbook coefficients, normalized so ``a[0] == 1``.

    ``kind`` is one of lowpass/highpass/bandpass (bandpass with 0 dB peak),
    or peaking/lowshelf/highshelf as used by the graphic EQ. For the first
    three, ``gain_db`` scales the numerator (passband gain). Returns ``(b, a)``
    as Vars of shape ``3 x ...``.
    """
    w0, Q = ad.as_var(w0), ad.as_var(Q)
    assert np.all((w0.value > 0) & (w0.value < np.pi)), "cutoff mapped outside (0, pi)"
    cw = ad.cos(w0)
    alpha = ad.sin(w0) / (Q * 2.0)
    if kind in ("peaking", "lowshelf", "highshelf"):
        A = _db_to_amp(gain_db, LN10_40)
        if kind == "peaking":
            b = [1.0 + alpha * A, cw * -2.0, 1.0 - alpha * A]
            a = [1.0 + alpha / A, cw * -2.0, 1.0 - alpha / A]
        else:
            sa = ad.sqrt(A) * alpha * 2.0
            ap, am = A + 1.0, A - 1.0
            if kind == "lowshelf":
                b = [A * (ap - am * cw + sa), A * (am - ap * cw) * 2.0, A * (ap - am * cw - sa)]
                a = [ap + am * cw + sa, (am + ap * cw) * -2.0, ap + am * cw - sa]
            else:
                b = [A * (ap + am * cw + sa), A * (am + ap * cw) * -2.0, A * (ap + am * cw - sa)]
                a = [ap - am * cw + sa, (am - ap * cw) * 2.0, ap - am * cw - sa]
    elif kind in BIQUAD_KINDS:
        a = [1.0 + alpha, cw * -2.0, 1.0 - alpha]
        g = _db_to_amp(gain_db)
        if kind == "bandpass":
            b = [alpha * g, alpha * 0.0, -alpha * g]
        else:
            # The cookbook numerators equal (1 +- a1 + a2)/4 * [1, +-2, 1] after
            # normalization; deriving them from the normalized denominator
            # keeps the DC (lowpass) or Nyquist (highpass) gain at exactly g
            # even when w0 is close to 0 or pi.
            a = _normalized_stack(a)
            sign = 1.0 if kind == "lowpass" else -1.0
            edge = (a[0] + a[1] * sign + a[2]) * g
            b = ad.stack([edge * 0.25, edge * (0.5 * sign), edge * 0.25])
            return b, a
    else:
        raise ConfigurationError(f"unknown biquad kind {kind!r}")
    b = _stack_broadcast(b)
    a = _stack_broadcast(a)
    return b / a[0], a / a[0]


def _stack_broadcast(items):
    shape = np.broadcast_shapes(*(ad.as_var(c).shape for c in items))
    return ad.stack([ad.as_var(c) + np.zeros(shape) for c in items])


def _normalized_stack(items):
    a = _stack_broadcast(items)
    return a / a[0]


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def _inv_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def map_cutoff(raw):
    """``sigmoid(raw) * pi``: any real maps into (0, pi)."""
    return ad.sigmoid(raw) * np.pi


def hz_to_raw_cutoff(freq_hz, fs):
    return _logit(2.0 * np.asarray(freq_hz, dtype=float) / fs)


class _RationalModule(DspModule):
    frequency_dependent = True

    def coeffs(self, tape=None):
        """List of ``(b, a)`` second-order sections."""
        return self.sos(tape)[1]

    def sos(self, tape=None):
        """``(scale, sections)``; ``scale`` is a broadband gain or None."""
        return None, self.coeffs(tape)

    def response(self, tape=None):
        scale, sections = self.sos(tape)
        b = ad.stack([s[0] for s in sections], axis=1)
        a = ad.stack([s[1] for s in sections], axis=1)
        out = ad.prod(evaluate_rational(b, a, self.grid), axis=1)
        return out if scale is None else out * scale

    def numpy_coeffs(self):
        return [(b.value, a.value) for b, a in self.coeffs()]


@register_module
class Biquad(_RationalModule):
    """RBJ lowpass/highpass/bandpass with learnable cutoff, Q and gain.

    ``raw[0]`` maps to the cutoff through :func:`map_cutoff`, ``raw[1]`` to
    Q through softplus, ``raw[2]`` is the passband gain in dB.
    """

    def __init__(self, size, grid, kind="lowpass", cutoff_hz=None, Q=None, gain_db=0.0, **kwargs):
        if kind not in BIQUAD_KINDS:
            raise ConfigurationError(f"unknown biquad kind {kind!r}; known: {BIQUAD_KINDS}")
        self.kind = kind
        super().__init__(size, grid, param_shape=(3,), **kwargs)
        if cutoff_hz is not None:
            self.raw[0] = hz_to_raw_cutoff(cutoff_hz, grid.sample_rate)
        if Q is not None:
            self.raw[1] = _inv_softplus(Q)
        if gain_db is not None and kwargs.get("init") is None:
            self.raw[2] = gain_db

    def config(self):
        return {**super().config(), "kind": self.kind}

    def snapshot(self):
        return {**super().snapshot(), "kind": self.kind}

    def coeffs(self, tape=None):
        p = self.param(tape)
        return [biquad_coeffs(self.kind, map_cutoff(p[0]), ad.softplus(p[1]), p[2])]


@register_module
class ParallelBiquad(Biquad):
    def __init__(self, size, grid, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, **kwargs)


_SVF_EXTRA = {"lowpass": 0, "highpass": 0, "bandpass": 0, "notch": 0,
              "lowshelf": 1, "highshelf": 1, "peaking": 1, "generic": 3}


def svf_coeffs(f, R, m_lp, m_bp, m_hp):
    """Second-order section from prewarped frequency ``f = tan(w0/2)``,
    resonance ``R`` and the lowpass/bandpass/highpass mixing gains.

    The section is the bilinear transform of
    ``(m_lp + m_bp*s + m_hp*s^2) / (1 + 2R*s + s^2)`` with ``s`` scaled by
    ``1/f``; it is stable for every ``f > 0, R > 0``. With ``R = 1/(2Q)`` the
    lowpass section equals the RBJ lowpass of the same cutoff.
    """
    f, R = ad.as_var(f), ad.as_var(R)
    f2 = f * f
    b = ad.stack([
        m_lp * f2 + m_bp * f + m_hp,
        m_lp * f2 * 2.0 - m_hp * 2.0,
        m_lp * f2 - m_bp * f + m_hp,
    ])
    a = ad.stack([f2 + R * f * 2.0 + 1.0, (f2 - 1.0) * 2.0, f2 - R * f * 2.0 + 1.0])
    return b / a[0], a / a[0]


def svf_mixing(mode, R, extra):
    """Mixing gains ``(m_lp, m_bp, m_hp)`` for a named mode.

    Shelves and the peak take a linear gain ``G``; the identity
    ``H_lp + 2R*H_bp + H_hp = 1`` fixes the remaining gains.
    """
    zero = R * 0.0
    one = zero + 1.0
    if mode == "lowpass":
        return one, zero, zero
    if mode == "highpass":
        return zero, zero, one
    if mode == "bandpass":
        return zero, R * 2.0, zero
    if mode == "notch":
        return one, zero, one
    if mode == "generic":
        return extra[0], extra[1], extra[2]
    G = _db_to_amp(extra[0])
    if mode == "peaking":
        return one, R * G * 2.0, one
    if mode == "lowshelf":
        return G, R * ad.sqrt(G) * 2.0, one
    if mode == "highshelf":
        return one, R * ad.sqrt(G) * 2.0, G
    raise ConfigurationError(f"unknown SVF mode {mode!r}")


@register_module
class SVF(_RationalModule):
    """Cascade of state-variable-filter sections.

    ``raw`` has shape ``sections x P x channels`` with rows
    ``[cutoff, resonance, *mode parameters]``: the cutoff maps through
    :func:`map_cutoff` and ``tan(w/2)``, the resonance through softplus.
    Shelf and peak modes add a gain in dB; ``generic`` adds the three mixing
    gains, learned directly.
    """

    def __init__(self, size, grid, mode="lowpass", sections=1, **kwargs):
        if mode not in SVF_MODES:
            raise ConfigurationError(f"unknown SVF mode {mode!r}; known: {SVF_MODES}")
        self.mode = mode
        self.sections = int(sections)
        super().__init__(size, grid, param_shape=(self.sections, 2 + _SVF_EXTRA[mode]), **kwargs)

    def config(self):
        return {**super().config(), "mode": self.mode, "sections": self.sections}

    def snapshot(self):
        return {**super().snapshot(), "mode": self.mode}

    def mapped_sections(self, tape=None):
        p = self.param(tape)
        out = []
        for s in range(self.sections):
            w = map_cutoff(p[s, 0])
            f = ad.tan(w * 0.5)
            R = ad.softplus(p[s, 1])
            mixing = svf_mixing(self.mode, R, [p[s, 2 + k] for k in range(_SVF_EXTRA[self.mode])])
            out.append((f, R, mixing))
        return out

    def coeffs(self, tape=None):
        return [svf_coeffs(f, R, *mix) for f, R, mix in self.mapped_sections(tape)]


@register_module
class ParallelSVF(SVF):
    def __init__(self, size, grid, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, **kwargs)


# --- graphic equalizer --------------------------------------------------------

GEQ_Q = {"octave": 1.0, "third-octave": 3.0}
SHELF_Q = 0.5
PROTOTYPE_GAIN_DB = 1.0


def band_centers(resolution: str, fs: float) -> np.ndarray:
    """Base-2 octave (31.25 Hz-16 kHz) or third-octave (19.7 Hz-20 kHz)
    centers, keeping those below ``fs/2``."""
    if resolution == "octave":
        centers = 1000.0 * 2.0 ** np.arange(-5, 5)
    elif resolution == "third-octave":
        centers = 1000.0 * 2.0 ** (np.arange(-17, 14) / 3.0)
    else:
        raise ConfigurationError(f"unknown GEQ resolution {resolution!r}")
    return centers[centers < fs / 2]


def _section_db(kind, w0, Q, gain_db, w):
    b, a = biquad_coeffs(kind, w0, Q, gain_db)
    zi = np.exp(-1j * np.asarray(w))
    num = b.value[0] + b.value[1] * zi + b.value[2] * zi * zi
    den = a.value[0] + a.value[1] * zi + a.value[2] * zi * zi
    return 20 * np.log10(np.abs(num / den))


@dataclass(frozen=True)
class GeqDesign:
    """Precomputed linear map from command gains to section gains.

    Sections: a broadband gain, a low shelf between the first two bands,
    peaking filters at the inner band centers and a high shelf between the
    last two bands. ``interaction[i, j]`` is the dB response of section ``j``
    at control frequency ``i`` per dB of section gain, probed at
    ``PROTOTYPE_GAIN_DB``. Control frequencies are the band centers and the
    geometric midpoints between them; targets at midpoints interpolate the
    neighbouring commands. Section gains are ``pinv(interaction) @ targets``.
    """

    resolution: str
    sample_rate: float
    centers: np.ndarray
    kinds: tuple
    section_hz: np.ndarray
    section_q: np.ndarray
    control_hz: np.ndarray
    interaction: np.ndarray
    command_to_target: np.ndarray
    command_to_gain: np.ndarray

    @property
    def num_bands(self) -> int:
        return len(self.centers)

    def section_gains(self, command_db):
        """Broadband gain then one gain per section, all in dB."""
        c = ad.as_var(command_db)
        if c.shape[0] != self.num_bands:
            raise ConfigurationError(f"expected {self.num_bands} command gains, got {c.shape[0]}")
        flat = ad.reshape(c, (self.num_bands, -1))
        g = ad.matmul(self.command_to_gain, flat)
        return ad.reshape(g, (g.shape[0],) + c.shape[1:])


@lru_cache(maxsize=32)
def geq_design_matrix(resolution: str, fs: float) -> GeqDesign:
    centers = band_centers(resolution, fs)
    K = len(centers)
    if K < 3:
        raise ConfigurationError(f"sample rate {fs} leaves fewer than 3 {resolution} bands")
    q = GEQ_Q[resolution]
    kinds = ("lowshelf",) + ("peaking",) * (K - 2) + ("highshelf",)
    section_hz = np.concatenate([[np.sqrt(centers[0] * centers[1])], centers[1:-1],
                                 [np.sqrt(centers[-2] * centers[-1])]])
    section_q = np.array([SHELF_Q] + [q] * (K - 2) + [SHELF_Q])
    log_c = np.log(centers)
    control_hz = np.exp(np.linspace(log_c[0], log_c[-1], 2 * K - 1))
    w = 2 * np.pi * control_hz / fs
    columns = [np.ones_like(w)]
    for kind, fc, qq in zip(kinds, section_hz, section_q):
        columns.append(_section_db(kind, 2 * np.pi * fc / fs, qq, PROTOTYPE_GAIN_DB, w) / PROTOTYPE_GAIN_DB)
    interaction = np.column_stack(columns)
    eye = np.eye(K)
    command_to_target = np.column_stack([np.interp(np.log(control_hz), log_c, eye[j]) for j in range(K)])
    command_to_gain = np.linalg.pinv(interaction) @ command_to_target
    return GeqDesign(resolution, fs, centers, kinds, section_hz, section_q, control_hz,
                     interaction, command_to_target, command_to_gain)


def geq_design(command_db, resolution: str, fs: float):
    """Second-order sections realizing the command gains.

    Returns ``(broadband_gain, sections)``: the broadband linear gain and a
    list of ``(b, a)`` coefficient pairs. Differentiable in ``command_db``.
    """
    design = geq_design_matrix(resolution, float(fs))
    gains = design.section_gains(command_db)
    broadband = _db_to_amp(gains[0])
    sections = []
    for j, (kind, fc, q) in enumerate(zip(design.kinds, design.section_hz, design.section_q)):
        sections.append(biquad_coeffs(kind, 2 * np.pi * fc / fs, q, gains[j + 1]))
    return broadband, sections


@register_module
class GEQ(_RationalModule):
    """Graphic equalizer; ``raw`` holds command gains in dB per band."""

    def __init__(self, size, grid, resolution="octave", **kwargs):
        self.resolution = resolution
        self.design = geq_design_matrix(resolution, float(grid.sample_rate))
        kwargs.setdefault("init", np.zeros((self.design.num_bands,) + tuple(np.atleast_1d(size))))
        super().__init__(size, grid, param_shape=(self.design.num_bands,), **kwargs)

    def config(self):
        return {**super().config(), "resolution": self.resolution}

    def snapshot(self):
        return {**super().snapshot(), "resolution": self.resolution}

    def sos(self, tape=None):
        return geq_design(self.param(tape), self.resolution, self.grid.sample_rate)


@register_module
class ParallelGEQ(GEQ):
    def __init__(self, size, grid, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, **kwargs)


def t60_to_band_gains(t60, delay_samples, fs):
    """Per-band attenuation in dB for a delay line of ``delay_samples``:
    ``-60 * m / (T60 * fs)``. ``T60 = inf`` gives 0 dB."""
    t60 = np.asarray(t60, dtype=float)
    if np.any(~(t60 > 0)):
        raise DomainError("T60 must be positive")
    if not fs > 0:
        raise DomainError("sample rate must be positive")
    m = np.asarray(delay_samples, dtype=float)
    return -60.0 * np.multiply.outer(1.0 / t60, m) / fs if m.ndim else -60.0 * m / (t60 * fs)
