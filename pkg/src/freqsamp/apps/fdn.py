"""Feedback delay networks built from the composition primitives.

The network is ``Series(b, Recursion(delays, Series(attenuation, A)), c)``
plus a direct path ``d``; per bin this is ``c^T (D^-1 - A Gamma)^-1 b + d``
where ``D`` holds the delay lines and ``Gamma`` the per-line attenuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DomainError
from ..filters import ParallelGEQ, t60_to_band_gains
from ..grid import FrequencyGrid
from ..modules import Gain, Matrix, ParallelDelay, ParallelGain, map_orthogonal
from ..system import Recursion, Series, _check_channels, register_system, system_to_dict


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, math.isqrt(n) + 1))


def default_delays(n: int, sample_rate: float = 48000.0, low: float = 1000.0, high: float = 4000.0) -> list[int]:
    """Distinct primes near a geometric spread over ``[low, high]`` samples
    (given at 48 kHz and rescaled to ``sample_rate``). Distinct primes are
    pairwise coprime."""
    if n < 1:
        raise ConfigurationError("need at least one delay line")
    scale = sample_rate / 48000.0
    targets = np.geomspace(low * scale, high * scale, n) if n > 1 else [low * scale]
    chosen: list[int] = []
    for t in targets:
        k = max(2, int(round(t)))
        for step in range(0, 10 * k):
            hit = next((c for c in (k + step, k - step) if c >= 2 and _is_prime(c) and c not in chosen), None)
            if hit:
                chosen.append(hit)
                break
    return chosen


@dataclass
class FdnSpec:
    """Configuration of an FDN.

    ``t60`` is None (lossless), a scalar in seconds (homogeneous decay) or
    one value per GEQ band. Gains left as None are drawn from ``seed``.
    """

    size: int
    delays: list | None = None
    input_gains: list | None = None
    output_gains: list | None = None
    direct_gain: float = 0.0
    matrix_raw: list | None = None
    t60: object = None
    geq_resolution: str = "octave"
    seed: int = 0
    learn_delays: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.size < 1:
            raise ConfigurationError("FDN size must be positive")
        if self.delays is not None:
            if len(self.delays) != self.size:
                raise ConfigurationError(f"{len(self.delays)} delays given for size {self.size}")
            if any(not m > 0 for m in self.delays):
                raise DomainError("delays must be positive")


def homogeneous_gains(t60: float, delays, sample_rate: float) -> np.ndarray:
    """Per-line gains ``10^(-3 m / (T60 fs))`` giving -60 dB after ``T60``."""
    if not t60 > 0:
        raise DomainError("T60 must be positive")
    return 10.0 ** (-3.0 * np.asarray(delays, dtype=float) / (t60 * sample_rate))


@register_system
class FDN:
    """Composition-built FDN; :attr:`core` is the Series without ``d``."""

    def __init__(self, spec: FdnSpec, grid: FrequencyGrid, name="fdn"):
        self.spec = spec
        self.grid = grid
        self.name = name
        n = spec.size
        fs = grid.sample_rate
        rng = np.random.default_rng(spec.seed)
        delays = spec.delays if spec.delays is not None else default_delays(n, fs)
        self.input_gain = Gain((n, 1), grid, name=f"{name}.b", init=_init(spec.input_gains, (n, 1), rng))
        self.output_gain = Gain((1, n), grid, name=f"{name}.c", init=_init(spec.output_gains, (1, n), rng))
        self.delay = ParallelDelay(n, grid, unit=1.0 / fs, requires_grad=spec.learn_delays,
                                   name=f"{name}.delays", init=np.asarray(delays, dtype=float))
        self.matrix = Matrix(n, grid, map="orthogonal", name=f"{name}.A",
                             init=_init(spec.matrix_raw, (n, n), rng))
        self.direct = Gain((1, 1), grid, requires_grad=False, name=f"{name}.d", init=[[spec.direct_gain]])
        self.attenuation = None
        if spec.t60 is not None:
            self.attenuation = make_attenuation(spec.t60, delays, grid, spec.geq_resolution, name=f"{name}.atten")
        feedback = self.matrix if self.attenuation is None else Series(self.attenuation, self.matrix)
        self.loop = Recursion(self.delay, feedback, name=f"{name}.loop")
        self.core = Series(self.input_gain, self.loop, self.output_gain, name=f"{name}.core")

    n_in = 1
    n_out = 1

    def modules(self):
        yield from self.core.modules()
        yield self.direct

    def matrix_response(self, tape=None):
        return self.core.matrix_response(tape) + self.direct.matrix_response(tape)

    def apply(self, x, tape=None):
        return self.core.apply(x, tape) + self.direct.apply(x, tape)

    def check_channels(self, findings):
        _check_channels(self.core, findings)

    def delay_samples(self) -> np.ndarray:
        return self.delay.samples()

    def parameters(self) -> dict:
        """Current physical parameters as numpy arrays."""
        return {
            "A": map_orthogonal(self.matrix.raw).value,
            "b": self.input_gain.raw[:, 0].copy(),
            "c": self.output_gain.raw[0].copy(),
            "d": float(self.direct.raw[0, 0]),
            "delays": self.delay_samples(),
        }

    def to_dict(self) -> dict:
        spec = dict(self.spec.__dict__)
        spec["delays"] = [float(m) for m in self.delay_samples()]
        if spec["t60"] is not None:
            spec["t60"] = np.asarray(spec["t60"], dtype=float).tolist()
        return {
            "type": "FDN",
            "name": self.name,
            "spec": spec,
            "modules": [system_to_dict(m) for m in self.modules()],
        }

    @classmethod
    def from_dict(cls, d: dict, grid: FrequencyGrid) -> FDN:
        spec = dict(d["spec"])
        t60 = spec.get("t60")
        if isinstance(t60, list) and len(t60) == 1:
            spec["t60"] = t60[0]
        fdn = cls(FdnSpec(**spec), grid, name=d.get("name", "fdn"))
        snaps = {s["module-name"]: s for s in d.get("modules", [])}
        for m in fdn.modules():
            if m.name in snaps:
                m.load_snapshot(snaps[m.name])
        return fdn


def normalize_gains(fdn: FDN) -> float:
    """Rescale ``b`` and ``c`` equally so the RMS magnitude over the grid is 1.

    Returns the applied overall factor. Used at initialization so that
    spread measures of ``|H|`` compare coloration rather than level.
    """
    h = fdn.core.matrix_response().value[:, 0, 0]
    rms = float(np.sqrt(np.mean(np.abs(h) ** 2)))
    if not rms > 0:
        raise DomainError("FDN response is identically zero")
    root = 1.0 / math.sqrt(rms)
    fdn.input_gain.raw = fdn.input_gain.raw * root
    fdn.output_gain.raw = fdn.output_gain.raw * root
    return 1.0 / rms


def _init(values, shape, rng):
    if values is None:
        return rng.normal(0.0, 1.0, size=shape)
    return np.reshape(np.asarray(values, dtype=float), shape)


def make_attenuation(t60, delays, grid: FrequencyGrid, resolution="octave", name="atten"):
    """Fixed per-line attenuation: a ParallelGain for scalar ``t60``, a
    ParallelGEQ with per-band dB commands otherwise."""
    t60 = np.asarray(t60, dtype=float)
    delays = np.asarray(delays, dtype=float)
    if t60.ndim == 0:
        return ParallelGain(len(delays), grid, requires_grad=False, name=name,
                            init=homogeneous_gains(float(t60), delays, grid.sample_rate))
    commands = t60_to_band_gains(t60, delays, grid.sample_rate)
    return ParallelGEQ(len(delays), grid, resolution=resolution, requires_grad=False, name=name, init=commands)


def fdn_direct(A, b, c, d, delays, grid: FrequencyGrid, line_gains=None) -> np.ndarray:
    """Reference transfer function ``c^T (D^-1 - A Gamma)^-1 b + d`` per bin,
    evaluated with plain numpy. ``line_gains`` is ``N`` or ``M x N``."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    z = grid.points[:, None]
    d_inv = np.asarray(z ** np.asarray(delays, dtype=float)[None, :])
    g = np.ones(n) if line_gains is None else np.asarray(line_gains)
    g = np.broadcast_to(g, (grid.num_bins, n))
    lhs = np.zeros((grid.num_bins, n, n), dtype=complex)
    idx = np.arange(n)
    lhs[:, idx, idx] = d_inv
    lhs -= A[None] * g[:, None, :]
    x = np.linalg.solve(lhs, np.broadcast_to(np.asarray(b, dtype=complex)[:, None], (grid.num_bins, n, 1)))
    return (np.asarray(c, dtype=complex) @ x)[..., 0] + d


def simulate_fdn(A, b, c, d, delays, length: int, line_gains=None, x=None) -> np.ndarray:
    """Time-domain FDN with integer delays; impulse response when ``x`` is None.

    Samples are processed in blocks no longer than the shortest delay, so each
    block only reads delay-line inputs that are already computed.
    """
    delays = np.asarray(delays)
    if np.any(delays != np.round(delays)) or np.any(delays < 1):
        raise DomainError("time-domain simulation needs positive integer delays")
    delays = delays.astype(int)
    A = np.asarray(A, dtype=float)
    n = len(delays)
    g = np.ones(n) if line_gains is None else np.asarray(line_gains, dtype=float)
    feedback = A * g[None, :]
    if x is None:
        x = np.zeros(length)
        x[0] = 1.0
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    v = np.zeros((length, n))
    y = np.zeros(length)
    block = int(delays.min())
    for start in range(0, length, block):
        stop = min(start + block, length)
        t = np.arange(start, stop)
        src = t[:, None] - delays[None, :]
        out = np.where(src >= 0, v[np.maximum(src, 0), np.arange(n)[None, :]], 0.0)
        v[start:stop] = x[start:stop, None] * b[None, :] + out @ feedback.T
        y[start:stop] = out @ c + d * x[start:stop]
    return y
