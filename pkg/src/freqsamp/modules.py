"""Learnable LTI processors evaluated on a frequency grid.

Each module keeps an unconstrained ``raw`` array and a named *map* that turns
it into the physical parameters. Response shapes (``M`` bins, ``N`` channels):

==================  =====================  ==============  ===============
module              response               input           output
==================  =====================  ==============  ===============
Gain / Matrix       N_out x N_in           B x M x N_in    B x M x N_out
ParallelGain        N                      B x M x N       B x M x N
Filter / Delay      M x N_out x N_in       B x M x N_in    B x M x N_out
Parallel*           M x N                  B x M x N       B x M x N
==================  =====================  ==============  ===============
"""

from __future__ import annotations

import contextlib
import itertools
import math
import warnings

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, ShapeError
from .grid import FrequencyGrid, dft_real

MAPS: dict = {}
MODULE_TYPES: dict = {}
DISTRIBUTIONS = ("normal", "uniform")

_counter = itertools.count()


def register_map(name):
    def deco(fn):
        MAPS[name] = fn
        return fn

    return deco


def register_module(cls):
    MODULE_TYPES[cls.__name__] = cls
    return cls


@register_map("identity")
def _identity(raw, module=None):
    return raw


@register_map("orthogonal")
def _orthogonal(raw, module=None):
    return map_orthogonal(raw)


@register_map("softplus")
def _softplus(raw, module=None):
    return ad.softplus(raw)


@register_map("db2mag")
def _db2mag(raw, module=None):
    return ad.exp(raw * (math.log(10.0) / 20.0))


def matrix_exponential(x: ad.Var, order: int = 14) -> ad.Var:
    """Scaling-and-squaring Taylor exponential built from tape primitives.

    The scaling exponent is picked from the forward value so the scaled
    1-norm is at most 1/2; the order-14 Taylor remainder is then ~1e-17.
    """
    x = ad.as_var(x)
    n = x.shape[-1]
    norm = float(np.max(np.sum(np.abs(x.value), axis=-2), initial=0.0))
    if norm > 10.0:
        warnings.warn(f"matrix exponential of a matrix with 1-norm {norm:.3g} > 10; "
                      "precision may degrade", RuntimeWarning, stacklevel=2)
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    scaled = x * (2.0 ** -s)
    eye = np.broadcast_to(np.eye(n), x.shape)
    term = ad.as_var(eye)
    result = ad.as_var(eye)
    for k in range(1, order + 1):
        term = ad.matmul(term, scaled) * (1.0 / k)
        result = result + term
    for _ in range(s):
        result = ad.matmul(result, result)
    return result


def map_orthogonal(raw) -> ad.Var:
    """Orthogonal matrix ``expm((raw - raw^T) / 2)``."""
    raw = ad.as_var(raw)
    if raw.ndim < 2 or raw.shape[-1] != raw.shape[-2]:
        raise ShapeError(f"orthogonal map needs a square matrix, got shape {raw.shape}")
    skew = (raw - ad.swapaxes(raw, -1, -2)) * 0.5
    return matrix_exponential(skew)


class DspModule:
    """Base class: raw parameters, a map and a response rule.

    Subclasses set ``param_shape`` (leading axes of ``raw`` before the channel
    axes) and implement :meth:`_response`. ``size`` is ``(n_out, n_in)`` for
    full modules and ``(n,)`` for parallel ones.
    """

    default_map = "identity"
    frequency_dependent = False

    def __init__(self, size, grid: FrequencyGrid, param_shape=(), *, map=None, requires_grad=True,
                 name=None, init=None, seed=None):
        size = tuple(int(s) for s in np.atleast_1d(size))
        if len(size) not in (1, 2) or any(s < 1 for s in size):
            raise ConfigurationError(f"invalid channel size {size}")
        self.size = size
        self.grid = grid
        self.param_shape = tuple(param_shape)
        self.map = map or self.default_map
        if self.map not in MAPS:
            raise ConfigurationError(f"unknown map {self.map!r}; known: {sorted(MAPS)}")
        self.requires_grad = requires_grad
        self.name = name or f"{type(self).__name__.lower()}{next(_counter)}"
        self.raw = np.zeros(self.param_shape + self.size)
        if init is None:
            self.set_initial("normal", seed=seed)
        else:
            self.set_raw(init)

    @property
    def parallel(self) -> bool:
        return len(self.size) == 1

    @property
    def n_in(self) -> int:
        return self.size[-1]

    @property
    def n_out(self) -> int:
        return self.size[0]

    def modules(self):
        yield self

    def config(self) -> dict:
        """Constructor keywords needed to rebuild this module (besides grid)."""
        return {"size": list(self.size), "map": self.map, "requires_grad": self.requires_grad}

    def set_raw(self, values):
        arr = np.array(values, dtype=float)
        if arr.shape != self.raw.shape:
            try:
                arr = np.broadcast_to(arr, self.raw.shape).copy()
            except ValueError:
                raise ShapeError(f"{self.name}: expected raw shape {self.raw.shape}, got {arr.shape}") from None
        self.raw = arr

    def set_initial(self, distribution="normal", seed=None, *, std=1.0, low=-1.0, high=1.0):
        set_initial(self, distribution, seed, std=std, low=low, high=high)

    _bound = None

    def param(self, tape: ad.Tape | None = None) -> ad.Var:
        if self._bound is not None:
            return self._bound
        if tape is not None and self.requires_grad:
            return tape.param(self, self.raw, name=self.name)
        return ad.Var(self.raw)

    def mapped(self, tape: ad.Tape | None = None) -> ad.Var:
        return MAPS[self.map](self.param(tape), self)

    def response(self, tape: ad.Tape | None = None) -> ad.Var:
        """Module response in the layout of the table above."""
        return self._response(self.mapped(tape))

    def _response(self, params: ad.Var) -> ad.Var:
        raise NotImplementedError

    def matrix_response(self, tape: ad.Tape | None = None) -> ad.Var:
        """Per-bin ``N_out x N_in`` matrices; leading axis is ``M`` or 1."""
        h = self.response(tape)
        if not self.frequency_dependent:
            h = ad.expand_dims(h, 0)
        if self.parallel:
            h = ad.diag_embed(h)
        return h

    def apply(self, x, tape: ad.Tape | None = None) -> ad.Var:
        """Process a ``B x M x N_in`` signal spectrum."""
        x = ad.as_var(x)
        if x.ndim != 3:
            raise ShapeError(f"{self.name}: signals must be B x M x N, got shape {x.shape}")
        if x.shape[1] != self.grid.num_bins:
            raise ShapeError(f"{self.name}: signal has {x.shape[1]} bins, module grid has {self.grid.num_bins}")
        if x.shape[2] != self.n_in:
            raise ShapeError(f"{self.name}: expected N_in={self.n_in}, got {x.shape[2]}")
        h = self.response(tape)
        if self.parallel:
            return x * h
        if not self.frequency_dependent:
            return ad.matmul(x, ad.swapaxes(h, -1, -2))
        y = ad.matmul(h, ad.expand_dims(x, -1))
        return ad.reshape(y, y.shape[:-1])

    def snapshot(self) -> dict:
        return {
            "module-name": self.name,
            "type": type(self).__name__,
            "shape": list(self.raw.shape),
            "map": self.map,
            "raw_params": self.raw.ravel(order="C").tolist(),
            "unit": getattr(self, "unit", None),
            "fractional": getattr(self, "fractional", None),
            "config": self.config(),
        }

    def load_snapshot(self, snap: dict):
        if snap.get("type") != type(self).__name__:
            raise ConfigurationError(f"{self.name}: snapshot is for type {snap.get('type')}")
        shape = tuple(snap["shape"])
        if shape != self.raw.shape:
            raise ConfigurationError(f"{self.name}: snapshot shape {shape} != {self.raw.shape}")
        self.raw = np.array(snap["raw_params"], dtype=float).reshape(shape)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, size={self.size}, map={self.map!r})"


@contextlib.contextmanager
def bound_params(modules, values):
    """Temporarily make each module read its raw parameter from a given Var."""
    try:
        for m, v in zip(modules, values):
            m._bound = v
        yield
    finally:
        for m in modules:
            m._bound = None


def set_initial(module: DspModule, distribution="normal", seed=None, *, std=1.0, low=-1.0, high=1.0):
    """Draw ``module.raw`` from a named distribution with a private generator."""
    rng = np.random.default_rng(seed)
    shape = module.raw.shape
    if distribution == "normal":
        module.raw = rng.normal(0.0, std, size=shape)
    elif distribution == "uniform":
        module.raw = rng.uniform(low, high, size=shape)
    else:
        raise ConfigurationError(f"unknown distribution {distribution!r}; known: {DISTRIBUTIONS}")


def module_from_snapshot(snap: dict, grid: FrequencyGrid) -> DspModule:
    cls = MODULE_TYPES.get(snap.get("type"))
    if cls is None:
        raise ConfigurationError(f"unknown module type {snap.get('type')!r}")
    config = dict(snap.get("config", {}))
    module = cls(grid=grid, name=snap.get("module-name"), **config)
    module.load_snapshot(snap)
    return module


@register_module
class Gain(DspModule):
    """Broadband ``N_out x N_in`` gain matrix."""

    def __init__(self, size, grid, **kwargs):
        super().__init__(size, grid, **kwargs)

    def _response(self, params):
        return params


@register_module
class ParallelGain(Gain):
    def __init__(self, size, grid, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, **kwargs)


@register_module
class Matrix(Gain):
    """Square mixing matrix; ``map="orthogonal"`` keeps it orthogonal."""

    def __init__(self, size, grid, map="identity", **kwargs):
        size = tuple(np.atleast_1d(size))
        if len(size) == 1:
            size = (size[0], size[0])
        if size[0] != size[1]:
            raise ConfigurationError(f"Matrix must be square, got {size}")
        super().__init__(size, grid, map=map, **kwargs)


@register_module
class Filter(DspModule):
    """FIR filter matrix with ``num_taps`` taps per channel pair."""

    frequency_dependent = True

    def __init__(self, size, grid, num_taps=None, init=None, **kwargs):
        if num_taps is None:
            if init is None:
                raise ConfigurationError("Filter needs num_taps or init taps")
            num_taps = np.shape(init)[0]
        self.num_taps = int(num_taps)
        super().__init__(size, grid, param_shape=(self.num_taps,), init=init, **kwargs)

    def config(self):
        return {**super().config(), "num_taps": self.num_taps}

    def _response(self, params):
        return dft_real(params, self.grid)


@register_module
class ParallelFilter(Filter):
    def __init__(self, size, grid, num_taps=None, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, num_taps=num_taps, **kwargs)


@register_module
class Delay(DspModule):
    """Delay lines ``z^-m`` with ``m = mapped(raw) * unit * fs`` samples.

    ``unit`` sets the time unit of the raw parameter (1.0 = seconds,
    ``1/fs`` = samples). Fractional by default; with ``fractional=False`` the
    delay is rounded half-to-even and excluded from the gradient.
    """

    frequency_dependent = True

    def __init__(self, size, grid, unit=1.0, fractional=True, **kwargs):
        self.unit = float(unit)
        self.fractional = bool(fractional)
        super().__init__(size, grid, **kwargs)

    def config(self):
        return {**super().config(), "unit": self.unit, "fractional": self.fractional}

    def set_samples(self, samples):
        """Set the raw parameter from delay lengths given in samples."""
        self.set_raw(np.asarray(samples, dtype=float) / (self.unit * self.grid.sample_rate))

    def samples(self) -> np.ndarray:
        m = self.mapped().value * (self.unit * self.grid.sample_rate)
        m = np.maximum(m, 0.0)
        return m if self.fractional else np.round(m)

    def _response(self, params):
        m = params * (self.unit * self.grid.sample_rate)
        if np.any(m.value < 0):
            warnings.warn(f"{self.name}: negative delays clamped to 0", RuntimeWarning, stacklevel=3)
            m = m * (m.value >= 0)
        if not self.fractional:
            m = ad.Var(np.round(m.value))
        log_z = np.log(self.grid.radius) + 1j * self.grid.angles
        log_z = log_z.reshape((-1,) + (1,) * len(self.size))
        return ad.exp(ad.expand_dims(m, 0) * -log_z)


@register_module
class ParallelDelay(Delay):
    def __init__(self, size, grid, **kwargs):
        super().__init__(np.atleast_1d(size)[:1], grid, **kwargs)
