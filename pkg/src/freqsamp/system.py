"""Series chains, feedback loops and the Shell container.

Signal flow follows declaration order: in ``Series(A, B)`` the signal passes
through ``A`` first, so the per-bin matrix product is ``H_B @ H_A``.
``Recursion(G, F)`` computes ``(I - G F)^-1 G`` per bin by a linear solve.
"""

from __future__ import annotations

import threading

import numpy as np

from . import autodiff as ad
from .antialias import recover_ir
from .errors import ConfigurationError, IllConditionedError, ShapeError
from .grid import ComplexResponse, FrequencyGrid, RealSignal, idft_hermitian, make_grid
from .modules import DspModule, module_from_snapshot

SYSTEM_TYPES: dict = {}


def register_system(cls):
    SYSTEM_TYPES[cls.__name__] = cls
    return cls


def _describe(item) -> str:
    return getattr(item, "name", type(item).__name__)


def _grid_label(grid: FrequencyGrid) -> str:
    return f"M={grid.num_bins}, fs={grid.sample_rate:g}, radius={grid.radius:g}"


@register_system
class Series:
    """Chain of modules or systems; nested Series are flattened."""

    def __init__(self, *items, name="series", validate=True):
        flat = []
        for item in items:
            if isinstance(item, Series):
                flat.extend(item.items)
            else:
                flat.append(item)
        if not flat:
            raise ConfigurationError("Series needs at least one item")
        self.items = flat
        self.name = name
        if validate:
            _raise_on_findings(self)

    @property
    def grid(self) -> FrequencyGrid:
        return self.items[0].grid

    @property
    def n_in(self) -> int:
        return self.items[0].n_in

    @property
    def n_out(self) -> int:
        return self.items[-1].n_out

    def modules(self):
        for item in self.items:
            yield from item.modules()

    def matrix_response(self, tape=None) -> ad.Var:
        h = self.items[0].matrix_response(tape)
        for item in self.items[1:]:
            h = ad.matmul(item.matrix_response(tape), h)
        return h

    def apply(self, x, tape=None) -> ad.Var:
        for item in self.items:
            x = item.apply(x, tape)
        return x

    def to_dict(self) -> dict:
        return {"type": "Series", "name": self.name, "items": [system_to_dict(i) for i in self.items]}


@register_system
class Recursion:
    """Closed loop with feedforward path ``G`` and feedback path ``F``.

    The output ``X`` satisfies ``X = G (s + F X)`` for input ``s``.
    """

    def __init__(self, feedforward, feedback, name="recursion", cond_limit=ad.COND_LIMIT, validate=True):
        self.feedforward = feedforward
        self.feedback = feedback
        self.name = name
        self.cond_limit = cond_limit
        if validate:
            _raise_on_findings(self)

    @property
    def grid(self):
        return self.feedforward.grid

    @property
    def n_in(self):
        return self.feedforward.n_in

    @property
    def n_out(self):
        return self.feedforward.n_out

    def modules(self):
        yield from self.feedforward.modules()
        yield from self.feedback.modules()

    def _loop(self, tape):
        G = self.feedforward.matrix_response(tape)
        F = self.feedback.matrix_response(tape)
        GF = ad.matmul(G, F)
        return G, np.eye(self.n_out) - GF

    def _solve(self, lhs, rhs):
        try:
            return ad.solve(lhs, rhs, cond_limit=self.cond_limit)
        except IllConditionedError as exc:
            index = exc.bin_index[-1] if isinstance(exc.bin_index, tuple) else exc.bin_index
            if lhs.shape[0] == 1:
                index = 0
            hz = self.grid.bin_hz(index)
            raise IllConditionedError(
                f"{self.name}: loop matrix I - GF is ill-conditioned at {hz:.6g} Hz "
                f"(bin {index}, condition {exc.condition:.3g}); for lossless loops sample "
                "on an anti-aliased grid (radius 1/gamma > 1)",
                bin_index=index,
                condition=exc.condition,
            ) from None

    def matrix_response(self, tape=None) -> ad.Var:
        G, lhs = self._loop(tape)
        return self._solve(lhs, G)

    def apply(self, x, tape=None) -> ad.Var:
        x = ad.as_var(x)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"{self.name}: expected B x M x {self.n_in} input, got {x.shape}")
        G, lhs = self._loop(tape)
        rhs = ad.matmul(G, ad.expand_dims(x, -1))
        y = self._solve(lhs, rhs)
        return ad.reshape(y, y.shape[:-1])

    def to_dict(self) -> dict:
        return {
            "type": "Recursion",
            "name": self.name,
            "feedforward": system_to_dict(self.feedforward),
            "feedback": system_to_dict(self.feedback),
        }


# --- shell layers -----------------------------------------------------------

class Identity:
    def __call__(self, x, tape=None):
        return ad.as_var(x)

    def __repr__(self):
        return "Identity()"


class Magnitude:
    """Per-bin magnitude of the system output."""

    def __call__(self, x, tape=None):
        return ad.magnitude(x)

    def __repr__(self):
        return "Magnitude()"


class TimeToFreq:
    """Real time signals ``B x T x N`` to half spectra ``B x M x N``."""

    def __init__(self, grid: FrequencyGrid):
        self.grid = grid

    def __call__(self, x, tape=None):
        x = ad.as_var(x)
        moved = ad.transpose(x, (1, 0, 2))
        spec = ad.dft_real(moved, self.grid.num_bins, self.grid.radius)
        return ad.transpose(spec, (1, 0, 2))

    def __repr__(self):
        return "TimeToFreq()"


LAYERS = {"Identity": Identity, "Magnitude": Magnitude}


@register_system
class Shell:
    """Binds a core system to input and output transformations.

    ``get_freq_response`` and ``get_time_response`` swap in identity layers
    for the duration of the call under a lock, so other threads calling
    :meth:`forward` never see the swapped state.
    """

    def __init__(self, core, input_layer=None, output_layer=None, name="shell", validate=True):
        self.core = core
        self.input_layer = input_layer or Identity()
        self.output_layer = output_layer or Identity()
        self.name = name
        self._lock = threading.RLock()
        if validate:
            _raise_on_findings(self)

    @property
    def grid(self):
        return self.core.grid

    @property
    def n_in(self):
        return self.core.n_in

    @property
    def n_out(self):
        return self.core.n_out

    def modules(self):
        yield from self.core.modules()

    def forward(self, x, tape=None) -> ad.Var:
        with self._lock:
            return self.output_layer(self.core.apply(self.input_layer(x, tape), tape), tape)

    __call__ = forward

    def impulse(self, channel=None) -> np.ndarray:
        """Spectrum of unit impulses: one batch item per input channel, or
        a single item exciting ``channel``."""
        M = self.grid.num_bins
        if channel is None:
            x = np.zeros((self.n_in, M, self.n_in))
            for k in range(self.n_in):
                x[k, :, k] = 1.0
            return x
        if not 0 <= channel < self.n_in:
            raise ShapeError(f"channel {channel} out of range for {self.n_in} inputs")
        x = np.zeros((1, M, self.n_in))
        x[0, :, channel] = 1.0
        return x

    def _swapped(self, fn):
        with self._lock:
            saved = self.input_layer, self.output_layer
            self.input_layer, self.output_layer = Identity(), Identity()
            try:
                return fn()
            finally:
                self.input_layer, self.output_layer = saved

    def get_freq_response(self, channel=None, tape=None):
        """Response to an impulse on ``channel`` (``M x N_out``), or the full
        ``M x N_out x N_in`` matrix when ``channel`` is None."""
        def run():
            y = self.forward(self.impulse(channel), tape)
            if channel is None:
                return ad.transpose(y, (1, 2, 0))
            return y[0]

        out = self._swapped(run)
        if tape is not None:
            return out
        return ComplexResponse(out.value, self.grid)

    def get_time_response(self, channel=0) -> RealSignal:
        """Impulse response ``2(M-1) x N_out`` for an impulse on ``channel``.

        On a grid of radius ``1/gamma`` the enveloped response is recovered
        with ``gamma^-n``.
        """
        resp = self.get_freq_response(channel)
        h = idft_hermitian(resp, check_radius=False)
        if self.grid.radius != 1.0:
            h = recover_ir(h, self.grid.gamma)
        return h

    def to_dict(self) -> dict:
        return {
            "type": "Shell",
            "name": self.name,
            "core": system_to_dict(self.core),
            "input_layer": type(self.input_layer).__name__,
            "output_layer": type(self.output_layer).__name__,
        }


# --- validation -------------------------------------------------------------

def validate_flow(container) -> list[str]:
    """List grid and channel inconsistencies; an empty list means valid."""
    findings = []
    mods = list(container.modules())
    if mods:
        ref = mods[0]
        for m in mods[1:]:
            if not m.grid.compatible(ref.grid):
                findings.append(
                    f"grid mismatch: {_describe(ref)} ({_grid_label(ref.grid)}) vs "
                    f"{_describe(m)} ({_grid_label(m.grid)})"
                )
    _check_channels(container, findings)
    return findings


def _check_channels(item, findings):
    if isinstance(item, Series):
        for prev, nxt in zip(item.items, item.items[1:]):
            if prev.n_out != nxt.n_in:
                findings.append(
                    f"channel mismatch in {item.name}: {_describe(prev)} outputs {prev.n_out}, "
                    f"{_describe(nxt)} expects {nxt.n_in}"
                )
        for sub in item.items:
            _check_channels(sub, findings)
    elif isinstance(item, Recursion):
        G, F = item.feedforward, item.feedback
        if G.n_out != F.n_in:
            findings.append(
                f"channel mismatch in {item.name}: feedforward N_out={G.n_out}, feedback N_in={F.n_in}"
            )
        if F.n_out != G.n_in:
            findings.append(
                f"channel mismatch in {item.name}: feedback N_out={F.n_out}, feedforward N_in={G.n_in}"
            )
        _check_channels(G, findings)
        _check_channels(F, findings)
    elif isinstance(item, Shell):
        _check_channels(item.core, findings)
        for layer in (item.input_layer, item.output_layer):
            grid = getattr(layer, "grid", None)
            if grid is not None and not grid.compatible(item.core.grid):
                findings.append(
                    f"grid mismatch: {item.name} layer {layer!r} ({_grid_label(grid)}) vs core "
                    f"({_grid_label(item.core.grid)})"
                )
    elif hasattr(item, "check_channels"):
        item.check_channels(findings)


def _raise_on_findings(container):
    findings = validate_flow(container)
    if findings:
        raise ConfigurationError("; ".join(findings))


# --- topology serialization -------------------------------------------------

def system_to_dict(item) -> dict:
    if isinstance(item, DspModule):
        return item.snapshot()
    return item.to_dict()


def grid_to_dict(grid: FrequencyGrid) -> dict:
    return {"num_bins": grid.num_bins, "sample_rate": grid.sample_rate, "radius": grid.radius}


def grid_from_dict(d: dict) -> FrequencyGrid:
    return make_grid(d["num_bins"], d["sample_rate"], d.get("radius", 1.0))


def system_from_dict(d: dict, grid: FrequencyGrid):
    kind = d.get("type")
    if kind == "Series":
        return Series(*(system_from_dict(i, grid) for i in d["items"]), name=d.get("name", "series"))
    if kind == "Recursion":
        return Recursion(system_from_dict(d["feedforward"], grid), system_from_dict(d["feedback"], grid),
                         name=d.get("name", "recursion"))
    if kind == "Shell":
        try:
            inp = LAYERS[d.get("input_layer", "Identity")]()
            out = LAYERS[d.get("output_layer", "Identity")]()
        except KeyError as exc:
            raise ConfigurationError(f"unknown layer {exc}") from None
        return Shell(system_from_dict(d["core"], grid), inp, out, name=d.get("name", "shell"))
    if kind in SYSTEM_TYPES and hasattr(SYSTEM_TYPES[kind], "from_dict"):
        return SYSTEM_TYPES[kind].from_dict(d, grid)
    return module_from_snapshot(d, grid)
