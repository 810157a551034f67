"""Gradient-check suite covering every module type and composition."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .antialias import choose_gamma, enveloped_grid
from .filters import SVF_MODES, ParallelBiquad, ParallelGEQ, ParallelSVF
from .grid import FrequencyGrid, make_grid
from .modules import Filter, Gain, Matrix, ParallelDelay, ParallelGain, bound_params
from .system import Recursion, Series


def system_grad_check(system, loss_fn, modules=None, step=1e-3, tol=1e-4, order=4) -> ad.GradCheckReport:
    """Check gradients of ``loss_fn(system)`` with respect to every trainable
    module's raw parameters.

    Defaults to the five-point stencil with a 1e-3 relative step: resonant
    low-frequency sections make the loss itself uncertain at the 1e-10 level,
    which swamps two-point differences at small steps.
    """
    if modules is None:
        modules = []
        for m in system.modules():
            if m.requires_grad and all(m is not s for s in modules):
                modules.append(m)

    def builder(leaves):
        with bound_params(modules, leaves):
            return loss_fn(system)

    return ad.grad_check(builder, [m.raw for m in modules], step=step, tol=tol,
                         names=[m.name for m in modules], order=order)


def probe_loss(rng, num_bins):
    """Random real functional of a response exercising magnitude and phase."""
    cache = {}

    def loss(system):
        h = system.matrix_response()
        key = h.shape
        if key not in cache:
            cache[key] = (rng.normal(size=key) + 1j * rng.normal(size=key)) / np.sqrt(np.prod(key))
        w = cache[key]
        return ad.sum(ad.real(h * w)) + 0.1 * ad.mean(ad.abs2(h))

    return loss


def _gain(grid, rng):
    return Gain((2, 3), grid, seed=rng.integers(2 ** 31))


def _matrix(grid, rng):
    return Matrix(3, grid, map="orthogonal", seed=rng.integers(2 ** 31))


def _fir(grid, rng):
    return Filter((2, 2), grid, num_taps=16, seed=rng.integers(2 ** 31))


def _delay(grid, rng):
    d = ParallelDelay(3, grid, unit=1.0 / grid.sample_rate)
    d.set_raw(rng.uniform(5.0, 50.0, size=3))
    return d


def _biquad_module(kind):
    def make(grid, rng):
        return ParallelBiquad(2, grid, kind=kind, cutoff_hz=rng.uniform(200, 8000), Q=rng.uniform(0.5, 3.0),
                              gain_db=rng.normal(0, 3))

    return make


def _svf(mode):
    def make(grid, rng):
        return ParallelSVF(2, grid, mode=mode, sections=2, seed=rng.integers(2 ** 31))

    return make


def _geq(resolution):
    def make(grid, rng):
        g = ParallelGEQ(1, grid, resolution=resolution)
        g.set_raw(rng.uniform(-12, 12, size=g.raw.shape))
        return g

    return make


def _series(grid, rng):
    return Series(
        Filter((3, 2), grid, num_taps=8, seed=rng.integers(2 ** 31)),
        ParallelGain(3, grid, seed=rng.integers(2 ** 31)),
        Matrix(3, grid, map="orthogonal", seed=rng.integers(2 ** 31)),
    )


def _recursion(grid, rng):
    d = ParallelDelay(3, grid, unit=1.0 / grid.sample_rate)
    d.set_raw(rng.uniform(5.0, 50.0, size=3))
    g = ParallelGain(3, grid, init=rng.uniform(0.3, 0.8, size=3))
    return Recursion(d, Series(g, Matrix(3, grid, map="orthogonal", seed=rng.integers(2 ** 31))))


def _fdn(grid, rng):
    from .apps.fdn import FDN, FdnSpec

    aa = enveloped_grid(grid, choose_gamma(grid.num_bins, grid.sample_rate, 60.0))
    delays = [int(m) for m in rng.choice([13, 17, 19, 23, 29, 31, 37], size=4, replace=False)]
    return FDN(FdnSpec(4, delays=delays, seed=int(rng.integers(2 ** 31))), aa)


# name -> (factory, relative finite-difference step). Delay parameters are
# tens of samples, so their step is kept well below one sample. GEQ losses
# carry round-off from resonant low bands, so they use a larger step.
CASES = {
    "Gain": (_gain, 1e-3),
    "Matrix-orthogonal": (_matrix, 1e-3),
    "FIR": (_fir, 1e-3),
    "Delay-fractional": (_delay, 1e-4),
    **{f"Biquad-{k}": (_biquad_module(k), 1e-3) for k in ("lowpass", "highpass", "bandpass")},
    **{f"SVF-{m}": (_svf(m), 1e-3) for m in SVF_MODES},
    "GEQ-octave": (_geq("octave"), 1e-2),
    "GEQ-third-octave": (_geq("third-octave"), 1e-2),
    "Series": (_series, 1e-3),
    "Recursion": (_recursion, 1e-4),
    "FDN-antialiased": (_fdn, 1e-4),
}


@dataclass
class GradCheckRow:
    case: str
    seed: int
    max_rel_error: float
    passed: bool
    seconds: float


def run_gradcheck_suite(num_bins=4096, sample_rate=48000.0, seeds=range(10), cases=None, tol=1e-4):
    """Run every case for every seed; returns one row per (case, seed)."""
    grid: FrequencyGrid = make_grid(num_bins, sample_rate)
    rows = []
    for name in cases or CASES:
        for seed in seeds:
            rng = np.random.default_rng([seed, sum(map(ord, name))])
            start = time.perf_counter()
            factory, step = CASES[name]
            system = factory(grid, rng)
            report = system_grad_check(system, probe_loss(rng, num_bins), step=step, tol=tol)
            rows.append(GradCheckRow(name, int(seed), report.max_rel_error, report.passed,
                                     time.perf_counter() - start))
    return rows
