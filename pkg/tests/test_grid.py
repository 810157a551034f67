import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqsamp import (
    DomainError,
    InvalidGridError,
    NonHermitianError,
    SingularDenominatorError,
    dft_real,
    evaluate_rational,
    idft_hermitian,
    make_grid,
)
from freqsamp.grid import TimeAliasingWarning, dft_direct


def test_grid_points_three_bins():
    np.testing.assert_allclose(make_grid(3, 48000).points, [1, 1j, -1], atol=1e-15)


def test_grid_points_two_bins():
    np.testing.assert_allclose(make_grid(2, 48000).points, [1, -1], atol=1e-15)


def test_grid_radius_two():
    np.testing.assert_allclose(make_grid(3, 48000, radius=2.0).points, [2, 2j, -2], atol=1e-15)


def test_grid_frame_length_and_freqs():
    g = make_grid(5, 8000)
    assert g.frame_length == 8
    np.testing.assert_allclose(g.freqs_hz, [0, 1000, 2000, 3000, 4000])


@pytest.mark.parametrize("bins,fs,radius", [(1, 48000, 1.0), (0, 48000, 1.0), (4, 0, 1.0), (4, 48000, 0.0)])
def test_grid_rejects_bad_input(bins, fs, radius):
    with pytest.raises((InvalidGridError, DomainError)):
        make_grid(bins, fs, radius)


def test_dft_single_tap_is_ones(grid3):
    np.testing.assert_allclose(dft_real([1.0], grid3).data[:, 0, 0], [1, 1, 1])


def test_dft_two_tap_average(grid3):
    np.testing.assert_allclose(dft_real([0.5, 0.5], grid3).data[:, 0, 0], [1, 0.5 - 0.5j, 0], atol=1e-15)


def test_dft_unit_delay(grid3):
    np.testing.assert_allclose(dft_real([0.0, 1.0], grid3).data[:, 0, 0], [1, -1j, -1], atol=1e-15)


def test_dft_rejects_empty(grid3):
    with pytest.raises(DomainError):
        dft_real([], grid3)


def test_dft_warns_when_taps_exceed_frame(grid3):
    with pytest.warns(TimeAliasingWarning):
        dft_real(np.ones(5), grid3)


@settings(max_examples=30, deadline=None)
@given(
    taps=st.lists(st.floats(-10, 10), min_size=1, max_size=40),
    bins=st.integers(2, 64),
    radius=st.floats(0.5, 2.0),
)
def test_dft_matches_direct_summation(taps, bins, radius):
    g = make_grid(bins, 1000.0, radius)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TimeAliasingWarning)
        fast = dft_real(np.array(taps), g).data[:, 0, 0]
    ref = dft_direct(taps, g)
    scale = np.sum(np.abs(taps) * np.maximum(1.0, radius ** -np.arange(len(taps)))) + 1e-300
    assert np.max(np.abs(fast - ref)) <= 1e-12 * scale


def test_idft_flat_spectrum_is_impulse():
    h = idft_hermitian(np.array([1.0, 1.0, 1.0]), 48000)
    np.testing.assert_allclose(h.samples, [1, 0, 0, 0], atol=1e-15)


def test_idft_roundtrip_short_taps(grid8):
    taps = np.array([0.3, -0.2, 0.1])
    h = idft_hermitian(dft_real(taps, grid8).data[:, 0, 0], 48000).samples
    np.testing.assert_allclose(h[:3], taps, atol=1e-15)
    np.testing.assert_allclose(h[3:], 0, atol=1e-15)


def test_idft_zero_gives_zero():
    assert np.all(idft_hermitian(np.zeros(5)).samples == 0)


def test_idft_rejects_non_hermitian_edges():
    with pytest.raises(NonHermitianError):
        idft_hermitian(np.array([1.0 + 0.5j, 1.0, 1.0]))


@settings(max_examples=40, deadline=None)
@given(taps=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), extra=st.integers(0, 20))
def test_roundtrip_property(taps, extra):
    taps = np.array(taps)
    bins = (len(taps) + 1) // 2 + 1 + extra
    g = make_grid(bins, 1000.0)
    h = idft_hermitian(dft_real(taps, g)).samples[:, 0, 0]
    scale = max(np.max(np.abs(taps)), 1e-300)
    assert np.max(np.abs(h[: len(taps)] - taps)) <= 1e-9 * scale
    assert np.max(np.abs(h[len(taps):]), initial=0.0) <= 1e-9 * scale


def test_rational_one_pole(grid3):
    got = evaluate_rational([1.0], [1.0, -0.5], grid3).data[:, 0, 0]
    np.testing.assert_allclose(got, [2, 1 / (1 + 0.5j), 2 / 3], atol=1e-15)


def test_rational_fir_numerator(grid3):
    got = evaluate_rational([1.0, 2.0, 1.0], [1.0], grid3).data[:, 0, 0]
    np.testing.assert_allclose(got, [4, -2j, 0], atol=1e-15)


def test_rational_pole_on_contour(grid3):
    with pytest.raises(SingularDenominatorError) as info:
        evaluate_rational([1.0], [1.0, -1.0], grid3)
    assert info.value.bin_index == 0


def test_rational_rejects_zero_leading_denominator(grid3):
    with pytest.raises(DomainError):
        evaluate_rational([1.0], [0.0, 1.0], grid3)
