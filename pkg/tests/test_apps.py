import numpy as np
import pytest
from scipy.io import wavfile

from freqsamp import (
    ConfigurationError,
    DomainError,
    IllConditionedError,
    Matrix,
    Shell,
    ShapeError,
    choose_gamma,
    enveloped_grid,
    idft_hermitian,
    make_grid,
    system_from_dict,
)
from freqsamp.apps.aa import AaLoop, AaSpec, DECAY_60DB, load_room_responses, max_magnitude_penalty, synth_room_responses
from freqsamp.apps.audio import read_wav, write_wavs
from freqsamp.apps.fdn import (
    FDN,
    FdnSpec,
    default_delays,
    fdn_direct,
    homogeneous_gains,
    normalize_gains,
    simulate_fdn,
)
from freqsamp.apps.metrics import (
    GAUSS_OUTLIER_FRACTION,
    echo_density,
    eig_magnitude_distribution,
    write_echo_density_csv,
    write_eig_csv,
)

FS = 48000.0


# --- FDN ----------------------------------------------------------------------

def test_single_line_fdn_closed_form():
    grid = make_grid(129, 8000.0)
    m, t60 = 7.0, 0.05
    fdn = FDN(FdnSpec(1, delays=[m], input_gains=[1.0], output_gains=[1.0], t60=t60), grid)
    g = homogeneous_gains(t60, [m], 8000.0)[0]
    zm = grid.points ** -m
    h = fdn.matrix_response().value[:, 0, 0]
    np.testing.assert_allclose(h, zm / (1 - g * zm), rtol=1e-12)
    assert h[0] == pytest.approx(1 / (1 - g), rel=1e-12)


def test_direct_path_only():
    grid = make_grid(33, FS)
    fdn = FDN(FdnSpec(3, delays=[3, 5, 7], input_gains=[0.0] * 3, direct_gain=1.0, t60=0.1), grid)
    np.testing.assert_allclose(fdn.matrix_response().value, 1.0, atol=1e-15)


@pytest.mark.parametrize("seed", range(4))
def test_composition_matches_direct_formula(seed):
    grid = enveloped_grid(make_grid(2049, 8000.0), choose_gamma(2049, 8000.0, 40.0))
    fdn = FDN(FdnSpec(4, delays=[13, 17, 19, 23], t60=0.5, direct_gain=0.3, seed=seed), grid)
    p = fdn.parameters()
    ref = fdn_direct(p["A"], p["b"], p["c"], p["d"], p["delays"], grid,
                     homogeneous_gains(0.5, p["delays"], 8000.0))
    got = fdn.matrix_response().value[:, 0, 0]
    assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_geq_attenuation_matches_direct_formula():
    grid = make_grid(4001, 8000.0)
    t60 = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
    fdn = FDN(FdnSpec(4, delays=[13, 17, 19, 23], t60=t60, seed=1), grid)
    gains = fdn.attenuation.response().value
    p = fdn.parameters()
    ref = fdn_direct(p["A"], p["b"], p["c"], p["d"], p["delays"], grid, gains)
    got = fdn.matrix_response().value[:, 0, 0]
    assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_scaled_orthogonal_loop_matches_time_recursion():
    grid = make_grid(4097, FS)
    rng = np.random.default_rng(0)
    delays = [13.0, 17.0, 19.0, 23.0]
    A = Matrix(4, grid, map="orthogonal", seed=3).mapped().value
    b, c = rng.normal(size=4), rng.normal(size=4)
    g = np.full(4, 0.9)
    h = idft_hermitian(fdn_direct(A, b, c, 0.0, delays, grid, g), FS).samples
    ref = simulate_fdn(A, b, c, 0.0, delays, len(h), line_gains=g)
    assert np.max(np.abs(h - ref)) < 1e-6 * np.max(np.abs(ref))


def test_first_arrival_at_shortest_delay():
    grid = enveloped_grid(make_grid(8001, 8000.0), choose_gamma(8001, 8000.0, 60.0))
    fdn = FDN(FdnSpec(4, delays=[13, 17, 19, 23], t60=0.5, seed=2), grid)
    h = Shell(fdn).get_time_response().samples[:, 0]
    peak = np.max(np.abs(h))
    assert np.max(np.abs(h[:13])) < 1e-9 * peak
    assert abs(h[13]) > 1e-3 * peak


def test_lossless_fdn_energy_conserved():
    M = 24001
    grid = enveloped_grid(make_grid(M, FS), choose_gamma(M, FS, 60.0))
    fdn = FDN(FdnSpec(4, delays=[13, 17, 19, 23], input_gains=[1] * 4, output_gains=[1] * 4, seed=0), grid)
    h = Shell(fdn).get_time_response().samples[:, 0]
    window = 2000  # about a hundred passes through the loop
    n = len(h) // window
    energy = (h[: n * window] ** 2).reshape(n, window).sum(axis=1)[1:]
    assert np.max(np.abs(energy / energy.mean() - 1)) < 0.01


def test_lossless_fdn_on_unit_circle_asks_for_antialiasing():
    grid = make_grid(4001, 8000.0)
    fdn = FDN(FdnSpec(2, delays=[4, 6], seed=0), grid)
    with pytest.raises(IllConditionedError, match="anti-aliased"):
        fdn.matrix_response()


def test_default_delays():
    d = default_delays(6)
    assert d == [997, 1321, 1741, 2297, 3037, 4001]
    assert len(set(d)) == 6


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        FdnSpec(3, delays=[1, 2])
    with pytest.raises(DomainError):
        FdnSpec(2, delays=[1, -2])


def test_normalize_gains_unit_rms():
    grid = enveloped_grid(make_grid(2001, FS), choose_gamma(2001, FS, 60.0))
    fdn = FDN(FdnSpec(4, delays=[101, 131, 157, 181], seed=0), grid)
    normalize_gains(fdn)
    h = fdn.core.matrix_response().value[:, 0, 0]
    assert np.sqrt(np.mean(np.abs(h) ** 2)) == pytest.approx(1.0, rel=1e-12)


def test_fdn_serialization_roundtrip():
    grid = enveloped_grid(make_grid(257, FS), choose_gamma(257, FS, 60.0))
    fdn = FDN(FdnSpec(3, delays=[11, 13, 17], t60=[1.0] * 10, seed=4), grid)
    fdn.matrix.raw += 0.25
    clone = system_from_dict(fdn.to_dict(), grid)
    np.testing.assert_allclose(clone.matrix_response().value, fdn.matrix_response().value, rtol=1e-13)


def test_simulate_rejects_fractional_delays():
    with pytest.raises(DomainError):
        simulate_fdn(np.eye(1), [1.0], [1.0], 0.0, [2.5], 10)


# --- active acoustics ---------------------------------------------------------

def test_synth_room_envelope_reaches_minus_60_db():
    fs, t60 = 8000.0, 0.5
    length = int(t60 * fs) + 1
    irs = synth_room_responses(2, 3, t60, fs, seed=9, length=length)
    noise = np.random.default_rng(9).standard_normal((length, 2, 3))
    env = irs / noise
    np.testing.assert_allclose(env[-1] / env[0], 1e-3, rtol=1e-9)
    assert DECAY_60DB == pytest.approx(6.907755, rel=1e-6)


def test_synth_room_deterministic_and_unit_energy():
    a = synth_room_responses(4, 4, 0.3, 16000, seed=1)
    b = synth_room_responses(4, 4, 0.3, 16000, seed=1)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.sum(a ** 2, axis=0), 1.0, atol=1e-9)
    assert not np.array_equal(a, synth_room_responses(4, 4, 0.3, 16000, seed=2))


def test_aa_loop_structure():
    grid = make_grid(257, 16000.0)
    loop = AaLoop(AaSpec(mics=3, louds=2, room_t60=0.02, reverb_t60=0.01, fir_taps=8), grid)
    assert loop.loop_response().shape == (257, 3, 3)
    trainable = [m.name for m in loop.system.modules() if m.requires_grad]
    assert trainable == ["aa.U", "aa.G"]


def test_aa_loop_equals_product_of_parts():
    grid = make_grid(129, 16000.0)
    loop = AaLoop(AaSpec(mics=2, louds=2, room_t60=0.01, reverb_t60=0.005, fir_taps=4, gain=0.7), grid)
    U, R, H = (m.matrix_response().value for m in (loop.U, loop.R, loop.H))
    ref = 0.7 * (H @ R @ U)
    np.testing.assert_allclose(loop.loop_response(), ref, rtol=1e-12, atol=1e-14)


def test_aa_rejects_bad_room_shape():
    with pytest.raises(ShapeError):
        AaLoop(AaSpec(mics=2, louds=2, room_irs=np.zeros((10, 3, 2))), make_grid(65, 16000.0))


def test_max_magnitude_penalty():
    assert float(max_magnitude_penalty(np.array([0.5, 1.0, 3.0]), 1.0).value) == pytest.approx(4 / 3)


def test_load_room_responses(tmp_path):
    for i in range(2):
        for j in range(3):
            wavfile.write(tmp_path / f"mic{i + 1}_ls{j + 1}.wav", 16000,
                          np.full(5 + i + j, 0.1 * (i * 3 + j), dtype=np.float32))
    data, fs = load_room_responses(tmp_path, 2, 3)
    assert fs == 16000 and data.shape == (8, 2, 3)
    assert data[0, 1, 2] == pytest.approx(0.5)
    assert data[7, 0, 0] == 0.0
    with pytest.raises(ConfigurationError, match=r"\(3, 1\)"):
        load_room_responses(tmp_path, 3, 3)


# --- metrics ------------------------------------------------------------------

@pytest.mark.parametrize("shape", ["hann", "rect"])
def test_echo_density_of_noise(shape):
    x = np.random.default_rng(0).normal(size=48000)
    assert 0.9 <= echo_density(x, FS, shape=shape).eta.mean() <= 1.1
    eta = echo_density(x, FS, window=4096, shape=shape).eta
    assert np.all((eta >= 0.9) & (eta <= 1.1))


def test_echo_density_single_impulse():
    x = np.zeros(2000)
    x[500] = 1.0
    profile = echo_density(x, FS, window=256, shape="rect")
    hit = profile.eta[profile.eta > 0]
    np.testing.assert_allclose(hit, 1 / (256 * GAUSS_OUTLIER_FRACTION))
    assert GAUSS_OUTLIER_FRACTION == pytest.approx(0.3173105, rel=1e-6)


def test_echo_density_zero_signal():
    assert np.all(echo_density(np.zeros(1000), FS, window=128).eta == 0)


def test_echo_density_errors():
    with pytest.raises(DomainError):
        echo_density(np.zeros(1000), FS, window=32)
    with pytest.raises(DomainError):
        echo_density(np.zeros(100), FS, window=128)


def test_echo_density_first_time_above():
    x = np.zeros(9600)
    x[4800:] = np.random.default_rng(1).normal(size=4800)
    profile = echo_density(x, FS, window=960)
    t = profile.first_time_above(0.9)
    assert 0.09 <= t <= 0.11
    assert echo_density(np.zeros(2000), FS, window=960).first_time_above(0.9) == np.inf


def test_eig_diagonal():
    loop = np.broadcast_to(0.5 * np.eye(3), (10, 3, 3))
    stats = eig_magnitude_distribution(loop)
    np.testing.assert_allclose(stats.magnitudes, 0.5)
    assert stats.iqr == 0.0


def test_eig_permutation_unitary():
    P = np.eye(4)[[2, 0, 3, 1]]
    stats = eig_magnitude_distribution(np.broadcast_to(P, (5, 4, 4)))
    np.testing.assert_allclose(stats.magnitudes, 1.0, atol=1e-12)


def test_eig_matches_characteristic_polynomial():
    rng = np.random.default_rng(2)
    mats = rng.normal(size=(20, 3, 3)) + 1j * rng.normal(size=(20, 3, 3))
    stats = eig_magnitude_distribution(mats)
    for k in range(20):
        roots = np.sort(np.abs(np.roots(np.poly(mats[k]))))
        np.testing.assert_allclose(np.sort(stats.magnitudes[k]), roots, atol=1e-8)


def test_eig_rejects_non_square():
    with pytest.raises(ShapeError):
        eig_magnitude_distribution(np.zeros((4, 2, 3)))


def test_csv_writers(tmp_path):
    profile = echo_density(np.random.default_rng(0).normal(size=2000), FS, window=256)
    write_echo_density_csv(tmp_path / "e.csv", profile)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "time_s,eta" and len(lines) == len(profile.eta) + 1
    stats = eig_magnitude_distribution(np.broadcast_to(np.eye(2), (3, 2, 2)), freqs_hz=[0, 1, 2])
    write_eig_csv(tmp_path / "g.csv", stats)
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "freq_hz,q25,q75,max"


# --- audio --------------------------------------------------------------------

def test_wav_roundtrip(tmp_path):
    x = np.stack([np.linspace(-2, 2, 100), np.linspace(0, 1, 100)], axis=1)
    paths = write_wavs(tmp_path / "ir", x, sample_rate=8000)
    assert [p.name for p in paths] == ["ir_ch0.wav", "ir_ch1.wav"]
    fs, raw = wavfile.read(paths[0])
    assert raw.dtype == np.float32 and fs == 8000
    y, fs = read_wav(paths[0])
    np.testing.assert_allclose(y, x[:, 0] / 2, atol=1e-7)


def test_wav_without_normalization(tmp_path):
    x = 0.25 * np.ones(10)
    (path,) = write_wavs(tmp_path / "a", x, sample_rate=8000, normalize=False)
    np.testing.assert_allclose(read_wav(path)[0], 0.25)


def test_wav_rejects_non_finite(tmp_path):
    with pytest.raises(DomainError):
        write_wavs(tmp_path / "a", np.array([0.0, np.nan]), sample_rate=8000)


def test_read_integer_wav(tmp_path):
    wavfile.write(tmp_path / "i.wav", 8000, np.array([0, 16384, -32768], dtype=np.int16))
    np.testing.assert_allclose(read_wav(tmp_path / "i.wav")[0], [0, 0.5, -1])
