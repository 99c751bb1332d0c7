import numpy as np
import pytest

from gazeqc import spectral, synth
from gazeqc.core import Eye, GazeChannel
from gazeqc.errors import (InsufficientData, InvalidSamples, NotPowerOfTwo, SpectralDivideByZero, TimestampMismatch,
                           WrongLength)

N = 256


def _circular(taps, x):
    taps = np.asarray(taps, dtype=float)
    return np.array([sum(taps[k] * x[(n - k) % x.size] for k in range(taps.size)) for n in range(x.size)])


def _ma_response(n, freq, rate):
    """Analytic magnitude of an n-tap moving average (Dirichlet kernel)."""
    w = np.pi * np.asarray(freq) / rate
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(np.sin(n * w) / (n * np.sin(w)))
    r[w == 0] = 1.0
    return r


def test_hann_window():
    w = spectral.hann(N)
    assert w[0] == 0.0 and w[-1] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(w, np.hanning(N))


def test_prepare_constant_and_quadratic():
    assert np.allclose(spectral.prepare_segment(np.full(N, 3.7)), 0.0, atol=1e-12)
    t = np.arange(N, dtype=float)
    assert np.max(np.abs(spectral.prepare_segment(2.0 - 0.3 * t + 1e-3 * t * t))) < 1e-9


def test_prepare_removes_trend_keeps_tone():
    t = np.arange(N)
    x = np.sin(2 * np.pi * 10 * t / N) + 0.05 * t
    _, mag = spectral.magnitude_spectrum(spectral.prepare_segment(x), 250.0)
    assert int(np.argmax(mag)) == 10
    untrended = spectral.magnitude_spectrum(spectral.prepare_segment(np.sin(2 * np.pi * 10 * t / N)), 250.0)[1]
    leak = np.sum((mag - untrended) ** 2)
    assert leak < 0.01 * mag[10] ** 2


def test_prepare_errors():
    with pytest.raises(WrongLength):
        spectral.prepare_segment(np.zeros(100))
    x = np.zeros(N)
    x[3] = np.nan
    with pytest.raises(InvalidSamples):
        spectral.prepare_segment(x)


def test_spectrum_of_impulse_and_cosine():
    d = np.zeros(N)
    d[0] = 1.0
    freq, mag = spectral.magnitude_spectrum(d, 250.0)
    assert freq.size == N // 2 + 1 and freq[-1] == 125.0
    assert mag[0] == pytest.approx(1 / N) and mag[-1] == pytest.approx(1 / N)
    assert np.allclose(mag[1:-1], 2 / N)
    t = np.arange(N)
    _, mag = spectral.magnitude_spectrum(np.cos(2 * np.pi * 17 * t / N), 250.0)
    assert mag[17] == pytest.approx(1.0)
    assert np.max(np.delete(mag, 17)) < 1e-12
    with pytest.raises(NotPowerOfTwo):
        spectral.magnitude_spectrum(np.zeros(100), 250.0)


def test_fft_matches_naive_dft():
    x = np.random.default_rng(0).normal(size=N)
    k = np.arange(N)
    ref = np.exp(-2j * np.pi * np.outer(k, k) / N) @ x
    assert np.max(np.abs(spectral.fft(x) - ref)) / np.max(np.abs(ref)) <= 1e-9


def test_parseval_and_single_sided_energy():
    x = spectral.prepare_segment(np.random.default_rng(1).normal(size=N))
    X = spectral.fft(x)
    assert np.sum(x ** 2) == pytest.approx(np.sum(np.abs(X) ** 2) / N, rel=1e-6)
    _, mag = spectral.magnitude_spectrum(x, 250.0)
    # undo the single-sided scaling: interior bins carry both conjugate halves
    two_sided = mag[0] ** 2 + mag[-1] ** 2 + 2 * np.sum((mag[1:-1] / 2) ** 2)
    assert two_sided * N == pytest.approx(np.sum(np.abs(X) ** 2) / N, rel=1e-9)


def test_version_signal():
    t = [0.0, 4.0, 8.0]
    left = GazeChannel(Eye.LEFT, t, [1.0, 1.0, 5.0], [0.0, 0.0, 1.0], [1, 1, 1])
    right = GazeChannel(Eye.RIGHT, t, [3.0, np.nan, 5.0], [2.0, np.nan, 1.0], [1, 0, 1])
    v = spectral.version_signal(left, right)
    assert (v.x[0], v.y[0]) == (2.0, 1.0)
    assert v.valid.tolist() == [True, False, True]
    same = spectral.version_signal(left, left.with_eye(Eye.RIGHT))
    assert np.array_equal(same.x, left.x)
    with pytest.raises(TimestampMismatch):
        spectral.version_signal(left, GazeChannel(Eye.RIGHT, [0, 4, 9], [0] * 3, [0] * 3, [1] * 3))


def test_identity_filter():
    rng = np.random.default_rng(2)
    xs = [rng.normal(size=N) for _ in range(3)]
    est = spectral.estimate_filter(xs, xs, 250.0)
    assert est.impulse[0] == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(est.impulse[1:])) < 1e-9
    assert np.max(np.abs(est.response_db)) < 1e-6
    assert not est.attenuated and est.minus3db_hz == 125.0


def test_moving_average_recovered_from_circular_pairs():
    rng = np.random.default_rng(3)
    taps = synth.moving_average_taps(9)
    xs = [rng.laplace(size=N) for _ in range(6)]
    ys = [_circular(taps, x) for x in xs]
    est = spectral.estimate_filter(xs, ys, 250.0)
    truth = 20 * np.log10(np.maximum(_ma_response(9, est.freq_hz, 250.0), 1e-300))
    passband = truth >= -3.0
    assert np.max(np.abs(est.response_db[passband] - truth[passband])) < 0.5
    f_grid = np.linspace(0, 125, 200001)
    analytic = f_grid[np.argmax(_ma_response(9, f_grid, 250.0) < 10 ** (-3 / 20))]
    assert est.minus3db_hz == pytest.approx(analytic, rel=0.05)


def test_filter_scale_equivariant():
    rng = np.random.default_rng(4)
    taps = synth.lowpass_taps(20.0, 250.0)
    xs = [rng.normal(size=N) for _ in range(2)]
    ys = [_circular(taps, x) for x in xs]
    a = spectral.estimate_filter(xs, ys, 250.0)
    b = spectral.estimate_filter([7.5 * x for x in xs], [7.5 * y for y in ys], 250.0)
    assert np.allclose(a.impulse, b.impulse, atol=1e-12)


def test_filter_errors():
    with pytest.raises(ValueError):
        spectral.estimate_filter([np.zeros(N)], [], 250.0)
    with pytest.raises(InsufficientData):
        spectral.estimate_filter([], [], 250.0)
    with pytest.raises(WrongLength):
        spectral.estimate_filter([np.ones(N)], [np.ones(128)], 250.0)
    # a Nyquist-rate alternation has exact zeros in every other bin
    tone = np.tile([1.0, -1.0], N // 2)
    with pytest.raises(SpectralDivideByZero):
        spectral.estimate_filter([tone], [tone], 250.0, regularize=False)
    est = spectral.estimate_filter([tone], [tone], 250.0)
    assert np.isfinite(est.impulse).all()


def test_minus3db_interpolation():
    freq = np.array([0.0, 10.0, 20.0])
    f, att = spectral.minus3db_point(freq, np.array([0.0, -2.0, -4.0]))
    assert att and f == pytest.approx(15.0)
    f, att = spectral.minus3db_point(freq, np.array([0.0, -1.0, -2.0]))
    assert not att and f == 20.0


def test_response_of_known_taps():
    freq, db = spectral.response_db(synth.moving_average_taps(9), 250.0)
    assert freq.size == spectral.RESPONSE_FFT_LENGTH // 2 + 1
    assert db[0] == pytest.approx(0.0, abs=1e-12)
    truth = 20 * np.log10(np.maximum(_ma_response(9, freq, 250.0), 1e-300))
    ok = truth > -60
    assert np.allclose(db[ok], truth[ok], atol=1e-6)


def test_averaged_spectra_of_identical_segments():
    x = np.random.default_rng(5).normal(size=N)
    one = spectral.compute_spectra({Eye.VERSION: [x]}, 250.0)
    many = spectral.compute_spectra({Eye.VERSION: [x] * 4}, 250.0)
    assert np.allclose(one.magnitude[Eye.VERSION], many.magnitude[Eye.VERSION])
    assert many.n_segments == 4
    assert "freq_hz,V" in many.to_csv().splitlines()[0]


def test_stable_stretches_inside_fixations(noisy_recording):
    rec, gt = noisy_recording
    shift = gt.latency_samples * 4.0
    ranges = spectral.select_stable_stretches(rec, shift, start_step=rec.calib_steps)
    assert len(ranges) == 3
    t = rec.channel("V").t_ms - shift
    onsets = np.array([s.onset_ms for s in rec.target])
    for lo, hi in ranges:
        assert hi - lo == N
        j = np.searchsorted(onsets, t[lo], side="right") - 1
        assert j >= rec.calib_steps
        assert t[lo] >= onsets[j] + 200.0
        assert j + 1 == len(onsets) or t[hi - 1] < onsets[j + 1]
    for (a, b), (c, d) in zip(ranges, ranges[1:]):
        assert b <= c
