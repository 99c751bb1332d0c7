"""Fourier analysis of fixation segments and empirical filter identification.

The binocular channel of some trackers behaves like a low-pass filtered
version signal (the per-frame mean of both eyes).  Given paired segments
``x`` (version) and ``y`` (binocular), the filter is estimated per pair as
``h = IFFT(FFT(y) / FFT(x))``, the estimates are averaged, and the
magnitude response of the average is evaluated on a dense grid.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels, statkit
from .core import Eye, GazeChannel, GazeRecording
from .errors import (InsufficientData, InvalidSamples, NotPowerOfTwo, SpectralDivideByZero,
                     TimestampMismatch, WrongLength)

__all__ = [
    "SEGMENT_LENGTH",
    "SpectrumSet",
    "FilterEstimate",
    "fft",
    "ifft",
    "hann",
    "prepare_segment",
    "magnitude_spectrum",
    "version_signal",
    "estimate_filter",
    "response_db",
    "minus3db_point",
    "compute_spectra",
    "select_stable_stretches",
]

SEGMENT_LENGTH = 256
RESPONSE_FFT_LENGTH = 1024
DIVISION_EPS = 1e-8


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def fft(values) -> np.ndarray:
    a = np.asarray(values)
    if not _is_pow2(a.size):
        raise NotPowerOfTwo(f"length {a.size} is not a power of two")
    return kernels.fft_radix2(a.astype(complex), False)


def ifft(values) -> np.ndarray:
    a = np.asarray(values)
    if not _is_pow2(a.size):
        raise NotPowerOfTwo(f"length {a.size} is not a power of two")
    return kernels.fft_radix2(a.astype(complex), True)


def hann(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def _detrend_quadratic(a: np.ndarray) -> np.ndarray:
    n = a.size
    t = np.arange(n, dtype=float)
    t = (t - t.mean()) / max(1.0, t.std())
    fit = statkit.ols(a, np.column_stack([np.ones(n), t, t * t]))
    return fit.residuals


def prepare_segment(samples, length: int = SEGMENT_LENGTH, detrend: bool = True,
                    window: bool = True) -> np.ndarray:
    """Remove a least-squares quadratic trend (mean included) and apply a Hann window."""
    a = np.asarray(samples, dtype=float)
    if a.ndim != 1 or a.size != length:
        raise WrongLength(f"expected {length} samples, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise InvalidSamples("segment contains invalid samples")
    out = _detrend_quadratic(a) if detrend else a - a.mean()
    if window:
        out = out * hann(length)
    return out


def magnitude_spectrum(windowed, rate_hz: float):
    """Single-sided amplitude spectrum.

    Interior bins are scaled ``2/N``; the DC and Nyquist bins ``1/N``.
    Returns ``(freq_hz, magnitude)`` with ``N/2 + 1`` entries.
    """
    a = np.asarray(windowed, dtype=float)
    n = a.size
    X = fft(a)
    half = n // 2
    mag = np.abs(X[: half + 1]) / n
    mag[1:half] *= 2.0
    freq = np.arange(half + 1) * rate_hz / n
    return freq, mag


def version_signal(left: GazeChannel, right: GazeChannel) -> GazeChannel:
    """Per-frame mean of the two eyes; invalid wherever either eye is."""
    if len(left) != len(right) or not np.array_equal(left.t_ms, right.t_ms):
        raise TimestampMismatch("left and right channels are not frame-aligned")
    valid = left.valid & right.valid
    x = np.where(valid, 0.5 * (left.x + right.x), np.nan)
    y = np.where(valid, 0.5 * (left.y + right.y), np.nan)
    return GazeChannel(Eye.VERSION, left.t_ms, x, y, valid)


def response_db(impulse, rate_hz: float, n_fft: int = RESPONSE_FFT_LENGTH):
    """Magnitude response of an FIR impulse response on ``[0, rate/2]``.

    The impulse is zero-padded to ``n_fft`` (longer responses are folded,
    i.e. treated as periodic).  Returns ``(freq_hz, db)``.
    """
    h = np.asarray(impulse, dtype=float)
    if h.size > n_fft:
        n_fft = 1 << (h.size - 1).bit_length()
    padded = np.zeros(n_fft)
    padded[: h.size] = h
    H = fft(padded)[: n_fft // 2 + 1]
    mag = np.abs(H)
    db = 20.0 * np.log10(np.maximum(mag, 1e-300))
    freq = np.arange(n_fft // 2 + 1) * rate_hz / n_fft
    return freq, db


def minus3db_point(freq, db):
    """First frequency where the response falls 3 dB below its 0 Hz value.

    Located by linear interpolation in dB between grid points.  Returns
    ``(frequency, attenuated)``; when the response never drops that far the
    last grid frequency (Nyquist) is returned with ``attenuated=False``.
    """
    freq = np.asarray(freq, dtype=float)
    db = np.asarray(db, dtype=float)
    level = db[0] - 3.0
    below = np.flatnonzero(db < level)
    if below.size == 0:
        return float(freq[-1]), False
    k = int(below[0])
    if k == 0:
        return float(freq[0]), True
    f0, f1 = freq[k - 1], freq[k]
    d0, d1 = db[k - 1], db[k]
    frac = (d0 - level) / (d0 - d1)
    return float(f0 + frac * (f1 - f0)), True


@dataclass(frozen=True, eq=False)
class FilterEstimate:
    impulse: np.ndarray
    freq_hz: np.ndarray
    response_db: np.ndarray
    minus3db_hz: float
    attenuated: bool
    n_pairs: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("freq_hz,value\n")
        for f, v in zip(self.freq_hz, self.response_db):
            buf.write(f"{f!r},{float(v)!r}\n")
        return buf.getvalue()


def estimate_filter(version_segments: Sequence, binocular_segments: Sequence, rate_hz: float,
                    regularize: bool = True, eps: float = DIVISION_EPS,
                    window: bool = False) -> FilterEstimate:
    """Average per-pair impulse responses ``IFFT(Y/X)`` mapping version to binocular.

    Parameters
    ----------
    version_segments, binocular_segments : sequences of 1-D arrays
        Paired, equal-length (power of two) position segments.
    rate_hz : float
    regularize : bool
        Zero the ratio at bins where ``|X| < eps * max|X|``.  When False a
        bin with ``|X| == 0`` raises :class:`SpectralDivideByZero`.
    window : bool
        Detrend and Hann-window both signals before dividing, as in the
        spectra pipeline.  By default only the means are removed, which
        commutes exactly with circular convolution.
    """
    if len(version_segments) != len(binocular_segments):
        raise ValueError("version and binocular segment counts differ")
    if not version_segments:
        raise InsufficientData("no segment pairs")
    acc = None
    for xs, ys in zip(version_segments, binocular_segments):
        x = np.asarray(xs, dtype=float)
        y = np.asarray(ys, dtype=float)
        if x.size != y.size:
            raise WrongLength("paired segments differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidSamples("segment pair contains invalid samples")
        if window:
            x = prepare_segment(x, x.size)
            y = prepare_segment(y, y.size)
        else:
            x = x - x.mean()
            y = y - y.mean()
        X = fft(x)
        Y = fft(y)
        mag = np.abs(X)
        if regularize:
            ok = mag >= eps * mag.max() if mag.max() > 0 else np.zeros(mag.shape, bool)
        else:
            ok = np.ones(mag.shape, bool)
        if not window:
            # mean removal makes the DC bin structurally empty
            ok[0] = False
        if not regularize and np.any(mag[ok] == 0.0):
            raise SpectralDivideByZero("FFT of version segment has an exact zero bin")
        H = np.zeros_like(X)
        H[ok] = Y[ok] / X[ok]
        if not window and ok[1]:
            # DC gain is unobservable after mean removal; carry it over from the lowest bin
            H[0] = abs(H[1])
        h = np.real(ifft(H))
        acc = h if acc is None else acc + h
    impulse = acc / len(version_segments)
    freq, db = response_db(impulse, rate_hz)
    f3, attenuated = minus3db_point(freq, db)
    return FilterEstimate(impulse, freq, db, f3, attenuated, len(version_segments))


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    freq_hz: np.ndarray
    magnitude: dict
    n_segments: int

    def to_csv(self) -> str:
        eyes = list(self.magnitude)
        buf = io.StringIO()
        buf.write(",".join(["freq_hz"] + [e.value if isinstance(e, Eye) else str(e) for e in eyes]) + "\n")
        for k, f in enumerate(self.freq_hz):
            row = [repr(float(f))] + [repr(float(self.magnitude[e][k])) for e in eyes]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def compute_spectra(segments_by_eye: dict, rate_hz: float) -> SpectrumSet:
    """Average single-sided spectra of prepared segments, per channel."""
    freq = None
    mags = {}
    count = 0
    for eye, segs in segments_by_eye.items():
        if not segs:
            continue
        total = None
        for s in segs:
            f, m = magnitude_spectrum(prepare_segment(s, len(s)), rate_hz)
            total = m if total is None else total + m
            freq = f
        mags[eye] = total / len(segs)
        count = max(count, len(segs))
    if freq is None:
        raise InsufficientData("no segments for spectra")
    return SpectrumSet(freq, mags, count)


def select_stable_stretches(recording: GazeRecording, shift_ms: float, length: int = SEGMENT_LENGTH,
                            per_recording: int = 3, eyes=(Eye.VERSION, Eye.BINOCULAR),
                            start_step: int = 0, stride: int = 4,
                            guard_ms: float = 200.0) -> list[tuple[int, int]]:
    """Lowest-dispersion ``length``-sample stretches lying inside single fixation periods.

    Candidates must be fully valid in every channel of ``eyes``, must start
    at least ``guard_ms`` after a (latency-corrected) target onset and end
    before the next one.  The guard keeps saccade tails, and the transient
    they leave in a filtered channel, out of the stretch.  Candidates are
    scored by combined MAD of the first listed channel and chosen greedily
    without overlap.  Returns half-open sample-index ranges into the recording.
    """
    chans = [recording.channel(e) for e in eyes]
    valid = np.logical_and.reduce([c.valid for c in chans])
    ref = chans[0]
    t = ref.t_ms - shift_ms
    steps = recording.target
    cands = []
    for j in range(start_step, len(steps)):
        lo = int(np.searchsorted(t, steps[j].onset_ms + guard_ms, side="left"))
        hi = int(np.searchsorted(t, steps[j + 1].onset_ms, side="left")) if j + 1 < len(steps) else len(t)
        for s in range(lo, hi - length + 1, stride):
            e = s + length
            if not valid[s:e].all():
                continue
            score = math.hypot(statkit.mad(ref.x[s:e]), statkit.mad(ref.y[s:e]))
            cands.append((score, s))
    cands.sort()
    chosen = []
    for score, s in cands:
        if any(s < c + length and c < s + length for c in chosen):
            continue
        chosen.append(s)
        if len(chosen) == per_recording:
            break
    return [(s, s + length) for s in sorted(chosen)]
