"""Latency alignment, fixation segmentation and outlier screening.

Fixations are not detected: each target step defines one fixation period,
running from its onset to the next onset on the latency-corrected gaze
clock.  Data quality is measured over a fixed window inside each period
(400 ms discarded, the next 500 ms used by default).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels, statkit
from .core import Eye, GazeChannel, GazeRecording, TargetStep, correct_target_for_eye
from .errors import InsufficientData

log = logging.getLogger(__name__)

__all__ = [
    "LatencyEstimate",
    "FixationSegment",
    "estimate_latency",
    "segment_fixations",
    "remove_outliers",
    "screen_segments",
    "outlier_statistics",
    "OutlierStats",
    "LOW_N",
    "EMPTY",
    "TOO_FEW",
]

# segment flags
EMPTY = "empty"
TOO_FEW = "too_few_for_screening"
LOW_N = "low_n"

MIN_SCREEN_SAMPLES = 4
MIN_REGRESSION_SAMPLES = 10
FENCE_RTOL = 1e-12


@dataclass(frozen=True)
class LatencyEstimate:
    shift_samples: int
    shift_ms: float
    shifts: np.ndarray
    distances: np.ndarray

    @property
    def distance_curve(self):
        return list(zip(self.shifts.tolist(), self.distances.tolist()))

    @classmethod
    def fixed(cls, shift_samples: int, period_ms: float) -> "LatencyEstimate":
        """An estimate with no search curve, e.g. a manifest override."""
        return cls(int(shift_samples), shift_samples * period_ms, np.array([shift_samples]), np.array([np.nan]))


def _period_ms(channel: GazeChannel, nominal_rate_hz):
    if nominal_rate_hz:
        return 1000.0 / nominal_rate_hz
    return float(np.median(np.diff(channel.t_ms)))


def estimate_latency(channel: GazeChannel, target: Sequence[TargetStep],
                     max_shift_samples: int = 200, nominal_rate_hz: float | None = None) -> LatencyEstimate:
    """Find the whole-sample delay of gaze behind the target signal.

    For each shift ``s`` in ``1..max_shift_samples`` the target is sampled
    (zero-order hold) at the gaze timestamps moved ``s`` sample periods
    earlier, and the mean Euclidean gaze-target distance over valid samples
    is computed.  The smallest shift attaining the minimum wins.
    """
    if max_shift_samples < 1:
        raise ValueError("max_shift_samples must be >= 1")
    if len(target) < 2:
        raise InsufficientData("latency search needs at least two target steps")
    if int(np.count_nonzero(channel.valid)) <= max_shift_samples:
        raise InsufficientData(
            f"{np.count_nonzero(channel.valid)} valid samples; need more than {max_shift_samples}")
    period = _period_ms(channel, nominal_rate_hz)
    onsets = np.array([s.onset_ms for s in target])
    tx = np.array([s.x_deg for s in target])
    ty = np.array([s.y_deg for s in target])
    curve = kernels.latency_curve(channel.t_ms, channel.x, channel.y, channel.valid,
                                  onsets, tx, ty, period, max_shift_samples)
    if np.all(np.isnan(curve)):
        raise InsufficientData("no gaze sample overlaps the shifted target signal")
    best = int(np.nanargmin(curve)) + 1
    shifts = np.arange(1, max_shift_samples + 1)
    return LatencyEstimate(best, best * period, shifts, np.asarray(curve))


@dataclass(frozen=True, eq=False)
class FixationSegment:
    """One target step's fixation period on the latency-corrected clock.

    ``t_ms``/``x``/``y``/``valid`` hold every sample of the period (used for
    calibration binning); ``window`` masks the analysis window and ``kept``
    the window samples that survived screening.
    """

    index: int
    eye: Eye
    target: TargetStep
    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    window: np.ndarray
    kept: np.ndarray
    n_outliers_step1: int = 0
    n_outliers_step2: int = 0
    screened: bool = False
    flags: frozenset = field(default_factory=frozenset)

    @property
    def n_window(self) -> int:
        return int(np.count_nonzero(self.window))

    @property
    def n_window_valid(self) -> int:
        return int(np.count_nonzero(self.window & self.valid))

    @property
    def n_invalid(self) -> int:
        return self.n_window - self.n_window_valid

    @property
    def n_kept(self) -> int:
        return int(np.count_nonzero(self.kept))

    @property
    def kept_x(self) -> np.ndarray:
        return self.x[self.kept]

    @property
    def kept_y(self) -> np.ndarray:
        return self.y[self.kept]

    @property
    def usable(self) -> bool:
        return not (self.flags & {EMPTY, LOW_N})

    def centroid(self) -> tuple[float, float]:
        if self.n_kept == 0:
            return (float("nan"), float("nan"))
        return float(np.mean(self.kept_x)), float(np.mean(self.kept_y))


def segment_fixations(recording: GazeRecording, eye, shift: LatencyEstimate,
                      discard_ms: float = 400.0, use_ms: float = 500.0,
                      channel: GazeChannel | None = None,
                      start_step: int = 0, stop_step: int | None = None) -> list[FixationSegment]:
    """Cut the latency-corrected signal into one segment per target step.

    Parameters
    ----------
    recording : GazeRecording
    eye : Eye or str
        Monocular eyes get targets re-expressed in their own frame.
    shift : LatencyEstimate
        Gaze timestamps are moved ``shift.shift_ms`` earlier.
    discard_ms, use_ms : float
        Analysis window is ``[onset + discard_ms, onset + discard_ms + use_ms)``,
        truncated at the end of the fixation period.
    channel : GazeChannel, optional
        Use this signal instead of the recording's channel for ``eye``
        (e.g. a recalibrated channel).
    start_step, stop_step : int
        Restrict to a range of target steps.
    """
    eye = Eye.parse(eye)
    ch = channel if channel is not None else recording.channel(eye)
    steps = recording.target
    stop = len(steps) if stop_step is None else stop_step
    t = ch.t_ms - shift.shift_ms
    segments = []
    for j in range(start_step, stop):
        step = steps[j]
        lo = np.searchsorted(t, step.onset_ms, side="left")
        if j + 1 < len(steps):
            hi = np.searchsorted(t, steps[j + 1].onset_ms, side="left")
        else:
            hi = len(t)
        seg_t = t[lo:hi]
        w_start = step.onset_ms + discard_ms
        window = (seg_t >= w_start) & (seg_t < w_start + use_ms)
        valid = ch.valid[lo:hi]
        tgt = correct_target_for_eye(step, eye, recording.ipd_mm) if eye.monocular else step
        flags = set()
        kept = window & valid
        if not kept.any():
            flags.add(EMPTY)
            log.warning("segment %d (%s): analysis window has no valid samples", j, eye.value)
        segments.append(FixationSegment(
            index=j, eye=eye, target=tgt, t_ms=seg_t, x=ch.x[lo:hi], y=ch.y[lo:hi],
            valid=valid, window=window, kept=kept, flags=frozenset(flags)))
    return segments


def remove_outliers(segment: FixationSegment, abs_limit_deg: float = 2.0) -> FixationSegment:
    """Two-step outlier screen of the analysis window.

    Step 1 drops samples whose distance to the window centroid falls
    outside Tukey's fences.  Step 2 drops surviving samples farther than
    ``abs_limit_deg`` from that same centroid.  Fences are computed once, so
    re-screening an already screened segment returns it unchanged.
    """
    if segment.screened:
        return segment
    cand = segment.window & segment.valid
    n = int(np.count_nonzero(cand))
    flags = set(segment.flags)
    if n < MIN_SCREEN_SAMPLES:
        flags.add(TOO_FEW)
        if n < MIN_REGRESSION_SAMPLES:
            flags.add(LOW_N)
        return replace(segment, kept=cand, screened=True, flags=frozenset(flags))
    idx = np.flatnonzero(cand)
    xs, ys = segment.x[idx], segment.y[idx]
    cx, cy = np.mean(xs), np.mean(ys)
    d = np.hypot(xs - cx, ys - cy)
    q1, q3 = statkit.quartiles(d)
    spread = q3 - q1
    # absorb rounding in the distances so a zero-IQR window keeps equal points
    slack = FENCE_RTOL * max(q3, 1.0)
    inside = (d >= q1 - 1.5 * spread - slack) & (d <= q3 + 1.5 * spread + slack)
    near = d <= abs_limit_deg
    step1 = ~inside
    step2 = inside & ~near
    kept = np.zeros_like(cand)
    kept[idx[inside & near]] = True
    n_kept = int(np.count_nonzero(kept))
    if n_kept < MIN_REGRESSION_SAMPLES:
        flags.add(LOW_N)
    if n_kept == 0:
        flags.add(EMPTY)
    return replace(segment, kept=kept, screened=True,
                   n_outliers_step1=int(np.count_nonzero(step1)),
                   n_outliers_step2=int(np.count_nonzero(step2)),
                   flags=frozenset(flags))


def screen_segments(segments, abs_limit_deg: float = 2.0) -> list[FixationSegment]:
    return [remove_outliers(s, abs_limit_deg) for s in segments]


@dataclass(frozen=True)
class OutlierStats:
    step1_mean_pct: float
    step1_sd_pct: float
    step2_mean_pct: float
    step2_sd_pct: float
    n_segments: int


def outlier_statistics(segments: Sequence[FixationSegment]) -> OutlierStats:
    """Mean and SD across segments of the percent of screened samples removed per step.

    Percentages are relative to the valid window samples of each segment;
    segments with none are skipped.  SD uses ``n - 1`` and is 0 for a
    single segment.
    """
    p1, p2 = [], []
    for s in segments:
        n = s.n_window_valid
        if n == 0:
            continue
        p1.append(100.0 * s.n_outliers_step1 / n)
        p2.append(100.0 * s.n_outliers_step2 / n)
    if not p1:
        return OutlierStats(0.0, 0.0, 0.0, 0.0, 0)

    def sd(v):
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    return OutlierStats(float(np.mean(p1)), sd(p1), float(np.mean(p2)), sd(p2), len(p1))
