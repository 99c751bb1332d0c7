"""End-to-end assessment of one recording, and corpus-level spectra and comparisons.

Order per channel: latency search, optional recalibration fitted on the
calibration-prefix fixations, segmentation of the task fixations, outlier
screening, metrics.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import metrics, preprocess, recalibration, spectral, statkit
from .core import Eye, GazeRecording
from .errors import DegenerateDesign, GazeQCError, InsufficientData
from .report import ChannelReport, QualityReport

log = logging.getLogger(__name__)

__all__ = ["AssessConfig", "assess_recording", "calibrate_channel", "SpectrumConfig", "spectrum_corpus",
           "compare_reports", "summarize_reports"]


@dataclass(frozen=True)
class AssessConfig:
    eyes: tuple = ("L", "R", "B")
    calibration: tuple = ()
    discard_ms: float = 400.0
    use_ms: float = 500.0
    max_shift: int = 200
    abs_limit_deg: float = 2.0
    bin_size: int = 20
    bins_per_fixation: int = 3
    drop_ms: float = 6.0
    short_ms: float = 0.04
    aggregate: str = "mean"

    def __post_init__(self):
        eyes = tuple(Eye.parse(e) for e in self.eyes)
        cal = tuple(recalibration.CalibrationKind(c) for c in self.calibration)
        if self.aggregate not in ("mean", "median"):
            raise ValueError("aggregate must be 'mean' or 'median'")
        if self.discard_ms < 0 or self.use_ms <= 0 or self.max_shift < 1 or self.bin_size < 2:
            raise ValueError("window, shift and bin settings must be positive")
        object.__setattr__(self, "eyes", eyes)
        object.__setattr__(self, "calibration", cal)


def calibrate_channel(recording: GazeRecording, eye, shift, kind, cfg: AssessConfig):
    """Fit a recalibration map on the calibration prefix and return ``(map, channel)``."""
    eye = Eye.parse(eye)
    if recording.calib_steps == 0:
        raise InsufficientData("recording has no calibration prefix")
    segs = preprocess.segment_fixations(recording, eye, shift, cfg.discard_ms, cfg.use_ms,
                                        stop_step=recording.calib_steps)
    bins = recalibration.select_stable_bins(segs, cfg.bin_size, cfg.bins_per_fixation)
    cmap = recalibration.fit_calibration(bins, kind)
    return cmap, recalibration.apply_calibration(recording.channel(eye), cmap)


def _channel_metrics(recording, eye, shift, channel, label, cfg: AssessConfig) -> ChannelReport:
    segs = preprocess.segment_fixations(recording, eye, shift, cfg.discard_ms, cfg.use_ms,
                                        channel=channel, start_step=recording.calib_steps)
    segs = preprocess.screen_segments(segs, cfg.abs_limit_deg)
    rep = ChannelReport(eye=eye.value, calibration=label, latency_samples=shift.shift_samples,
                        latency_ms=shift.shift_ms, n_fixations=len(segs),
                        n_usable=sum(s.usable for s in segs))
    acc = [metrics.spatial_accuracy(s) for s in segs if s.n_kept >= 1]
    pre = [metrics.spatial_precision(s) for s in segs if s.n_kept >= 2]
    rep.accuracy_fixations = acc
    rep.precision_fixations = pre
    if acc:
        rep.accuracy = metrics.aggregate(acc, cfg.aggregate)
    else:
        rep.warnings.append("no fixation had kept samples for accuracy")
    if pre:
        rep.precision = metrics.aggregate(pre, cfg.aggregate)
    for dim in ("H", "V"):
        try:
            rep.linearity[dim] = metrics.linearity(segs, dim)
        except (InsufficientData, DegenerateDesign) as exc:
            rep.linearity[dim] = None
            rep.warnings.append(f"linearity {dim}: {exc}")
        try:
            rep.crosstalk[dim] = metrics.crosstalk(segs, dim)
        except (InsufficientData, DegenerateDesign) as exc:
            rep.crosstalk[dim] = None
            rep.warnings.append(f"crosstalk {dim}: {exc}")
    rep.outliers = preprocess.outlier_statistics(segs)
    flagged = [s.index for s in segs if not s.usable]
    if flagged:
        rep.warnings.append(f"{len(flagged)} fixation(s) flagged low_n/empty: {flagged}")
    return rep


def assess_recording(recording: GazeRecording, cfg: AssessConfig = AssessConfig()) -> QualityReport:
    """Compute every quality measure for the configured eyes and calibration modes."""
    report = QualityReport(recording.subject_id, recording.device.value, recording.nominal_rate_hz)
    try:
        report.temporal = metrics.temporal_precision(recording.t_ms, cfg.drop_ms, cfg.short_ms)
    except InsufficientData as exc:
        report.warnings.append(f"temporal: {exc}")
    for eye in cfg.eyes:
        try:
            channel = recording.channel(eye)
        except KeyError:
            report.warnings.append(f"eye {eye.value} not present; skipped")
            continue
        shift = preprocess.estimate_latency(channel, recording.target, cfg.max_shift, recording.nominal_rate_hz)
        report.channels.append(_channel_metrics(recording, eye, shift, channel, "none", cfg))
        for kind in cfg.calibration:
            try:
                cmap, cal_channel = calibrate_channel(recording, eye, shift, kind, cfg)
            except GazeQCError as exc:
                report.warnings.append(f"{kind.value} {eye.value}: {exc}")
                continue
            rep = _channel_metrics(recording, eye, shift, cal_channel, kind.value, cfg)
            rep.calibration_map = cmap.to_dict()
            report.channels.append(rep)
    return report


# ----------------------------------------------------------------------
# spectra

@dataclass(frozen=True)
class SpectrumConfig:
    dimension: str = "H"
    per_recording: int = 3
    length: int = spectral.SEGMENT_LENGTH
    max_shift: int = 200
    window_filter: bool = False
    regularize: bool = True


def _segments_for(recording: GazeRecording, cfg: SpectrumConfig, ranges=None):
    version = recording.channel(Eye.VERSION)
    if ranges is None:
        shift = preprocess.estimate_latency(version, recording.target, cfg.max_shift, recording.nominal_rate_hz)
        ranges = spectral.select_stable_stretches(recording, shift.shift_ms, cfg.length, cfg.per_recording,
                                                  start_step=recording.calib_steps)
    axis = "x" if metrics.Dimension.parse(cfg.dimension) is metrics.Dimension.H else "y"
    out = {e: [] for e in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR, Eye.VERSION)}
    for lo, hi in ranges:
        for eye in out:
            ch = recording.channel(eye)
            seg = getattr(ch, axis)[lo:hi]
            if hi - lo != cfg.length or not ch.valid[lo:hi].all():
                raise InsufficientData(f"{recording.subject_id}: range {lo}:{hi} is not {cfg.length} valid samples")
            out[eye].append(np.array(seg))
    return out


def spectrum_corpus(recordings: Sequence[GazeRecording], cfg: SpectrumConfig = SpectrumConfig(),
                    overrides: dict | None = None):
    """Average spectra per channel and the version-to-binocular filter over a corpus.

    Returns ``(SpectrumSet, FilterEstimate)``.
    """
    pooled = {e: [] for e in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR, Eye.VERSION)}
    rates = set()
    for rec in recordings:
        ranges = (overrides or {}).get(rec.subject_id)
        segs = _segments_for(rec, cfg, ranges)
        for eye, s in segs.items():
            pooled[eye].extend(s)
        rates.add(rec.nominal_rate_hz)
    if not pooled[Eye.VERSION]:
        raise InsufficientData(f"no valid {cfg.length}-sample segment found")
    if len(rates) != 1:
        raise ValueError("recordings differ in nominal rate")
    rate = rates.pop()
    spectra = spectral.compute_spectra(pooled, rate)
    filt = spectral.estimate_filter(pooled[Eye.VERSION], pooled[Eye.BINOCULAR], rate,
                                    regularize=cfg.regularize, window=cfg.window_filter)
    return spectra, filt


# ----------------------------------------------------------------------
# corpus summaries and comparisons

def _metric_values(reports):
    """``{(eye, calibration, metric, dim): [per-subject values]}`` in first-seen order."""
    table = {}
    for r in reports:
        for c in r.channels:
            key = (c.eye, c.calibration)
            vals = []
            if c.accuracy is not None:
                vals += [("accuracy", "H", c.accuracy.theta_h), ("accuracy", "V", c.accuracy.theta_v),
                         ("accuracy", "C", c.accuracy.theta_c)]
            if c.precision is not None:
                vals += [("precision", "H", c.precision.mad_h), ("precision", "V", c.precision.mad_v),
                         ("precision", "C", c.precision.mad_c)]
            for dim in ("H", "V"):
                lin = c.linearity.get(dim)
                if lin is not None:
                    vals += [("linearity_slope", dim, lin.slope), ("linearity_r2", dim, lin.r2)]
            for metric, dim, v in vals:
                table.setdefault(key + (metric, dim), []).append(float(v))
    return table


def summarize_reports(reports) -> list[dict]:
    """Mean and SD across subjects per eye / calibration / metric / dimension."""
    rows = []
    for (eye, cal, metric, dim), vals in _metric_values(reports).items():
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append({"eye": eye, "calibration": cal, "metric": metric, "dimension": dim,
                     "n": len(vals), "mean": float(np.mean(vals)), "sd": sd})
    return rows


TRANSFORMS = {"accuracy": statkit.Transform.CUBE_ROOT, "precision": statkit.Transform.CUBE_ROOT,
              "linearity_r2": statkit.Transform.LOGIT}


def _result_row(key, res, p_adj, **extra):
    eye, cal, metric, dim = key
    row = {"eye": eye, "calibration": cal, "metric": metric, "dimension": dim}
    row.update(extra)
    row.update({"statistic": res.statistic if math.isfinite(res.statistic) else str(res.statistic),
                "df": res.df, "p": res.p_two_tailed, "p_holm": float(p_adj),
                "estimate": res.estimate, "ci_lo": res.ci95[0], "ci_hi": res.ci95[1],
                "degenerate": res.degenerate})
    return row


def compare_reports(group_a, group_b, transform: bool = True) -> dict:
    """Welch comparisons of every shared metric between two groups of reports,
    plus one-sample t tests of linearity slopes against 1.0 within each group.

    Accuracy and precision are cube-root transformed and R-squared logit
    transformed before testing unless ``transform`` is False.  Holm
    adjustment runs separately over the Welch table and the slope table.
    """
    ta, tb = _metric_values(group_a), _metric_values(group_b)
    welch = []
    for key in ta:
        if key not in tb or len(ta[key]) < 2 or len(tb[key]) < 2:
            continue
        a, b = np.array(ta[key]), np.array(tb[key])
        kind = TRANSFORMS.get(key[2]) if transform else None
        if kind is not None:
            a, b = statkit.transform(a, kind), statkit.transform(b, kind)
        welch.append((key, statkit.welch_anova_two_groups(a, b)))
    adj = statkit.holm_adjust([r.p_two_tailed for _, r in welch])
    slopes = []
    for label, table in (("A", ta), ("B", tb)):
        for key, vals in table.items():
            if key[2] == "linearity_slope" and len(vals) >= 2:
                slopes.append((label, key, statkit.one_sample_t(vals, 1.0)))
    adj_s = statkit.holm_adjust([r.p_two_tailed for _, _, r in slopes])
    return {
        "welch": [_result_row(k, r, p) for (k, r), p in zip(welch, adj)],
        "slopes_vs_1": [_result_row(k, r, p, group=g) for (g, k, r), p in zip(slopes, adj_s)],
    }
