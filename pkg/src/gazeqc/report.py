"""Quality report structure and its JSON/CSV forms.

JSON reports carry ``"schema": 1`` at the top level.  Missing results are
``null``; NaN never appears.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metrics import (AccuracyResult, CrosstalkModel, CrosstalkResult, Dimension, LinearityResult,
                      PrecisionResult, TemporalResult)
from .preprocess import OutlierStats

SCHEMA_VERSION = 1

CSV_COLUMNS = ("subject_id", "device", "eye", "calibration", "metric", "dimension", "value")

__all__ = ["ChannelReport", "QualityReport", "report_to_csv", "SCHEMA_VERSION", "CSV_COLUMNS"]


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class ChannelReport:
    eye: str
    calibration: str
    latency_samples: int
    latency_ms: float
    n_fixations: int
    n_usable: int
    accuracy: Optional[AccuracyResult] = None
    precision: Optional[PrecisionResult] = None
    accuracy_fixations: list = field(default_factory=list)
    precision_fixations: list = field(default_factory=list)
    linearity: dict = field(default_factory=dict)
    crosstalk: dict = field(default_factory=dict)
    outliers: Optional[OutlierStats] = None
    calibration_map: Optional[dict] = None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def acc(a):
            return None if a is None else {"H": _num(a.theta_h), "V": _num(a.theta_v), "C": _num(a.theta_c)}

        def pre(p):
            return None if p is None else {"H": _num(p.mad_h), "V": _num(p.mad_v), "C": _num(p.mad_c)}

        lin = {}
        for dim, r in self.linearity.items():
            lin[dim] = None if r is None else {
                "slope": _num(r.slope), "intercept": _num(r.intercept),
                "slope_ci95": [_num(r.slope_ci95[0]), _num(r.slope_ci95[1])],
                "r2": _num(r.r2), "n": r.n}
        ct = {}
        for dim, r in self.crosstalk.items():
            ct[dim] = None if r is None else {
                "model": r.chosen_model.value,
                "coefficients": {k: _num(v) for k, v in r.coefficients.items()},
                "aic": {k: "-inf" if v == float("-inf") else _num(v) for k, v in r.aic.items()},
                "n": r.n}
        out = None if self.outliers is None else {
            "step1_mean_pct": self.outliers.step1_mean_pct, "step1_sd_pct": self.outliers.step1_sd_pct,
            "step2_mean_pct": self.outliers.step2_mean_pct, "step2_sd_pct": self.outliers.step2_sd_pct,
            "n_segments": self.outliers.n_segments}
        return {
            "eye": self.eye,
            "calibration": self.calibration,
            "latency_samples": self.latency_samples,
            "latency_ms": _num(self.latency_ms),
            "n_fixations": self.n_fixations,
            "n_usable": self.n_usable,
            "accuracy": acc(self.accuracy),
            "precision": pre(self.precision),
            "linearity": lin,
            "crosstalk": ct,
            "outliers": out,
            "calibration_map": self.calibration_map,
            "fixations": {
                "accuracy": [acc(a) for a in self.accuracy_fixations],
                "precision": [pre(p) for p in self.precision_fixations],
            },
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d) -> "ChannelReport":
        def acc(a):
            return None if a is None else AccuracyResult(a["H"], a["V"], a["C"])

        def pre(p):
            return None if p is None else PrecisionResult(p["H"], p["V"], p["C"])

        def aic_val(v):
            return float("-inf") if v == "-inf" else (float("nan") if v is None else v)

        lin = {dim: None if r is None else LinearityResult(
            Dimension(dim), r["slope"], r["intercept"], tuple(r["slope_ci95"]), r["r2"], r["n"])
            for dim, r in d.get("linearity", {}).items()}
        ct = {dim: None if r is None else CrosstalkResult(
            Dimension(dim), CrosstalkModel(r["model"]), dict(r["coefficients"]),
            {k: aic_val(v) for k, v in r["aic"].items()}, r["n"])
            for dim, r in d.get("crosstalk", {}).items()}
        o = d.get("outliers")
        fx = d.get("fixations", {})
        return cls(
            eye=d["eye"], calibration=d["calibration"], latency_samples=d["latency_samples"],
            latency_ms=d["latency_ms"], n_fixations=d["n_fixations"], n_usable=d["n_usable"],
            accuracy=acc(d.get("accuracy")), precision=pre(d.get("precision")),
            accuracy_fixations=[acc(a) for a in fx.get("accuracy", [])],
            precision_fixations=[pre(p) for p in fx.get("precision", [])],
            linearity=lin, crosstalk=ct,
            outliers=None if o is None else OutlierStats(**o),
            calibration_map=d.get("calibration_map"),
            warnings=list(d.get("warnings", [])),
        )


@dataclass
class QualityReport:
    subject_id: str
    device: str
    nominal_rate_hz: float
    temporal: Optional[TemporalResult] = None
    channels: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    stamp: Optional[str] = None

    def channel(self, eye, calibration="none") -> ChannelReport:
        for c in self.channels:
            if c.eye == eye and c.calibration == calibration:
                return c
        raise KeyError(f"no {eye}/{calibration} results in report {self.subject_id}")

    def to_dict(self) -> dict:
        t = self.temporal
        d = {
            "schema": SCHEMA_VERSION,
            "subject_id": self.subject_id,
            "device": self.device,
            "nominal_rate_hz": self.nominal_rate_hz,
            "temporal": None if t is None else {
                "isi_mean_ms": _num(t.isi_mean_ms), "isi_sd_ms": _num(t.isi_sd_ms), "n_isi": t.n_isi,
                "dropped": list(t.dropped), "short": list(t.short)},
            "channels": [c.to_dict() for c in self.channels],
            "warnings": list(self.warnings),
        }
        if self.stamp is not None:
            d["stamp"] = self.stamp
        return d

    @classmethod
    def from_dict(cls, d) -> "QualityReport":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        t = d.get("temporal")
        return cls(
            subject_id=d["subject_id"], device=d["device"], nominal_rate_hz=d["nominal_rate_hz"],
            temporal=None if t is None else TemporalResult(
                t["isi_mean_ms"], t["isi_sd_ms"], t["n_isi"], tuple(t["dropped"]), tuple(t["short"])),
            channels=[ChannelReport.from_dict(c) for c in d.get("channels", [])],
            warnings=list(d.get("warnings", [])),
            stamp=d.get("stamp"),
        )

    def __eq__(self, other):
        if not isinstance(other, QualityReport):
            return NotImplemented
        return _canon(self.to_dict()) == _canon(other.to_dict())


def _canon(obj):
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    return obj


def metric_rows(report: QualityReport):
    """Flat ``(eye, calibration, metric, dimension, value)`` rows in a fixed order."""
    rows = []
    if report.temporal is not None:
        t = report.temporal
        rows += [("-", "-", "isi_mean_ms", "-", t.isi_mean_ms), ("-", "-", "isi_sd_ms", "-", t.isi_sd_ms),
                 ("-", "-", "n_dropped", "-", t.n_dropped), ("-", "-", "n_short", "-", t.n_short)]
    for c in report.channels:
        key = (c.eye, c.calibration)
        rows.append(key + ("latency_ms", "-", c.latency_ms))
        if c.accuracy is not None:
            rows += [key + ("accuracy", "H", c.accuracy.theta_h), key + ("accuracy", "V", c.accuracy.theta_v),
                     key + ("accuracy", "C", c.accuracy.theta_c)]
        if c.precision is not None:
            rows += [key + ("precision", "H", c.precision.mad_h), key + ("precision", "V", c.precision.mad_v),
                     key + ("precision", "C", c.precision.mad_c)]
        for dim in ("H", "V"):
            r = c.linearity.get(dim)
            if r is not None:
                rows += [key + ("linearity_slope", dim, r.slope), key + ("linearity_intercept", dim, r.intercept),
                         key + ("linearity_slope_ci_lo", dim, r.slope_ci95[0]),
                         key + ("linearity_slope_ci_hi", dim, r.slope_ci95[1]),
                         key + ("linearity_r2", dim, r.r2)]
        for dim in ("H", "V"):
            r = c.crosstalk.get(dim)
            if r is not None:
                rows += [key + ("crosstalk_model", dim, r.chosen_model.value),
                         key + ("crosstalk_linear", dim, r.coefficients["linear"]),
                         key + ("crosstalk_quadratic", dim, r.coefficients["quadratic"])]
        if c.outliers is not None:
            rows += [key + ("outliers_step1_pct", "-", c.outliers.step1_mean_pct),
                     key + ("outliers_step2_pct", "-", c.outliers.step2_mean_pct)]
    return rows


def report_to_csv(report: QualityReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for eye, cal, metric, dim, value in metric_rows(report):
        if isinstance(value, str):
            text = value
        elif value is None or (isinstance(value, float) and not math.isfinite(value)):
            text = ""
        else:
            text = repr(float(value)) if isinstance(value, float) or isinstance(value, np.floating) else str(value)
        buf.write(",".join([report.subject_id, report.device, eye, cal, metric, dim, text]) + "\n")
    return buf.getvalue()
