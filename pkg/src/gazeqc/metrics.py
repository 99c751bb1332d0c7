"""Spatial accuracy, spatial precision, temporal precision, linearity and crosstalk."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import statkit
from .core import GazeChannel
from .errors import DegenerateDesign, InsufficientData, NoValidSamples, RankDeficient
from .preprocess import FixationSegment

__all__ = [
    "AccuracyResult",
    "PrecisionResult",
    "TemporalResult",
    "LinearityResult",
    "CrosstalkResult",
    "CrosstalkModel",
    "Dimension",
    "spatial_accuracy",
    "spatial_precision",
    "temporal_precision",
    "linearity",
    "crosstalk",
    "aggregate",
    "crosstalk_design",
    "select_crosstalk_model",
    "CROSSTALK_MODELS",
]


class Dimension(str, enum.Enum):
    H = "H"
    V = "V"

    @classmethod
    def parse(cls, value) -> "Dimension":
        if isinstance(value, Dimension):
            return value
        text = str(value).strip().upper()
        if text in ("H", "HORIZONTAL", "X"):
            return cls.H
        if text in ("V", "VERTICAL", "Y"):
            return cls.V
        raise ValueError(f"unknown dimension {value!r}")


@dataclass(frozen=True)
class AccuracyResult:
    theta_h: float
    theta_v: float
    theta_c: float


@dataclass(frozen=True)
class PrecisionResult:
    mad_h: float
    mad_v: float
    mad_c: float


def aggregate(results, how: str = "mean"):
    """Recording-level value: mean (default) or median across fixations, per field."""
    results = list(results)
    if not results:
        raise NoValidSamples("no fixation results to aggregate")
    cls = type(results[0])
    reduce = np.mean if how == "mean" else np.median
    names = cls.__dataclass_fields__
    return cls(**{k: float(reduce([getattr(r, k) for r in results])) for k in names})


def spatial_accuracy(segment: FixationSegment) -> AccuracyResult:
    """Mean absolute horizontal/vertical offset and mean Euclidean offset from the target."""
    if segment.n_kept == 0:
        raise NoValidSamples(f"segment {segment.index} has no kept samples")
    dx = segment.kept_x - segment.target.x_deg
    dy = segment.kept_y - segment.target.y_deg
    return AccuracyResult(float(np.mean(np.abs(dx))), float(np.mean(np.abs(dy))),
                          float(np.mean(np.hypot(dx, dy))))


def spatial_precision(segment: FixationSegment) -> PrecisionResult:
    """Median absolute deviation per axis, and combined about the geometric median.

    The horizontal and vertical values use the scalar median as centre; the
    combined value is ``sqrt(M(|x - gx|)^2 + M(|y - gy|)^2)`` with ``(gx, gy)``
    the geometric median.  No normal-consistency factor is applied.
    """
    if segment.n_kept < 2:
        raise NoValidSamples(f"segment {segment.index} has fewer than two kept samples")
    x, y = segment.kept_x, segment.kept_y
    gx, gy = statkit.geometric_median(np.column_stack([x, y]))
    mad_c = math.hypot(statkit.mad(x, gx), statkit.mad(y, gy))
    return PrecisionResult(statkit.mad(x), statkit.mad(y), mad_c)


@dataclass(frozen=True)
class TemporalResult:
    isi_mean_ms: float
    isi_sd_ms: float
    n_isi: int
    dropped: tuple
    short: tuple

    @property
    def n_dropped(self) -> int:
        return len(self.dropped)

    @property
    def n_short(self) -> int:
        return len(self.short)


def temporal_precision(channel, drop_ms: float = 6.0, short_ms: float = 0.04) -> TemporalResult:
    """Intersample-interval statistics from a channel or a timestamp array.

    ``dropped``/``short`` list the index ``i`` of each sample whose interval
    from sample ``i - 1`` exceeds ``drop_ms`` or falls below ``short_ms``.
    """
    t = channel.t_ms if isinstance(channel, GazeChannel) else np.asarray(channel, dtype=float)
    if t.size < 3:
        raise InsufficientData("temporal precision needs at least three samples")
    isi = np.diff(t)
    dropped = tuple((np.flatnonzero(isi > drop_ms) + 1).tolist())
    short = tuple((np.flatnonzero(isi < short_ms) + 1).tolist())
    return TemporalResult(float(np.mean(isi)), float(np.std(isi, ddof=1)), int(isi.size), dropped, short)


@dataclass(frozen=True)
class LinearityResult:
    dimension: Dimension
    slope: float
    intercept: float
    slope_ci95: tuple
    r2: float
    n: int


def _usable(segments):
    return [s for s in segments if s.usable and s.n_kept > 0]


def linearity(segments: Sequence[FixationSegment], dimension) -> LinearityResult:
    """Regress fixation centroids on target positions along one axis."""
    dim = Dimension.parse(dimension)
    segs = _usable(segments)
    if len(segs) < 3:
        raise InsufficientData(f"linearity needs >= 3 usable fixations, got {len(segs)}")
    axis = 0 if dim is Dimension.H else 1
    cent = np.array([s.centroid()[axis] for s in segs])
    tgt = np.array([s.target.x_deg if axis == 0 else s.target.y_deg for s in segs])
    if np.unique(tgt).size < 2:
        raise DegenerateDesign("all fixation targets share one position")
    try:
        fit = statkit.ols(cent, np.column_stack([np.ones_like(tgt), tgt]))
    except RankDeficient as exc:
        raise DegenerateDesign(str(exc)) from exc
    lo, hi = fit.ci95(1)
    slope = float(fit.coefficients[1])
    return LinearityResult(dim, slope, float(fit.coefficients[0]), (min(lo, slope), max(hi, slope)), fit.r2, fit.n)


class CrosstalkModel(str, enum.Enum):
    INTERCEPT_ONLY = "InterceptOnly"
    LINEAR_ONLY = "LinearOnly"
    QUADRATIC_ONLY = "QuadraticOnly"
    LINEAR_PLUS_QUADRATIC = "LinearPlusQuadratic"


# order doubles as tie-break preference (fewer parameters first)
CROSSTALK_MODELS = {
    CrosstalkModel.INTERCEPT_ONLY: (),
    CrosstalkModel.LINEAR_ONLY: ("linear",),
    CrosstalkModel.QUADRATIC_ONLY: ("quadratic",),
    CrosstalkModel.LINEAR_PLUS_QUADRATIC: ("linear", "quadratic"),
}


@dataclass(frozen=True)
class CrosstalkResult:
    direction: Dimension
    chosen_model: CrosstalkModel
    coefficients: dict
    aic: dict
    n: int


def crosstalk_design(orth, terms):
    orth = np.asarray(orth, dtype=float)
    cols = [np.ones_like(orth)]
    for term in terms:
        cols.append(orth if term == "linear" else orth ** 2)
    return np.column_stack(cols)


def select_crosstalk_model(offset, orth):
    """Exhaustive AIC over the four candidate models; ties favour fewer terms."""
    fits, scores = {}, {}
    for model, terms in CROSSTALK_MODELS.items():
        try:
            fit = statkit.ols(offset, crosstalk_design(orth, terms))
        except RankDeficient as exc:
            raise DegenerateDesign(f"{model.value}: {exc}") from exc
        fits[model] = fit
        scores[model] = statkit.aic(fit)
    best = min(CROSSTALK_MODELS, key=lambda m: (scores[m], len(CROSSTALK_MODELS[m])))
    return best, fits, scores


def crosstalk(segments: Sequence[FixationSegment], direction) -> CrosstalkResult:
    """Select how the signed offset in ``direction`` depends on the orthogonal target coordinate.

    Horizontal crosstalk regresses ``centroid_x - target_x`` on ``target_y``;
    vertical crosstalk regresses ``centroid_y - target_y`` on ``target_x``.
    """
    dim = Dimension.parse(direction)
    segs = _usable(segments)
    if len(segs) < 5:
        raise InsufficientData(f"crosstalk needs >= 5 usable fixations, got {len(segs)}")
    cents = np.array([s.centroid() for s in segs])
    tx = np.array([s.target.x_deg for s in segs])
    ty = np.array([s.target.y_deg for s in segs])
    if dim is Dimension.H:
        offset, orth = cents[:, 0] - tx, ty
    else:
        offset, orth = cents[:, 1] - ty, tx
    best, fits, scores = select_crosstalk_model(offset, orth)
    beta = fits[best].coefficients
    names = ("intercept",) + CROSSTALK_MODELS[best]
    coefs = {"intercept": 0.0, "linear": 0.0, "quadratic": 0.0}
    coefs.update({k: float(b) for k, b in zip(names, beta)})
    return CrosstalkResult(dim, best, coefs, {m.value: float(a) for m, a in scores.items()}, len(segs))
