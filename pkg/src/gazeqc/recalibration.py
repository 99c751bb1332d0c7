"""User-supplied recalibration from stable fixation bins.

Each calibration fixation period is split into consecutive bins; bins with
any invalid sample are dropped and the remaining bins are ranked by radial
IQR.  Samples from the quietest bins feed two independent least-squares
fits, one per output axis:

* USC-1: ``x' = A x + B y + C``
* USC-2: ``x' = A x^2 + B y^2 + C x + D y + E``
"""
from __future__ import annotations

import enum
import json
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import statkit
from .core import GazeChannel, TargetStep
from .errors import InsufficientData, NoUsableBins, RankDeficient
from .preprocess import FixationSegment

log = logging.getLogger(__name__)

__all__ = [
    "CalibrationKind",
    "StableBin",
    "CalibrationMap",
    "select_stable_bins",
    "fit_calibration",
    "apply_calibration",
]


class CalibrationKind(str, enum.Enum):
    USC1 = "usc1"
    USC2 = "usc2"

    @property
    def names(self):
        return ("A", "B", "C") if self is CalibrationKind.USC1 else ("A", "B", "C", "D", "E")

    @property
    def min_targets(self) -> int:
        return 3 if self is CalibrationKind.USC1 else 5


@dataclass(frozen=True, eq=False)
class StableBin:
    fixation: int
    bin: int
    start: int
    stop: int
    iqr_x: float
    iqr_y: float
    iqr_radial: float
    x: np.ndarray
    y: np.ndarray
    target: TargetStep


def select_stable_bins(segments: Sequence[FixationSegment], bin_size: int = 20,
                       bins_per_fixation: int = 3, strict: bool = False) -> list[StableBin]:
    """Pick the lowest-radial-IQR bins of each fixation's full period.

    Ties keep the earlier bin.  A fixation with fewer surviving bins than
    requested contributes all of them (with a warning); one with none is
    skipped, or raises :class:`NoUsableBins` when ``strict``.
    """
    chosen = []
    for seg in segments:
        n_bins = len(seg.t_ms) // bin_size
        ranked = []
        for b in range(n_bins):
            lo, hi = b * bin_size, (b + 1) * bin_size
            if not np.all(seg.valid[lo:hi]):
                continue
            ix = statkit.iqr(seg.x[lo:hi])
            iy = statkit.iqr(seg.y[lo:hi])
            ranked.append((math.hypot(ix, iy), b, ix, iy))
        if not ranked:
            if strict:
                raise NoUsableBins(seg.index)
            log.warning("fixation %d: no usable calibration bins", seg.index)
            continue
        ranked.sort(key=lambda r: (r[0], r[1]))
        if len(ranked) < bins_per_fixation:
            warnings.warn(f"fixation {seg.index}: only {len(ranked)} usable bins", RuntimeWarning, stacklevel=2)
        for rad, b, ix, iy in ranked[:bins_per_fixation]:
            lo, hi = b * bin_size, (b + 1) * bin_size
            chosen.append(StableBin(seg.index, b, lo, hi, ix, iy, rad,
                                    seg.x[lo:hi].copy(), seg.y[lo:hi].copy(), seg.target))
    return chosen


def _features(kind: CalibrationKind, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is CalibrationKind.USC1:
        return np.column_stack([x, y, np.ones_like(x)])
    return np.column_stack([x * x, y * y, x, y, np.ones_like(x)])


@dataclass(frozen=True, eq=False)
class CalibrationMap:
    kind: CalibrationKind
    weights_x: np.ndarray
    weights_y: np.ndarray

    def __post_init__(self):
        kind = CalibrationKind(self.kind)
        wx = np.asarray(self.weights_x, dtype=float)
        wy = np.asarray(self.weights_y, dtype=float)
        if wx.shape != (len(kind.names),) or wy.shape != (len(kind.names),):
            raise ValueError(f"{kind.value} needs {len(kind.names)} weights per axis")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "weights_x", wx)
        object.__setattr__(self, "weights_y", wy)

    def __eq__(self, other):
        if not isinstance(other, CalibrationMap):
            return NotImplemented
        return (self.kind == other.kind and np.array_equal(self.weights_x, other.weights_x)
                and np.array_equal(self.weights_y, other.weights_y))

    @classmethod
    def identity(cls, kind) -> "CalibrationMap":
        kind = CalibrationKind(kind)
        if kind is CalibrationKind.USC1:
            return cls(kind, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        return cls(kind, [0.0, 0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0, 0.0])

    def __call__(self, x, y):
        F = _features(self.kind, np.atleast_1d(x), np.atleast_1d(y))
        return F @ self.weights_x, F @ self.weights_y

    def to_dict(self) -> dict:
        names = self.kind.names
        return {
            "kind": self.kind.value,
            "x": {n: float(w) for n, w in zip(names, self.weights_x)},
            "y": {n: float(w) for n, w in zip(names, self.weights_y)},
        }

    @classmethod
    def from_dict(cls, d) -> "CalibrationMap":
        kind = CalibrationKind(d["kind"])
        return cls(kind, [d["x"][n] for n in kind.names], [d["y"][n] for n in kind.names])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text) -> "CalibrationMap":
        return cls.from_dict(json.loads(text))


def fit_calibration(bins: Sequence[StableBin], kind) -> CalibrationMap:
    """Least-squares gaze-to-target map from the samples of the selected bins.

    Every bin sample is a separate observation paired with its fixation's
    target, which should already be eye-corrected for monocular channels.
    """
    kind = CalibrationKind(kind)
    if not bins:
        raise InsufficientData("no calibration bins")
    targets = {(b.target.x_deg, b.target.y_deg) for b in bins}
    if len(targets) < kind.min_targets:
        raise RankDeficient(f"{kind.value} needs >= {kind.min_targets} distinct targets, got {len(targets)}")
    gx = np.concatenate([b.x for b in bins])
    gy = np.concatenate([b.y for b in bins])
    tx = np.concatenate([np.full(b.x.size, b.target.x_deg) for b in bins])
    ty = np.concatenate([np.full(b.y.size, b.target.y_deg) for b in bins])
    F = _features(kind, gx, gy)
    fx = statkit.ols(tx, F)
    fy = statkit.ols(ty, F)
    return CalibrationMap(kind, fx.coefficients, fy.coefficients)


def apply_calibration(channel: GazeChannel, cmap: CalibrationMap) -> GazeChannel:
    """Map every valid sample through ``cmap``; invalid samples pass through."""
    v = channel.valid
    x = np.array(channel.x, dtype=float)
    y = np.array(channel.y, dtype=float)
    if v.any():
        nx, ny = cmap(x[v], y[v])
        x[v] = nx
        y[v] = ny
    return channel.with_positions(x, y)
