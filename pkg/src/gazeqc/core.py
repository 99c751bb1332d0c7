"""Domain types, angle geometry and per-eye target correction.

Angles are degrees of visual angle, rightward and upward positive.  Gaze
direction vectors use a z-forward frame, so ``x = atan2(vx, vz)`` and
``y = atan2(vy, vz)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ChannelLengthMismatch, DegenerateVector, NonMonotonicTimestamps

__all__ = [
    "Eye",
    "Device",
    "GazeSample",
    "GazeChannel",
    "TargetStep",
    "GazeRecording",
    "UnitGazeVector",
    "unit_vector_to_angles",
    "angles_to_unit_vector",
    "correct_target_for_eye",
    "apply_static_offset",
    "target_at",
    "DEFAULT_IPD_MM",
    "DEFAULT_DEPTH_MM",
]

DEFAULT_IPD_MM = 62.0
DEFAULT_DEPTH_MM = 1000.0


class Eye(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"
    BINOCULAR = "B"
    VERSION = "V"

    @property
    def monocular(self) -> bool:
        return self in (Eye.LEFT, Eye.RIGHT)

    @classmethod
    def parse(cls, value) -> "Eye":
        if isinstance(value, Eye):
            return value
        text = str(value).strip().lower()
        for eye in cls:
            if text in (eye.value.lower(), eye.name.lower()):
                return eye
        raise ValueError(f"unknown eye {value!r}")


class Device(str, enum.Enum):
    ET_HMD = "EtHmd"
    EYELINK = "EyeLink"
    SYNTHETIC = "Synthetic"
    OTHER = "Other"

    @classmethod
    def parse(cls, value) -> "Device":
        if isinstance(value, Device):
            return value
        text = str(value).strip().lower()
        for dev in cls:
            if text in (dev.value.lower(), dev.name.lower()):
                return dev
        raise ValueError(f"unknown device {value!r}")


class GazeSample(NamedTuple):
    timestamp_ms: float
    x_deg: float
    y_deg: float
    valid: bool


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GazeChannel:
    """One eye's gaze signal, stored column-wise.

    Positions that are NaN force the sample invalid.  The arrays are
    read-only copies, so channels can be shared freely.
    """

    eye: Eye
    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t_ms)
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if not (len(t) == len(x) == len(y) == len(valid)):
            raise ChannelLengthMismatch(
                f"{self.eye}: column lengths differ "
                f"({len(t)}, {len(x)}, {len(y)}, {len(valid)})"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("timestamps must be finite")
        steps = np.diff(t)
        bad = np.flatnonzero(steps <= 0)
        if bad.size:
            raise NonMonotonicTimestamps(int(bad[0]) + 1)
        valid = valid & np.isfinite(x) & np.isfinite(y)
        object.__setattr__(self, "eye", Eye.parse(self.eye))
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "valid", _frozen(valid, bool))

    def __len__(self):
        return len(self.t_ms)

    def __getitem__(self, i) -> GazeSample:
        return GazeSample(float(self.t_ms[i]), float(self.x[i]),
                          float(self.y[i]), bool(self.valid[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, GazeChannel):
            return NotImplemented
        return (
            self.eye == other.eye
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.x[self.valid], other.x[other.valid])
            and np.array_equal(self.y[self.valid], other.y[other.valid])
        )

    @classmethod
    def from_samples(cls, eye, samples: Sequence[GazeSample]) -> "GazeChannel":
        if len(samples) == 0:
            return cls(eye, [], [], [], [])
        t, x, y, v = zip(*samples)
        return cls(eye, t, x, y, v)

    def with_positions(self, x, y, valid=None) -> "GazeChannel":
        return GazeChannel(self.eye, self.t_ms, x, y,
                           self.valid if valid is None else valid)

    def with_eye(self, eye) -> "GazeChannel":
        return replace(self, eye=Eye.parse(eye))


@dataclass(frozen=True)
class TargetStep:
    onset_ms: float
    x_deg: float
    y_deg: float
    depth_mm: float = DEFAULT_DEPTH_MM


@dataclass(frozen=True, eq=False)
class GazeRecording:
    subject_id: str
    device: Device
    nominal_rate_hz: float
    channels: Mapping[Eye, GazeChannel]
    target: tuple
    ipd_mm: float = DEFAULT_IPD_MM
    calib_steps: int = 0

    def __post_init__(self):
        if not self.channels:
            raise ValueError("recording needs at least one channel")
        chans = {Eye.parse(k): v for k, v in self.channels.items()}
        ref = next(iter(chans.values())).t_ms
        for eye, ch in chans.items():
            if ch.eye != eye:
                raise ValueError(f"channel keyed {eye} reports eye {ch.eye}")
            if len(ch.t_ms) != len(ref):
                raise ChannelLengthMismatch(f"channel {eye.value} has {len(ch)} samples, expected {len(ref)}")
            if not np.array_equal(ch.t_ms, ref):
                raise ValueError(f"channel {eye.value} does not share the frame clock")
        target = tuple(self.target)
        onsets = [s.onset_ms for s in target]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("target onsets must be strictly increasing")
        if not 0 <= self.calib_steps <= len(target):
            raise ValueError("calib_steps outside the target sequence")
        object.__setattr__(self, "channels", dict(sorted(chans.items(), key=lambda kv: "LRBV".index(kv[0].value))))
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "device", Device.parse(self.device))

    @property
    def t_ms(self) -> np.ndarray:
        return next(iter(self.channels.values())).t_ms

    def channel(self, eye) -> GazeChannel:
        eye = Eye.parse(eye)
        if eye in self.channels:
            return self.channels[eye]
        if eye is Eye.VERSION and Eye.LEFT in self.channels and Eye.RIGHT in self.channels:
            from .spectral import version_signal
            return version_signal(self.channels[Eye.LEFT], self.channels[Eye.RIGHT])
        raise KeyError(f"recording {self.subject_id} has no {eye.name.lower()} channel")

    def __eq__(self, other):
        if not isinstance(other, GazeRecording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.device == other.device
            and self.nominal_rate_hz == other.nominal_rate_hz
            and self.ipd_mm == other.ipd_mm
            and self.calib_steps == other.calib_steps
            and self.target == other.target
            and self.channels == other.channels
        )

    def replace_channel(self, channel: GazeChannel) -> "GazeRecording":
        chans = dict(self.channels)
        chans[channel.eye] = channel
        return replace(self, channels=chans)


@dataclass(frozen=True)
class UnitGazeVector:
    vx: float
    vy: float
    vz: float

    def __post_init__(self):
        comps = (self.vx, self.vy, self.vz)
        if not all(math.isfinite(c) for c in comps):
            raise DegenerateVector("vector components must be finite")
        if abs(math.fsum(c * c for c in comps) - 1.0) > 1e-6:
            raise ValueError("gaze vector is not unit length")


def unit_vector_to_angles(v: UnitGazeVector) -> tuple[float, float]:
    """Convert a z-forward unit gaze vector to (horizontal, vertical) degrees."""
    if v.vx == 0.0 and v.vz == 0.0:
        raise DegenerateVector("vx and vz are both zero")
    if v.vy == 0.0 and v.vz == 0.0:
        raise DegenerateVector("vy and vz are both zero")
    return (math.degrees(math.atan2(v.vx, v.vz)),
            math.degrees(math.atan2(v.vy, v.vz)))


def angles_to_unit_vector(x_deg: float, y_deg: float) -> UnitGazeVector:
    """Inverse of :func:`unit_vector_to_angles` for forward-facing gaze."""
    tx = math.tan(math.radians(x_deg))
    ty = math.tan(math.radians(y_deg))
    norm = math.sqrt(tx * tx + ty * ty + 1.0)
    return UnitGazeVector(tx / norm, ty / norm, 1.0 / norm)


def correct_target_for_eye(step: TargetStep, eye, ipd_mm: float = DEFAULT_IPD_MM) -> TargetStep:
    """Re-express a nasal-bridge target as seen from one eye.

    The target sits at ``(d tan x, d tan y, d)`` relative to the nasal bridge
    and the eye is displaced by half the interpupillary distance (left eye
    to the left).  Binocular and version targets pass through unchanged.
    """
    eye = Eye.parse(eye)
    if not eye.monocular:
        return step
    if step.depth_mm <= 0:
        raise ValueError("depth_mm must be positive")
    if ipd_mm < 0:
        raise ValueError("ipd_mm must be non-negative")
    depth = step.depth_mm
    eye_x = -ipd_mm / 2.0 if eye is Eye.LEFT else ipd_mm / 2.0
    dx = depth * math.tan(math.radians(step.x_deg)) - eye_x
    dy = depth * math.tan(math.radians(step.y_deg))
    # Vertical angle uses the same atan2(vy, vz) convention as the tracker output.
    return replace(step,
                   x_deg=math.degrees(math.atan2(dx, depth)),
                   y_deg=math.degrees(math.atan2(dy, depth)))


def apply_static_offset(channel: GazeChannel, dx_deg: float = 0.0, dy_deg: float = 0.0) -> GazeChannel:
    """Shift every valid sample by a constant (e.g. the EyeLink +1.2 deg vertical fix)."""
    if dx_deg == 0.0 and dy_deg == 0.0:
        return channel
    v = channel.valid
    x = np.where(v, channel.x + dx_deg, channel.x)
    y = np.where(v, channel.y + dy_deg, channel.y)
    return channel.with_positions(x, y)


def target_at(times_ms, steps: Sequence[TargetStep]):
    """Zero-order-hold target position at each time.

    Returns ``(x, y, index)``; times before the first onset get index -1
    and NaN positions.
    """
    times = np.asarray(times_ms, dtype=float)
    onsets = np.array([s.onset_ms for s in steps], dtype=float)
    tx = np.array([s.x_deg for s in steps], dtype=float)
    ty = np.array([s.y_deg for s in steps], dtype=float)
    idx = np.searchsorted(onsets, times, side="right") - 1
    before = idx < 0
    safe = np.where(before, 0, idx)
    x = np.where(before, np.nan, tx[safe] if len(tx) else np.nan)
    y = np.where(before, np.nan, ty[safe] if len(ty) else np.nan)
    return x, y, idx
