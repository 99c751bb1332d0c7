"""Synthetic random-saccade recordings with known ground truth.

Random numbers come from numpy's Philox4x64 counter-based generator keyed
by the config seed, so a seed fully determines a recording.

Timing model: samples sit on a nominal ``1000 / rate_hz`` ms grid plus
independent Gaussian jitter of ``isi_jitter_sd_ms / sqrt(2)`` per
timestamp (giving the requested intersample-interval SD).  Target onsets
fall half-way between nominal samples, and each saccade's transition
(a quintic smoothstep lasting ``transition_ms``, constant outside it) is
centred ``latency_ms`` after its onset, so the latency is
exactly ``latency_ms / period`` whole samples under zero-order-hold
alignment.

Distortions are applied per eye in this order: bias polynomial, crosstalk,
additive noise, planted outliers.  When a binocular filter is configured
the binocular channel is the filtered version signal (its own bias/noise
settings are then ignored).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import statkit
from .core import (DEFAULT_DEPTH_MM, DEFAULT_IPD_MM, Device, Eye, GazeChannel, GazeRecording,
                   TargetStep, correct_target_for_eye)
from .errors import ConfigInvalid
from .spectral import minus3db_point, response_db

__all__ = [
    "Distortion",
    "Crosstalk",
    "SynthConfig",
    "GroundTruth",
    "generate",
    "ground_truth_report",
    "calibration_grid",
    "lowpass_taps",
    "moving_average_taps",
    "fir_filter",
    "write_corpus",
]

PHI_INV_075 = 0.6744897501960817  # standard-normal 75th percentile
LN2 = math.log(2.0)


@dataclass(frozen=True)
class Distortion:
    """Second-order polynomial bias per output axis.

    ``x' = x0 + xx*x + xy*y + xxx*x^2 + xyy*y^2`` and likewise for ``y'``.
    """

    x0: float = 0.0
    xx: float = 1.0
    xy: float = 0.0
    xxx: float = 0.0
    xyy: float = 0.0
    y0: float = 0.0
    yx: float = 0.0
    yy: float = 1.0
    yxx: float = 0.0
    yyy: float = 0.0

    def __call__(self, x, y):
        nx = self.x0 + self.xx * x + self.xy * y + self.xxx * x * x + self.xyy * y * y
        ny = self.y0 + self.yx * x + self.yy * y + self.yxx * x * x + self.yyy * y * y
        return nx, ny

    @property
    def is_identity(self) -> bool:
        return self == Distortion()


@dataclass(frozen=True)
class Crosstalk:
    """Orthogonal-axis leakage: ``x += h_lin*y + h_quad*y^2``, ``y += v_lin*x + v_quad*x^2``."""

    h_lin: float = 0.0
    h_quad: float = 0.0
    v_lin: float = 0.0
    v_quad: float = 0.0

    def __call__(self, x, y):
        return (x + self.h_lin * y + self.h_quad * y * y,
                y + self.v_lin * x + self.v_quad * x * x)


def _per_eye(value, default):
    if value is None:
        return {}
    if isinstance(value, Mapping):
        return {Eye.parse(k): v for k, v in value.items()}
    return {e: value for e in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR)}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    subject_id: str = "synth-000"
    rate_hz: float = 250.0
    n_saccades: int = 30
    x_range: float = 15.0
    y_range: float = 10.0
    min_step_deg: float = 3.0
    fix_min_ms: float = 1000.0
    fix_max_ms: float = 1500.0
    latency_ms: float = 192.0
    transition_ms: float = 40.0
    eyes: tuple = ("L", "R", "B")
    noise_mad_deg: object = field(default_factory=lambda: {"L": 0.10, "R": 0.085, "B": 0.052})
    noise_law: str = "laplace"
    bias: object = field(default_factory=dict)
    crosstalk: object = field(default_factory=dict)
    binocular_taps: tuple | None = None
    binocular_cutoff_hz: float | None = None
    isi_jitter_sd_ms: float = 0.071
    drop_rate: float = 0.0
    invalid_rate: float = 0.0
    outlier_rate: float = 0.0
    outlier_amplitude_deg: float = 5.0
    calib_prefix: bool = True
    ipd_mm: float = DEFAULT_IPD_MM
    depth_mm: float = DEFAULT_DEPTH_MM
    device: str = "Synthetic"

    def __post_init__(self):
        problems = []
        if self.rate_hz <= 0:
            problems.append("rate_hz must be positive")
        if self.x_range <= 0 or self.y_range <= 0:
            problems.append("x_range and y_range must be positive")
        if self.n_saccades < 1:
            problems.append("n_saccades must be >= 1")
        if self.min_step_deg < 0:
            problems.append("min_step_deg must be >= 0")
        if self.min_step_deg >= 2 * math.hypot(self.x_range, self.y_range):
            problems.append("min_step_deg cannot be met inside the target range")
        if not 0 < self.fix_min_ms <= self.fix_max_ms:
            problems.append("need 0 < fix_min_ms <= fix_max_ms")
        if self.latency_ms < 0 or self.transition_ms <= 0:
            problems.append("latency_ms must be >= 0 and transition_ms > 0")
        if self.noise_law not in ("laplace", "gaussian"):
            problems.append("noise_law must be 'laplace' or 'gaussian'")
        for name in ("drop_rate", "invalid_rate", "outlier_rate"):
            if not 0 <= getattr(self, name) < 1:
                problems.append(f"{name} must lie in [0, 1)")
        if self.isi_jitter_sd_ms < 0:
            problems.append("isi_jitter_sd_ms must be >= 0")
        if self.binocular_cutoff_hz is not None and not 0 < self.binocular_cutoff_hz < self.rate_hz / 2:
            problems.append("binocular_cutoff_hz must lie in (0, rate/2)")
        elif self.binocular_cutoff_hz is not None:
            try:
                lowpass_taps(self.binocular_cutoff_hz, self.rate_hz)
            except ConfigInvalid as exc:
                problems.append(str(exc))
        if self.ipd_mm < 0 or self.depth_mm <= 0:
            problems.append("ipd_mm must be >= 0 and depth_mm > 0")
        try:
            eyes = tuple(Eye.parse(e) for e in self.eyes)
        except ValueError as exc:
            problems.append(str(exc))
            eyes = ()
        if Eye.VERSION in eyes:
            problems.append("the version channel is derived, not generated")
        if problems:
            raise ConfigInvalid("; ".join(problems))
        object.__setattr__(self, "eyes", eyes)

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.rate_hz

    @property
    def latency_samples(self) -> int:
        return int(round(self.latency_ms / self.period_ms))

    def noise_for(self, eye: Eye) -> float:
        return float(_per_eye(self.noise_mad_deg, 0.0).get(eye, 0.0))

    def bias_for(self, eye: Eye) -> Distortion:
        d = _per_eye(self.bias, None).get(eye, Distortion())
        return d if isinstance(d, Distortion) else Distortion(**d)

    def crosstalk_for(self, eye: Eye) -> Crosstalk:
        c = _per_eye(self.crosstalk, None).get(eye, Crosstalk())
        return c if isinstance(c, Crosstalk) else Crosstalk(**c)

    @property
    def filter_taps(self):
        if self.binocular_taps is not None:
            return np.asarray(self.binocular_taps, dtype=float)
        if self.binocular_cutoff_hz is not None:
            return lowpass_taps(self.binocular_cutoff_hz, self.rate_hz)
        return None

    @classmethod
    def clean(cls, **kw) -> "SynthConfig":
        """No noise, jitter or distortion."""
        base = dict(noise_mad_deg={}, isi_jitter_sd_ms=0.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_mapping(cls, d: Mapping) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown synth settings: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for key in ("eyes", "binocular_taps"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "eyes":
                v = [e.value for e in v]
            elif f.name in ("bias", "crosstalk"):
                v = {(k.value if isinstance(k, Eye) else k): (asdict(x) if hasattr(x, "__dataclass_fields__") else dict(x))
                     for k, x in (v or {}).items()}
            elif f.name == "noise_mad_deg":
                v = {(k.value if isinstance(k, Eye) else k): x for k, x in v.items()} if isinstance(v, Mapping) else v
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def calibration_grid(x_range: float = 15.0, y_range: float = 10.0):
    """Thirteen points: a 3x3 grid over the range plus the four quadrant centres."""
    pts = [(sx * x_range, sy * y_range) for sy in (1, 0, -1) for sx in (-1, 0, 1)]
    pts += [(sx * x_range / 2, sy * y_range / 2) for sy in (1, -1) for sx in (-1, 1)]
    return pts


def lowpass_taps(cutoff_hz: float, rate_hz: float, numtaps: int = 21) -> np.ndarray:
    """Hamming-windowed-sinc low-pass whose -3 dB point equals ``cutoff_hz``.

    The sinc cutoff is tuned by bisection so the designed filter (not the
    ideal prototype) crosses -3 dB at the requested frequency.
    """
    n = np.arange(numtaps) - (numtaps - 1) / 2.0
    win = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(numtaps) / (numtaps - 1))

    def design(fc):
        h = 2.0 * fc / rate_hz * np.sinc(2.0 * fc / rate_hz * n) * win
        return h / h.sum()

    def f3(fc):
        freq, db = response_db(design(fc), rate_hz, 4096)
        return minus3db_point(freq, db)[0]

    lo, hi = 1e-3 * rate_hz, 0.5 * rate_hz
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f3(mid) < cutoff_hz:
            lo = mid
        else:
            hi = mid
    fc = 0.5 * (lo + hi)
    if abs(f3(fc) - cutoff_hz) > 1e-3 * cutoff_hz:
        raise ConfigInvalid(f"a {numtaps}-tap low-pass cannot place -3 dB at {cutoff_hz} Hz")
    return design(fc)


def moving_average_taps(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def fir_filter(taps, signal) -> np.ndarray:
    """Causal FIR filtering; the signal is extended backwards with its first value."""
    taps = np.asarray(taps, dtype=float)
    s = np.asarray(signal, dtype=float)
    pad = np.concatenate([np.full(taps.size - 1, s[0]), s])
    return np.convolve(pad, taps, mode="valid")


def _smoothstep(u):
    """Quintic smoothstep on [0, 1]: C2 sigmoid, exactly 0 before and 1 after."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    config: SynthConfig
    latency_samples: int
    calib_steps: int
    targets: tuple
    noise_mad_deg: dict
    planted_outliers: dict
    window_sizes: dict
    filter_taps: np.ndarray | None
    isi_sd_ms: float
    n_dropped: int

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "latency_samples": self.latency_samples,
            "latency_ms": self.latency_samples * self.config.period_ms,
            "calib_steps": self.calib_steps,
            "noise_mad_deg": {e.value: v for e, v in self.noise_mad_deg.items()},
            "planted_outliers": {str(k): v for k, v in self.planted_outliers.items()},
            "filter_taps": None if self.filter_taps is None else [float(v) for v in self.filter_taps],
            "isi_sd_ms": self.isi_sd_ms,
            "n_dropped": self.n_dropped,
            "expected": ground_truth_report(self),
        }


def _draw_targets(cfg: SynthConfig, rng, start):
    out = []
    prev = start
    for _ in range(cfg.n_saccades):
        for _attempt in range(10000):
            x = rng.uniform(-cfg.x_range, cfg.x_range)
            y = rng.uniform(-cfg.y_range, cfg.y_range)
            if prev is None or math.hypot(x - prev[0], y - prev[1]) >= cfg.min_step_deg:
                break
        else:  # pragma: no cover - guarded by config validation
            raise ConfigInvalid("could not place a target honouring min_step_deg")
        out.append((x, y))
        prev = (x, y)
    return out


def generate(cfg: SynthConfig):
    """Build one recording and its ground truth from ``cfg``.

    Returns
    -------
    (GazeRecording, GroundTruth)
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    dt = cfg.period_ms

    positions = []
    calib_steps = 0
    if cfg.calib_prefix:
        grid = calibration_grid(cfg.x_range, cfg.y_range)
        order = rng.permutation(len(grid))
        positions = [grid[i] for i in order]
        calib_steps = len(positions)
    positions += _draw_targets(cfg, rng, positions[-1] if positions else None)

    dur_samples = np.rint(rng.uniform(cfg.fix_min_ms, cfg.fix_max_ms, len(positions)) / dt).astype(int)
    start_idx = np.concatenate([[0], np.cumsum(dur_samples)[:-1]])
    onsets = (start_idx + 0.5) * dt
    lat = cfg.latency_samples
    n_total = int(start_idx[-1] + dur_samples[-1] + lat + 1)
    targets = tuple(TargetStep(float(o), float(x), float(y), cfg.depth_mm)
                    for o, (x, y) in zip(onsets, positions))

    nominal = np.arange(n_total) * dt
    jitter = cfg.isi_jitter_sd_ms / math.sqrt(2.0)
    t = nominal + (rng.normal(0.0, jitter, n_total) if jitter > 0 else 0.0)

    centres = onsets + lat * dt

    def ideal(eye):
        tg = [correct_target_for_eye(s, eye, cfg.ipd_mm) if eye.monocular else s for s in targets]
        px = np.array([s.x_deg for s in tg])
        py = np.array([s.y_deg for s in tg])
        x = np.full(n_total, px[0])
        y = np.full(n_total, py[0])
        for j in range(1, len(tg)):
            w = _smoothstep((nominal - centres[j]) / cfg.transition_ms + 0.5)
            x += (px[j] - px[j - 1]) * w
            y += (py[j] - py[j - 1]) * w
        return x, y

    # analysis-window sample indices per task fixation (default 400/500 ms window)
    windows = {}
    for j in range(calib_steps, len(targets)):
        lo_t = onsets[j] + 400.0 + lat * dt
        hi_t = min(onsets[j] + 900.0, onsets[j + 1] if j + 1 < len(targets) else np.inf) + lat * dt
        idx = np.flatnonzero((nominal >= lo_t) & (nominal < hi_t))
        windows[j] = idx
    planted = {}
    outlier_idx = np.zeros(0, dtype=int)
    if cfg.outlier_rate > 0:
        chunks = []
        for j, idx in windows.items():
            expect = cfg.outlier_rate * idx.size
            count = int(math.floor(expect)) + int(rng.uniform() < expect - math.floor(expect))
            pick = np.sort(rng.choice(idx, size=count, replace=False)) if count else np.zeros(0, int)
            planted[j] = count
            chunks.append(pick)
        outlier_idx = np.concatenate(chunks) if chunks else outlier_idx
    out_ang = rng.uniform(0, 2 * np.pi, outlier_idx.size)
    out_mag = cfg.outlier_amplitude_deg * rng.uniform(1.0, 2.0, outlier_idx.size)

    taps = cfg.filter_taps
    signals = {}
    need = set(cfg.eyes) | ({Eye.LEFT, Eye.RIGHT} if taps is not None and Eye.BINOCULAR in cfg.eyes else set())
    for eye in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR):
        if eye not in need or (eye is Eye.BINOCULAR and taps is not None):
            continue
        x, y = ideal(eye)
        x, y = cfg.bias_for(eye)(x, y)
        x, y = cfg.crosstalk_for(eye)(x, y)
        mad = cfg.noise_for(eye)
        if mad > 0:
            if cfg.noise_law == "laplace":
                b = mad / LN2
                x = x + rng.laplace(0.0, b, n_total)
                y = y + rng.laplace(0.0, b, n_total)
            else:
                sd = mad / PHI_INV_075
                x = x + rng.normal(0.0, sd, n_total)
                y = y + rng.normal(0.0, sd, n_total)
        signals[eye] = [x, y]
    if taps is not None and Eye.BINOCULAR in cfg.eyes:
        vx = 0.5 * (signals[Eye.LEFT][0] + signals[Eye.RIGHT][0])
        vy = 0.5 * (signals[Eye.LEFT][1] + signals[Eye.RIGHT][1])
        signals[Eye.BINOCULAR] = [fir_filter(taps, vx), fir_filter(taps, vy)]
    for eye in signals:
        if outlier_idx.size:
            signals[eye][0][outlier_idx] += out_mag * np.cos(out_ang)
            signals[eye][1][outlier_idx] += out_mag * np.sin(out_ang)

    keep = np.ones(n_total, bool)
    if cfg.drop_rate > 0:
        keep[1:] = rng.uniform(size=n_total - 1) >= cfg.drop_rate
    channels = {}
    for eye in cfg.eyes:
        x, y = signals[eye]
        valid = np.ones(n_total, bool)
        if cfg.invalid_rate > 0:
            valid = rng.uniform(size=n_total) >= cfg.invalid_rate
        x = np.where(valid, x, np.nan)
        y = np.where(valid, y, np.nan)
        channels[eye] = GazeChannel(eye, t[keep], x[keep], y[keep], valid[keep])

    rec = GazeRecording(cfg.subject_id, Device.parse(cfg.device), cfg.rate_hz, channels, targets,
                        cfg.ipd_mm, calib_steps)
    gt = GroundTruth(
        config=cfg, latency_samples=lat, calib_steps=calib_steps, targets=targets,
        noise_mad_deg={e: cfg.noise_for(e) for e in cfg.eyes},
        planted_outliers=planted,
        window_sizes={j: int(idx.size) for j, idx in windows.items()},
        filter_taps=taps, isi_sd_ms=cfg.isi_jitter_sd_ms,
        n_dropped=int(n_total - np.count_nonzero(keep)))
    return rec, gt


def _expected_eye(gt: GroundTruth, eye: Eye) -> dict:
    cfg = gt.config
    task = gt.targets[gt.calib_steps:]
    tg = [correct_target_for_eye(s, eye, cfg.ipd_mm) if eye.monocular else s for s in task]
    tx = np.array([s.x_deg for s in tg])
    ty = np.array([s.y_deg for s in tg])
    if eye is Eye.BINOCULAR and gt.filter_taps is not None:
        # a unity-gain low-pass leaves fixation positions unchanged; version of the eyes
        lx, ly = _distorted(cfg, Eye.LEFT, task)
        rx, ry = _distorted(cfg, Eye.RIGHT, task)
        gx, gy = 0.5 * (lx + rx), 0.5 * (ly + ry)
        mad = None
    else:
        gx, gy = _distorted(cfg, eye, task)
        mad = cfg.noise_for(eye)
    dx, dy = gx - tx, gy - ty
    out = {
        "accuracy": {"H": float(np.mean(np.abs(dx))), "V": float(np.mean(np.abs(dy))),
                     "C": float(np.mean(np.hypot(dx, dy)))},
        "precision": None if mad is None else {"H": mad, "V": mad, "C": math.hypot(mad, mad)},
    }
    lin = {}
    for dim, g, tt in (("H", gx, tx), ("V", gy, ty)):
        fit = statkit.ols(g, np.column_stack([np.ones_like(tt), tt]))
        lin[dim] = {"slope": float(fit.coefficients[1]), "intercept": float(fit.coefficients[0])}
    out["linearity"] = lin
    ct = cfg.crosstalk_for(eye)
    out["crosstalk"] = {"H": {"linear": ct.h_lin, "quadratic": ct.h_quad},
                        "V": {"linear": ct.v_lin, "quadratic": ct.v_quad}}
    return out


def _distorted(cfg, eye, steps):
    tg = [correct_target_for_eye(s, eye, cfg.ipd_mm) if eye.monocular else s for s in steps]
    x = np.array([s.x_deg for s in tg])
    y = np.array([s.y_deg for s in tg])
    x, y = cfg.bias_for(eye)(x, y)
    return cfg.crosstalk_for(eye)(x, y)


def ground_truth_report(gt: GroundTruth) -> dict:
    """Noise-free expected metric values implied by the planted quantities.

    Accuracy and linearity come from pushing the generated task targets
    through the planted bias and crosstalk; precision from the noise scale;
    the -3 dB point from the binocular filter taps.
    """
    cfg = gt.config
    eyes = {e.value: _expected_eye(gt, e) for e in cfg.eyes}
    filt = None
    if gt.filter_taps is not None:
        freq, db = response_db(gt.filter_taps, cfg.rate_hz, 8192)
        f3, att = minus3db_point(freq, db)
        filt = {"minus3db_hz": f3, "attenuated": att}
    n_win = sum(gt.window_sizes.values())
    return {
        "latency_samples": gt.latency_samples,
        "isi_sd_ms": gt.isi_sd_ms,
        "eyes": eyes,
        "filter": filt,
        "outlier_rate_pct": 100.0 * sum(gt.planted_outliers.values()) / n_win if n_win and gt.planted_outliers else 0.0,
    }


def write_corpus(out_dir, configs, time_unit: str = "ns") -> list[Path]:
    """Generate each config into ``out_dir/<subject_id>/`` with a ground-truth sidecar."""
    from .ingest import save_recording

    out = Path(out_dir)
    paths = []
    for cfg in configs:
        rec, gt = generate(cfg)
        d = out / cfg.subject_id
        manifest = save_recording(rec, d, time_unit=time_unit)
        (d / "ground_truth.json").write_text(json.dumps(gt.to_dict(), indent=2, sort_keys=True) + "\n")
        paths.append(manifest)
    return paths
