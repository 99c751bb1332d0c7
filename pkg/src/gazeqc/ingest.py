"""Recording files, manifests and report serialization.

Gaze CSV (UTF-8, comma separated, header row required)::

    t_ns,lx,ly,lv,rx,ry,rv,bx,by,bv

The time column is ``t_ns`` (integer nanoseconds) or ``t_ms`` (real
milliseconds) as declared by the manifest; per-eye column triples are
present only for the manifest's channels.  ``*v`` columns are 0/1 validity
flags and a NaN or empty position forces the sample invalid.

Target CSV::

    onset_ms,x_deg,y_deg,depth_mm

``depth_mm`` may be omitted (1000 mm).  Manifests are TOML (or JSON) files
whose relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (DEFAULT_DEPTH_MM, DEFAULT_IPD_MM, Device, Eye, GazeChannel, GazeRecording,
                   TargetStep, apply_static_offset)
from .errors import ChannelLengthMismatch, NonMonotonicTimestamps, ParseError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "RecordingManifest",
    "load_manifest",
    "load_recording",
    "save_recording",
    "read_gaze_csv",
    "read_target_csv",
    "write_gaze_csv",
    "write_target_csv",
    "save_report",
    "load_report",
    "atomic_write",
]

EYE_PREFIX = {Eye.LEFT: "l", Eye.RIGHT: "r", Eye.BINOCULAR: "b"}


@dataclass(frozen=True)
class RecordingManifest:
    path: Path
    subject_id: str
    gaze_file: Path
    target_file: Path
    device: Device = Device.OTHER
    nominal_rate_hz: float = 250.0
    ipd_mm: float = DEFAULT_IPD_MM
    channels: tuple = (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR)
    time_unit: str = "ns"
    offsets: dict = field(default_factory=dict)
    calib_steps: int = 0
    spectral_segments: tuple | None = None


def _read_mapping(path: Path) -> dict:
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(raw.decode("utf-8"))
    return tomllib.loads(raw.decode("utf-8"))


def load_manifest(path) -> RecordingManifest:
    """Parse a manifest file.  A directory argument means ``<dir>/manifest.toml``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.toml"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    d = _read_mapping(path)
    base = path.parent
    try:
        unit = d.get("time_unit", "ns")
        if unit not in ("ns", "ms"):
            raise ValueError(f"time_unit must be 'ns' or 'ms', got {unit!r}")
        channels = tuple(Eye.parse(c) for c in d.get("channels", ["L", "R", "B"]))
        if not channels:
            raise ValueError("manifest lists no channels")
        if Eye.VERSION in channels:
            raise ValueError("the version channel is derived and cannot be loaded")
        offsets = {Eye.parse(k): (float(v[0]), float(v[1])) for k, v in d.get("offsets", {}).items()}
        segs = d.get("spectral", {}).get("segments")
        return RecordingManifest(
            path=path,
            subject_id=str(d.get("subject_id", path.parent.name)),
            gaze_file=base / d["gaze_file"],
            target_file=base / d["target_file"],
            device=Device.parse(d.get("device", "Other")),
            nominal_rate_hz=float(d.get("nominal_rate_hz", 250.0)),
            ipd_mm=float(d.get("ipd_mm", DEFAULT_IPD_MM)),
            channels=channels,
            time_unit=unit,
            offsets=offsets,
            calib_steps=int(d.get("calib_steps", 0)),
            spectral_segments=None if segs is None else tuple((int(a), int(b)) for a, b in segs),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing manifest field {exc.args[0]!r}") from None


def _float(text, line, col):
    s = text.strip()
    if s == "" or s.lower() == "nan":
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise ParseError(line, col, f"not a number: {text!r}") from None


def read_gaze_csv(source, channels, time_unit: str = "ns"):
    """Parse gaze rows into ``(t_ms, {eye: (x, y, valid)})``."""
    text = source.read_text(encoding="utf-8") if isinstance(source, Path) else source
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(1, None, "missing header row") from None
    tcol = "t_ns" if time_unit == "ns" else "t_ms"
    if tcol not in header:
        raise ParseError(1, tcol, f"header lacks time column {tcol!r}")
    wanted = [tcol]
    for eye in channels:
        p = EYE_PREFIX[eye]
        wanted += [p + "x", p + "y", p + "v"]
    for name in wanted:
        if name not in header:
            raise ParseError(1, name, "column missing from header")
    pos = {name: header.index(name) for name in wanted}
    t = []
    cols = {name: [] for name in wanted[1:]}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(lineno, None, f"expected {len(header)} fields, got {len(row)}")
        raw_t = row[pos[tcol]].strip()
        if time_unit == "ns":
            try:
                t.append(int(raw_t) / 1e6)
            except ValueError:
                raise ParseError(lineno, tcol, f"not an integer nanosecond timestamp: {raw_t!r}") from None
        else:
            val = _float(raw_t, lineno, tcol)
            if not math.isfinite(val):
                raise ParseError(lineno, tcol, "timestamp must be finite")
            t.append(val)
        for name in wanted[1:]:
            cell = row[pos[name]]
            if name.endswith("v"):
                flag = cell.strip()
                if flag not in ("0", "1"):
                    raise ParseError(lineno, name, f"validity flag must be 0 or 1, got {cell!r}")
                cols[name].append(flag == "1")
            else:
                cols[name].append(_float(cell, lineno, name))
    t_ms = np.array(t, dtype=float)
    bad = np.flatnonzero(np.diff(t_ms) <= 0)
    if bad.size:
        raise NonMonotonicTimestamps(int(bad[0]) + 1)
    out = {}
    for eye in channels:
        p = EYE_PREFIX[eye]
        out[eye] = (np.array(cols[p + "x"]), np.array(cols[p + "y"]), np.array(cols[p + "v"], dtype=bool))
    return t_ms, out


def read_target_csv(source):
    text = source.read_text(encoding="utf-8") if isinstance(source, Path) else source
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(1, None, "missing header row") from None
    for name in ("onset_ms", "x_deg", "y_deg"):
        if name not in header:
            raise ParseError(1, name, "column missing from header")
    has_depth = "depth_mm" in header
    steps = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(lineno, None, f"expected {len(header)} fields, got {len(row)}")
        vals = {}
        for name in ("onset_ms", "x_deg", "y_deg") + (("depth_mm",) if has_depth else ()):
            v = _float(row[header.index(name)], lineno, name)
            if not math.isfinite(v):
                raise ParseError(lineno, name, "value must be finite")
            vals[name] = v
        steps.append(TargetStep(vals["onset_ms"], vals["x_deg"], vals["y_deg"],
                                vals.get("depth_mm", DEFAULT_DEPTH_MM)))
    onsets = [s.onset_ms for s in steps]
    for i in range(1, len(onsets)):
        if onsets[i] <= onsets[i - 1]:
            raise ParseError(i + 2, "onset_ms", "target onsets must be strictly increasing")
    return tuple(steps)


def load_recording(manifest) -> GazeRecording:
    """Load the recording a manifest describes, applying its static offsets."""
    if not isinstance(manifest, RecordingManifest):
        manifest = load_manifest(manifest)
    for p in (manifest.gaze_file, manifest.target_file):
        if not p.exists():
            raise FileNotFoundError(f"file not found: {p}")
    t_ms, cols = read_gaze_csv(manifest.gaze_file, manifest.channels, manifest.time_unit)
    channels = {}
    for eye, (x, y, v) in cols.items():
        if not (len(x) == len(y) == len(v) == len(t_ms)):
            raise ChannelLengthMismatch(f"channel {eye.value} length differs from timestamps")
        ch = GazeChannel(eye, t_ms, x, y, v)
        dx, dy = manifest.offsets.get(eye, (0.0, 0.0))
        channels[eye] = apply_static_offset(ch, dx, dy)
    target = read_target_csv(manifest.target_file)
    return GazeRecording(manifest.subject_id, manifest.device, manifest.nominal_rate_hz,
                         channels, target, manifest.ipd_mm, manifest.calib_steps)


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else repr(float(v))


def write_gaze_csv(recording: GazeRecording, time_unit: str = "ms") -> str:
    eyes = [e for e in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR) if e in recording.channels]
    header = ["t_ns" if time_unit == "ns" else "t_ms"]
    for e in eyes:
        p = EYE_PREFIX[e]
        header += [p + "x", p + "y", p + "v"]
    lines = [",".join(header)]
    t = recording.t_ms
    if time_unit == "ns":
        tcol = [str(int(v)) for v in np.rint(t * 1e6).astype(np.int64)]
    else:
        tcol = [repr(float(v)) for v in t]
    chans = [recording.channels[e] for e in eyes]
    for i in range(len(t)):
        row = [tcol[i]]
        for ch in chans:
            if ch.valid[i]:
                row += [_fmt(ch.x[i]), _fmt(ch.y[i]), "1"]
            else:
                row += ["nan", "nan", "0"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_target_csv(steps) -> str:
    lines = ["onset_ms,x_deg,y_deg,depth_mm"]
    for s in steps:
        lines.append(",".join(repr(float(v)) for v in (s.onset_ms, s.x_deg, s.y_deg, s.depth_mm)))
    return "\n".join(lines) + "\n"


def atomic_write(path, data) -> None:
    """Write via a temporary sibling file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _toml_value(v):
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def save_recording(recording: GazeRecording, directory, time_unit: str = "ms",
                   offsets: dict | None = None) -> Path:
    """Write gaze and target CSVs plus ``manifest.toml``; returns the manifest path.

    Saved positions already include any static offsets, so the manifest
    written here declares none unless ``offsets`` is given.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    atomic_write(d / "gaze.csv", write_gaze_csv(recording, time_unit))
    atomic_write(d / "target.csv", write_target_csv(recording.target))
    eyes = [e.value for e in (Eye.LEFT, Eye.RIGHT, Eye.BINOCULAR) if e in recording.channels]
    lines = [
        f"subject_id = {_toml_value(recording.subject_id)}",
        f"device = {_toml_value(recording.device.value)}",
        f"nominal_rate_hz = {_toml_value(float(recording.nominal_rate_hz))}",
        f"ipd_mm = {_toml_value(float(recording.ipd_mm))}",
        'gaze_file = "gaze.csv"',
        'target_file = "target.csv"',
        f"time_unit = {_toml_value(time_unit)}",
        f"channels = {_toml_value(eyes)}",
        f"calib_steps = {int(recording.calib_steps)}",
    ]
    if offsets:
        lines.append("")
        lines.append("[offsets]")
        for eye, (dx, dy) in offsets.items():
            lines.append(f"{Eye.parse(eye).value} = [{float(dx)!r}, {float(dy)!r}]")
    path = d / "manifest.toml"
    atomic_write(path, "\n".join(lines) + "\n")
    return path


def save_report(report, format: str = "json") -> bytes:
    """Serialize a :class:`~gazeqc.report.QualityReport` deterministically."""
    from .report import report_to_csv

    if format == "json":
        return (json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n").encode("utf-8")
    if format == "csv":
        return report_to_csv(report).encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def load_report(data):
    """Parse a JSON report (bytes, text or path)."""
    from .report import QualityReport

    if isinstance(data, Path):
        data = data.read_bytes()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return QualityReport.from_dict(json.loads(data))
