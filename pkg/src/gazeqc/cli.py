"""Command-line front end.

Every subcommand accepts ``--config FILE.toml``; keys in the file's table
named after the subcommand (or top-level keys) set defaults and explicit
flags override them.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, ingest, pipeline, synth
from .errors import (ChannelLengthMismatch, ConfigInvalid, GazeQCError, InsufficientData, NonMonotonicTimestamps,
                     ParseError)
from .recalibration import CalibrationKind, select_stable_bins
from .report import QualityReport

log = logging.getLogger("gazeqc")

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_USAGE = 2
EXIT_INSUFFICIENT = 3
EXIT_IO = 4

EXIT_HELP = """exit codes:
  0  success
  1  finished, but the analysis emitted warnings
  2  usage or configuration error (bad flag, invalid config, missing input file)
  3  insufficient data (too few valid samples, fixations or segments)
  4  I/O error or malformed input file

environment:
  GAZEQC_LOG  log level (DEBUG, INFO, WARNING, ERROR); default WARNING
"""


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------
# helpers

def _setup_logging():
    level = os.environ.get("GAZEQC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="gazeqc: %(levelname)s: %(message)s")


def _load_config(path, section: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = ingest._read_mapping(p)
    except ValueError as exc:
        raise ConfigInvalid(f"{p}: {exc}") from None
    out = {k: v for k, v in data.items() if not isinstance(v, dict)}
    out.update(data.get(section, {}))
    return out


def _merged(args, section: str, keys) -> dict:
    """Defaults from the config file, overridden by flags the user actually set."""
    cfg = _load_config(args.config, section)
    unknown = set(cfg) - set(keys)
    if unknown:
        raise ConfigInvalid(f"unknown {section} settings: {', '.join(sorted(unknown))}")
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _csv_list(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def _expand_manifests(paths) -> list[Path]:
    """Manifest files, recording directories, or corpus directories of recordings."""
    out = []
    for raw in paths:
        p = Path(raw)
        if not p.exists():
            raise FileNotFoundError(f"input not found: {p}")
        if p.is_file():
            out.append(p)
        elif (p / "manifest.toml").exists():
            out.append(p / "manifest.toml")
        else:
            found = sorted(p.glob("*/manifest.toml"))
            if not found:
                raise FileNotFoundError(f"no manifest.toml under {p}")
            out.extend(found)
    return out


def _calibration_modes(mode) -> tuple:
    if mode in (None, "none"):
        return ()
    if mode == "both":
        return ("usc1", "usc2")
    modes = tuple(_csv_list(mode)) if isinstance(mode, str) else tuple(mode)
    for m in modes:
        CalibrationKind(m)
    return modes


HANDLED = (GazeQCError, OSError, ValueError, UsageError)


def _exit_for(exc) -> int:
    if isinstance(exc, (UsageError, ConfigInvalid, FileNotFoundError)):
        return EXIT_USAGE
    if isinstance(exc, (ParseError, NonMonotonicTimestamps, ChannelLengthMismatch, OSError)):
        return EXIT_IO
    if isinstance(exc, GazeQCError):
        return EXIT_INSUFFICIENT
    # malformed manifests and out-of-range settings
    return EXIT_USAGE


def _run_pool(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _format_table(rows) -> str:
    lines = [f"{'eye':<4}{'cal':<6}{'metric':<17}{'dim':<4}{'n':>4}  mean ± SD"]
    for r in rows:
        lines.append(f"{r['eye']:<4}{r['calibration']:<6}{r['metric']:<17}{r['dimension']:<4}{r['n']:>4}"
                     f"  {r['mean']:.4f} ± {r['sd']:.4f}")
    return "\n".join(lines) + "\n"


def _rows_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c, "")
            if isinstance(v, float):
                v = repr(v) if np.isfinite(v) else ""
            cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


SUMMARY_COLUMNS = ("eye", "calibration", "metric", "dimension", "n", "mean", "sd")


# ----------------------------------------------------------------------
# assess

ASSESS_KEYS = ("eyes", "calibration", "discard_ms", "use_ms", "max_shift", "abs_limit_deg", "bin_size",
               "bins_per_fixation", "drop_ms", "short_ms", "aggregate", "formats", "out", "jobs")


def _assess_config(opts) -> pipeline.AssessConfig:
    kw = {}
    for k in ("discard_ms", "use_ms", "max_shift", "abs_limit_deg", "bin_size", "bins_per_fixation",
              "drop_ms", "short_ms", "aggregate"):
        if k in opts:
            kw[k] = opts[k]
    if "eyes" in opts:
        kw["eyes"] = tuple(_csv_list(opts["eyes"]) if isinstance(opts["eyes"], str) else opts["eyes"])
    kw["calibration"] = _calibration_modes(opts.get("calibration"))
    try:
        return pipeline.AssessConfig(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from None


def _assess_one(job):
    """Worker: returns a plain, picklable outcome for one manifest."""
    path, cfg, stamp = job
    try:
        rec = ingest.load_recording(path)
        report = pipeline.assess_recording(rec, cfg)
        report.stamp = stamp
        return {"path": str(path), "ok": True, "report": report.to_dict(),
                "warn": bool(report.warnings or any(c.warnings for c in report.channels))}
    except HANDLED as exc:  # reported per recording; the batch continues
        return {"path": str(path), "ok": False, "error": f"{type(exc).__name__}: {exc}", "code": _exit_for(exc)}


def cmd_assess(args) -> int:
    opts = _merged(args, "assess", ASSESS_KEYS)
    cfg = _assess_config(opts)
    formats = _csv_list(opts.get("formats", "json,csv")) if isinstance(opts.get("formats", ""), str) \
        else list(opts["formats"])
    if not set(formats) <= {"json", "csv"}:
        raise ConfigInvalid(f"unknown report format in {formats}")
    out = Path(opts.get("out", "gazeqc-out"))
    manifests = _expand_manifests(args.inputs)
    stamp = args.stamp
    results = _run_pool(_assess_one, [(m, cfg, stamp) for m in manifests], int(opts.get("jobs", 1)))

    reports, diagnostics, code = [], [], EXIT_OK
    for res in results:
        if not res["ok"]:
            diagnostics.append({"input": res["path"], "error": res["error"]})
            log.error("%s: %s", res["path"], res["error"])
            code = max(code, res["code"])
            continue
        rep = QualityReport.from_dict(res["report"])
        reports.append(rep)
        name = rep.subject_id
        if "json" in formats:
            ingest.atomic_write(out / f"{name}.json", ingest.save_report(rep, "json"))
        if "csv" in formats:
            ingest.atomic_write(out / f"{name}.csv", ingest.save_report(rep, "csv"))
        if res["warn"]:
            code = max(code, EXIT_WARNINGS)
    if reports:
        rows = pipeline.summarize_reports(reports)
        ingest.atomic_write(out / "summary.csv", _rows_csv(rows, SUMMARY_COLUMNS))
        ingest.atomic_write(out / "summary.txt", _format_table(rows))
        if not args.quiet:
            sys.stdout.write(_format_table(rows))
    if diagnostics:
        ingest.atomic_write(out / "diagnostics.json", json.dumps(diagnostics, indent=2) + "\n")
    return code


# ----------------------------------------------------------------------
# recal

RECAL_KEYS = ("kind", "eyes", "discard_ms", "use_ms", "max_shift", "bin_size", "bins_per_fixation", "out")


def cmd_recal(args) -> int:
    opts = _merged(args, "recal", RECAL_KEYS)
    kinds = _calibration_modes(opts.get("kind", "usc1")) or ("usc1",)
    cfg = _assess_config({k: v for k, v in opts.items() if k in ("eyes", "discard_ms", "use_ms", "max_shift",
                                                                  "bin_size", "bins_per_fixation")})
    out = Path(opts.get("out", "gazeqc-recal"))
    from . import preprocess

    code = EXIT_OK
    for manifest in _expand_manifests(args.inputs):
        rec = ingest.load_recording(manifest)
        maps = {}
        for kind in kinds:
            cal = rec
            maps[kind] = {}
            for eye in cfg.eyes:
                if eye not in rec.channels:
                    continue
                ch = rec.channel(eye)
                shift = preprocess.estimate_latency(ch, rec.target, cfg.max_shift, rec.nominal_rate_hz)
                segs = preprocess.segment_fixations(rec, eye, shift, cfg.discard_ms, cfg.use_ms,
                                                    stop_step=rec.calib_steps)
                if len(select_stable_bins(segs, cfg.bin_size, cfg.bins_per_fixation)) < \
                        len(segs) * cfg.bins_per_fixation:
                    code = max(code, EXIT_WARNINGS)
                cmap, cal_ch = pipeline.calibrate_channel(rec, eye, shift, CalibrationKind(kind), cfg)
                maps[kind][eye.value] = cmap.to_dict()
                cal = cal.replace_channel(cal_ch)
            ingest.save_recording(cal, out / rec.subject_id / kind)
        ingest.atomic_write(out / rec.subject_id / "calibration.json",
                            json.dumps(maps, indent=2, sort_keys=True) + "\n")
    return code


# ----------------------------------------------------------------------
# spectrum

SPECTRUM_KEYS = ("dimension", "per_recording", "max_shift", "window_filter", "out")


def cmd_spectrum(args) -> int:
    opts = _merged(args, "spectrum", SPECTRUM_KEYS)
    out = Path(opts.pop("out", "gazeqc-spectrum"))
    try:
        cfg = pipeline.SpectrumConfig(**opts)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None
    manifests = [ingest.load_manifest(m) for m in _expand_manifests(args.inputs)]
    recs = [ingest.load_recording(m) for m in manifests]
    overrides = {m.subject_id: list(m.spectral_segments) for m in manifests if m.spectral_segments}
    spectra, filt = pipeline.spectrum_corpus(recs, cfg, overrides)
    ingest.atomic_write(out / "spectrum.csv", spectra.to_csv())
    ingest.atomic_write(out / "filter.csv", filt.to_csv())
    summary = {"minus3db_hz": filt.minus3db_hz, "attenuated": filt.attenuated, "n_pairs": filt.n_pairs,
               "n_recordings": len(recs), "dimension": cfg.dimension,
               "impulse": [float(v) for v in filt.impulse]}
    ingest.atomic_write(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    if not args.quiet:
        state = "" if filt.attenuated else " (response never falls 3 dB; Nyquist reported)"
        print(f"-3 dB point: {filt.minus3db_hz:.3f} Hz from {filt.n_pairs} segment pairs{state}")
    return EXIT_OK if filt.attenuated else EXIT_WARNINGS


# ----------------------------------------------------------------------
# synth

SYNTH_FLAGS = ("seed", "rate_hz", "n_saccades", "latency_ms", "noise_law", "binocular_cutoff_hz",
               "isi_jitter_sd_ms", "outlier_rate", "invalid_rate", "drop_rate", "x_range", "y_range", "device")


def cmd_synth(args) -> int:
    raw = _load_config(args.config, "synth")
    n = int(args.n_subjects if args.n_subjects is not None else raw.pop("n_subjects", 1))
    raw.pop("n_subjects", None)
    unit = args.time_unit or raw.pop("time_unit", "ns")
    raw.pop("time_unit", None)
    out = Path(args.out or raw.pop("out", "gazeqc-synth"))
    raw.pop("out", None)
    for k in SYNTH_FLAGS:
        v = getattr(args, k, None)
        if v is not None:
            raw[k] = v
    if args.noise_mad_deg is not None:
        raw["noise_mad_deg"] = args.noise_mad_deg
    if n < 1:
        raise ConfigInvalid("n_subjects must be >= 1")
    base = synth.SynthConfig.from_mapping(raw)
    if n == 1:
        configs = [base]
    else:
        prefix = raw.get("subject_id", "synth")
        configs = [synth.SynthConfig.from_mapping(dict(raw, seed=base.seed + i, subject_id=f"{prefix}-{i:03d}"))
                   for i in range(n)]
    paths = synth.write_corpus(out, configs, time_unit=unit)
    if not args.quiet:
        print(f"wrote {len(paths)} recording(s) under {out}")
    return EXIT_OK


# ----------------------------------------------------------------------
# compare / report

def _load_reports(paths) -> list[QualityReport]:
    files = []
    for raw in paths:
        p = Path(raw)
        if not p.exists():
            raise FileNotFoundError(f"report not found: {p}")
        if p.is_dir():
            files.extend(f for f in sorted(p.glob("*.json")) if f.name not in ("diagnostics.json", "summary.json"))
        else:
            files.append(p)
    reports = []
    for f in files:
        try:
            reports.append(ingest.load_report(f))
        except (ValueError, KeyError) as exc:
            raise ConfigInvalid(f"{f}: not a quality report ({exc})") from None
    if not reports:
        raise InsufficientData("no reports found")
    return reports


COMPARE_COLUMNS = ("eye", "calibration", "metric", "dimension", "statistic", "df", "p", "p_holm",
                   "estimate", "ci_lo", "ci_hi", "degenerate")


def cmd_compare(args) -> int:
    a = _load_reports(args.a)
    b = _load_reports(args.b)
    res = pipeline.compare_reports(a, b, transform=not args.raw)
    out = Path(args.out or "gazeqc-compare")
    ingest.atomic_write(out / "compare.json", json.dumps(res, indent=2) + "\n")
    ingest.atomic_write(out / "welch.csv", _rows_csv(res["welch"], COMPARE_COLUMNS))
    ingest.atomic_write(out / "slopes_vs_1.csv", _rows_csv(res["slopes_vs_1"], ("group",) + COMPARE_COLUMNS))
    if not args.quiet:
        for r in res["welch"]:
            print(f"{r['eye']:<3}{r['calibration']:<6}{r['metric']:<17}{r['dimension']:<3}"
                  f"p={r['p']:.4g} p_holm={r['p_holm']:.4g}")
    return EXIT_OK if res["welch"] else EXIT_INSUFFICIENT


def cmd_report(args) -> int:
    reports = _load_reports(args.inputs)
    if args.format == "csv":
        sys.stdout.write("".join(ingest.save_report(r, "csv").decode() if i == 0
                                 else ingest.save_report(r, "csv").decode().split("\n", 1)[1]
                                 for i, r in enumerate(reports)))
    elif args.format == "summary-csv":
        sys.stdout.write(_rows_csv(pipeline.summarize_reports(reports), SUMMARY_COLUMNS))
    else:
        sys.stdout.write(_format_table(pipeline.summarize_reports(reports)))
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazeqc", description="Eye-tracker data quality assessment.",
                                epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"gazeqc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML configuration file; flags override its values")
        sp.add_argument("--quiet", action="store_true", help="suppress stdout summaries")
        return sp

    def mk(name, help):
        return common(sub.add_parser(name, help=help, epilog=EXIT_HELP,
                                     formatter_class=argparse.RawDescriptionHelpFormatter))

    a = mk("assess", "compute quality metrics for recordings")
    a.add_argument("inputs", nargs="+", help="manifest files, recording directories or corpus directories")
    a.add_argument("--out", help="output directory (default gazeqc-out)")
    a.add_argument("--eyes", help="comma list of channels, e.g. L,R,B,V")
    a.add_argument("--calibration", help="none, usc1, usc2 or both")
    a.add_argument("--discard-ms", dest="discard_ms", type=float)
    a.add_argument("--use-ms", dest="use_ms", type=float)
    a.add_argument("--max-shift", dest="max_shift", type=int)
    a.add_argument("--abs-limit-deg", dest="abs_limit_deg", type=float)
    a.add_argument("--bin-size", dest="bin_size", type=int)
    a.add_argument("--bins-per-fixation", dest="bins_per_fixation", type=int)
    a.add_argument("--drop-ms", dest="drop_ms", type=float)
    a.add_argument("--short-ms", dest="short_ms", type=float)
    a.add_argument("--aggregate", choices=("mean", "median"))
    a.add_argument("--formats", help="comma list of json,csv")
    a.add_argument("--jobs", type=int, help="worker processes")
    a.add_argument("--stamp", help="label stored in every report (reports carry none by default)")
    a.set_defaults(func=cmd_assess)

    r = mk("recal", "fit recalibration maps on calibration prefixes and write calibrated recordings")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out")
    r.add_argument("--kind", help="usc1, usc2 or both")
    r.add_argument("--eyes")
    r.add_argument("--discard-ms", dest="discard_ms", type=float)
    r.add_argument("--use-ms", dest="use_ms", type=float)
    r.add_argument("--max-shift", dest="max_shift", type=int)
    r.add_argument("--bin-size", dest="bin_size", type=int)
    r.add_argument("--bins-per-fixation", dest="bins_per_fixation", type=int)
    r.set_defaults(func=cmd_recal)

    s = mk("spectrum", "average spectra and identify the version-to-binocular filter")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out")
    s.add_argument("--dimension", choices=("H", "V"))
    s.add_argument("--per-recording", dest="per_recording", type=int)
    s.add_argument("--max-shift", dest="max_shift", type=int)
    s.add_argument("--window-filter", dest="window_filter", action="store_const", const=True,
                   help="detrend and window before dividing spectra")
    s.set_defaults(func=cmd_spectrum)

    y = mk("synth", "generate a synthetic corpus with ground truth")
    y.add_argument("--out")
    y.add_argument("--n-subjects", dest="n_subjects", type=int)
    y.add_argument("--time-unit", dest="time_unit", choices=("ns", "ms"))
    y.add_argument("--seed", type=int)
    y.add_argument("--rate-hz", dest="rate_hz", type=float)
    y.add_argument("--n-saccades", dest="n_saccades", type=int)
    y.add_argument("--latency-ms", dest="latency_ms", type=float)
    y.add_argument("--noise-mad-deg", dest="noise_mad_deg", type=float)
    y.add_argument("--noise-law", dest="noise_law", choices=("laplace", "gaussian"))
    y.add_argument("--binocular-cutoff-hz", dest="binocular_cutoff_hz", type=float)
    y.add_argument("--isi-jitter-sd-ms", dest="isi_jitter_sd_ms", type=float)
    y.add_argument("--outlier-rate", dest="outlier_rate", type=float)
    y.add_argument("--invalid-rate", dest="invalid_rate", type=float)
    y.add_argument("--drop-rate", dest="drop_rate", type=float)
    y.add_argument("--x-range", dest="x_range", type=float)
    y.add_argument("--y-range", dest="y_range", type=float)
    y.add_argument("--device")
    y.set_defaults(func=cmd_synth)

    c = mk("compare", "Welch tests between two groups of reports, slopes against 1.0")
    c.add_argument("--a", nargs="+", required=True, help="reports (files or directories) of group A")
    c.add_argument("--b", nargs="+", required=True, help="reports of group B")
    c.add_argument("--out")
    c.add_argument("--raw", action="store_true", help="skip cube-root/logit transforms")
    c.set_defaults(func=cmd_compare)

    t = mk("report", "print or convert existing reports")
    t.add_argument("inputs", nargs="+")
    t.add_argument("--format", choices=("table", "csv", "summary-csv"), default="table")
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except HANDLED as exc:
        print(f"gazeqc: error: {exc}", file=sys.stderr)
        log.debug("details", exc_info=True)
        return _exit_for(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
