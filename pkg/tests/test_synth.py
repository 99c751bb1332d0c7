import json
import math

import numpy as np
import pytest

from gazeqc import metrics, preprocess, spectral, synth
from gazeqc.core import Eye
from gazeqc.errors import ConfigInvalid
from gazeqc.ingest import load_manifest
from gazeqc.preprocess import LatencyEstimate


def _screened(rec, gt, eye):
    segs = preprocess.segment_fixations(rec, eye, LatencyEstimate.fixed(gt.latency_samples, 1000 / rec.nominal_rate_hz),
                                        start_step=gt.calib_steps)
    return preprocess.screen_segments(segs)


def test_clean_recording_is_exact(clean_recording):
    rec, gt = clean_recording
    for eye in ("L", "R", "B"):
        segs = _screened(rec, gt, eye)
        acc = metrics.aggregate([metrics.spatial_accuracy(s) for s in segs])
        pre = metrics.aggregate([metrics.spatial_precision(s) for s in segs])
        assert max(acc.theta_h, acc.theta_v, acc.theta_c) < 1e-9
        assert (pre.mad_h, pre.mad_v) == (0.0, 0.0) and pre.mad_c < 1e-9


def test_laplace_mad_recovered():
    rec, gt = synth.generate(synth.SynthConfig(seed=4, noise_mad_deg={"B": 0.052}, eyes=("B",)))
    segs = _screened(rec, gt, "B")
    assert len(segs) == 30
    pre = metrics.aggregate([metrics.spatial_precision(s) for s in segs])
    assert pre.mad_h == pytest.approx(0.052, rel=0.10)
    assert pre.mad_v == pytest.approx(0.052, rel=0.10)


def test_gaussian_noise_law():
    rec, gt = synth.generate(synth.SynthConfig(seed=4, noise_mad_deg=0.1, noise_law="gaussian", eyes=("B",)))
    x = np.concatenate([s.x[s.window] - s.target.x_deg for s in _screened(rec, gt, "B")])
    assert np.median(np.abs(x - np.median(x))) == pytest.approx(0.1, rel=0.05)
    assert np.std(x) == pytest.approx(0.1 / 0.6744897501960817, rel=0.05)


def test_same_seed_is_bit_identical():
    cfg = synth.SynthConfig(seed=99, drop_rate=0.01, invalid_rate=0.01, outlier_rate=0.02)
    a, _ = synth.generate(cfg)
    b, _ = synth.generate(cfg)
    for eye in a.channels:
        ca, cb = a.channel(eye), b.channel(eye)
        for name in ("t_ms", "x", "y", "valid"):
            assert getattr(ca, name).tobytes() == getattr(cb, name).tobytes()
    assert a.target == b.target
    c, _ = synth.generate(synth.SynthConfig(seed=100))
    assert not np.array_equal(c.channel("B").t_ms[:100], a.channel("B").t_ms[:100])


@pytest.mark.parametrize("seed", range(5))
def test_target_rules(seed):
    rec, gt = synth.generate(synth.SynthConfig(seed=seed))
    steps = rec.target
    assert rec.calib_steps == 13 and len(steps) == 43
    calib = {(s.x_deg, s.y_deg) for s in steps[:13]}
    assert calib == {tuple(p) for p in synth.calibration_grid()}
    assert (-15.0, 10.0) in calib and (15.0, -10.0) in calib
    for a, b in zip(steps[12:], steps[13:]):
        assert math.hypot(b.x_deg - a.x_deg, b.y_deg - a.y_deg) >= 3.0
    for s in steps:
        assert abs(s.x_deg) <= 15 and abs(s.y_deg) <= 10
    durations = np.diff([s.onset_ms for s in steps])
    assert durations.min() >= 1000 - 4 and durations.max() <= 1500 + 4


def test_latency_and_jitter_ground_truth():
    rec, gt = synth.generate(synth.SynthConfig(seed=1))
    assert gt.latency_samples == 48
    est = preprocess.estimate_latency(rec.channel("B"), rec.target, 200, 250.0)
    assert est.shift_samples == 48


def test_ground_truth_zero_config(clean_recording):
    _, gt = clean_recording
    exp = synth.ground_truth_report(gt)
    for eye, e in exp["eyes"].items():
        assert all(abs(v) < 1e-12 for v in e["accuracy"].values())
        assert all(v == 0 for v in e["precision"].values())
        assert all(v == pytest.approx(1.0) for v in (e["linearity"]["H"]["slope"], e["linearity"]["V"]["slope"]))
        assert e["crosstalk"]["H"] == {"linear": 0.0, "quadratic": 0.0}
    assert exp["filter"] is None and exp["outlier_rate_pct"] == 0.0


def test_ground_truth_planted_slope():
    cfg = synth.SynthConfig(seed=2, bias={"R": {"xx": 0.976}}, ipd_mm=0.0)
    _, gt = synth.generate(cfg)
    assert synth.ground_truth_report(gt)["eyes"]["R"]["linearity"]["H"]["slope"] == pytest.approx(0.976, abs=1e-12)


def test_ground_truth_moving_average_filter():
    _, gt = synth.generate(synth.SynthConfig(seed=2, binocular_taps=tuple(synth.moving_average_taps(9))))
    f3 = synth.ground_truth_report(gt)["filter"]["minus3db_hz"]
    grid = np.linspace(1e-6, 125, 400001)
    w = np.pi * grid / 250.0
    analytic = grid[np.argmax(np.abs(np.sin(9 * w) / (9 * np.sin(w))) < 10 ** (-3 / 20))]
    assert f3 == pytest.approx(analytic, abs=0.05)


@pytest.mark.parametrize("cutoff", [9.0, 11.0, 30.0])
def test_lowpass_design_hits_cutoff(cutoff):
    taps = synth.lowpass_taps(cutoff, 250.0)
    assert taps.size == 21 and taps.sum() == pytest.approx(1.0)
    freq, db = spectral.response_db(taps, 250.0, 8192)
    assert spectral.minus3db_point(freq, db)[0] == pytest.approx(cutoff, abs=0.01)


def test_unreachable_cutoff_rejected():
    with pytest.raises(ConfigInvalid):
        synth.lowpass_taps(3.0, 250.0)
    with pytest.raises(ConfigInvalid):
        synth.SynthConfig(binocular_cutoff_hz=3.0)


def test_binocular_is_filtered_version():
    cfg = synth.SynthConfig(seed=3, binocular_cutoff_hz=11.0)
    rec, _ = synth.generate(cfg)
    v = rec.channel(Eye.VERSION)
    assert np.allclose(rec.channel("B").x, synth.fir_filter(cfg.filter_taps, v.x), atol=1e-12)


def test_drop_and_invalid_rates():
    rec, gt = synth.generate(synth.SynthConfig(seed=6, drop_rate=0.01, invalid_rate=0.02))
    t = metrics.temporal_precision(rec.channel("B"))
    assert t.n_dropped == pytest.approx(gt.n_dropped, abs=gt.n_dropped * 0.1 + 2)
    assert 0.01 < 1 - rec.channel("B").valid.mean() < 0.03


@pytest.mark.parametrize("bad", [dict(rate_hz=0), dict(x_range=-1), dict(fix_min_ms=2000),
                                 dict(drop_rate=1.0), dict(binocular_cutoff_hz=200.0), dict(eyes=("V",)),
                                 dict(noise_law="cauchy"), dict(min_step_deg=100.0)])
def test_invalid_config(bad):
    with pytest.raises(ConfigInvalid):
        synth.SynthConfig(**bad)


def test_from_mapping_round_trip():
    cfg = synth.SynthConfig(seed=5, bias={"B": {"x0": 0.2}}, crosstalk={"L": {"h_lin": 0.01}})
    again = synth.SynthConfig.from_mapping(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigInvalid):
        synth.SynthConfig.from_mapping({"sede": 1})


def test_write_corpus(tmp_path):
    cfgs = [synth.SynthConfig(seed=i, subject_id=f"s{i}") for i in range(2)]
    manifests = synth.write_corpus(tmp_path, cfgs)
    assert [m.parent.name for m in manifests] == ["s0", "s1"]
    gt = json.loads((tmp_path / "s0" / "ground_truth.json").read_text())
    assert gt["latency_samples"] == 48
    assert load_manifest(manifests[0]).subject_id == "s0"
