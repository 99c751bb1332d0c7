import numpy as np
import pytest

from gazeqc import metrics, preprocess, synth
from gazeqc.core import Eye, GazeChannel
from gazeqc.errors import NoUsableBins, RankDeficient
from gazeqc.recalibration import CalibrationKind, CalibrationMap, apply_calibration, fit_calibration, select_stable_bins

from conftest import make_segment

GRID = synth.calibration_grid()


def _calib_segments(gaze_of, n=250, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    segs = []
    for i, (tx, ty) in enumerate(GRID):
        gx, gy = gaze_of(tx, ty)
        x = np.full(n, gx) + (rng.normal(0, noise, n) if noise else 0.0)
        y = np.full(n, gy) + (rng.normal(0, noise, n) if noise else 0.0)
        segs.append(make_segment(x, y, target=(tx, ty), index=i))
    return segs


def _applied_error(cmap, segs):
    worst = 0.0
    for s in segs:
        x, y = cmap(s.x, s.y)
        worst = max(worst, float(np.max(np.hypot(x - s.target.x_deg, y - s.target.y_deg))))
    return worst


def test_grid_has_thirteen_points_with_corners():
    assert len(GRID) == 13
    assert (-15.0, 10.0) in [tuple(p) for p in GRID]
    assert (15.0, -10.0) in [tuple(p) for p in GRID]


def test_zero_variance_bin_ranked_first():
    rng = np.random.default_rng(0)
    x, y = rng.normal(0, 0.2, 80), rng.normal(0, 0.2, 80)
    x[40:60] = 0.3
    y[40:60] = -0.1
    bins = select_stable_bins([make_segment(x, y)], 20, 3)
    assert bins[0].bin == 2 and bins[0].iqr_radial == 0.0
    assert len(bins) == 3


def test_quiet_bins_selected():
    rng = np.random.default_rng(1)
    x, y = rng.normal(0, 0.5, 250), rng.normal(0, 0.5, 250)
    quiet = [1, 6, 10]
    for b in quiet:
        x[b * 20:(b + 1) * 20] = rng.normal(0, 0.01, 20)
        y[b * 20:(b + 1) * 20] = rng.normal(0, 0.01, 20)
    bins = select_stable_bins([make_segment(x, y)], 20, 3)
    # exhaustive oracle over the 12 full bins
    rad = [np.hypot(*[np.subtract(*np.percentile(v[b * 20:(b + 1) * 20], [75, 25])) for v in (x, y)]) for b in range(12)]
    assert sorted(b.bin for b in bins) == sorted(np.argsort(rad, kind="stable")[:3].tolist()) == quiet
    assert all(b.stop - b.start == 20 for b in bins)


def test_bin_with_invalid_sample_excluded():
    x = np.zeros(80)
    valid = np.ones(80, bool)
    valid[5] = False
    x[20:] = np.random.default_rng(2).normal(0, 0.3, 60)
    bins = select_stable_bins([make_segment(np.where(valid, x, np.nan), np.zeros(80), valid=valid)], 20, 3)
    assert 0 not in [b.bin for b in bins]
    assert len(bins) == 3


def test_few_bins_warn_and_none_raise_when_strict():
    with pytest.warns(RuntimeWarning):
        bins = select_stable_bins([make_segment(np.zeros(45), np.zeros(45))], 20, 3)
    assert [b.bin for b in bins] == [0, 1]
    empty = make_segment(np.full(30, np.nan), np.full(30, np.nan), valid=np.zeros(30, bool))
    assert select_stable_bins([empty], 20, 3) == []
    with pytest.raises(NoUsableBins):
        select_stable_bins([empty], 20, 3, strict=True)


def test_ties_keep_earlier_bin():
    bins = select_stable_bins([make_segment(np.zeros(100), np.zeros(100))], 20, 3)
    assert [b.bin for b in bins] == [0, 1, 2]


def test_identity_fit():
    bins = select_stable_bins(_calib_segments(lambda x, y: (x, y)), 20, 3)
    assert len(bins) == 39
    for kind in CalibrationKind:
        cmap = fit_calibration(bins, kind)
        ident = CalibrationMap.identity(kind)
        assert np.allclose(cmap.weights_x, ident.weights_x, atol=1e-9)
        assert np.allclose(cmap.weights_y, ident.weights_y, atol=1e-9)


def test_usc1_inverts_affine_distortion():
    segs = _calib_segments(lambda x, y: (1.1 * x + 0.05 * y + 0.3, 0.95 * y - 0.02 * x - 0.1))
    cmap = fit_calibration(select_stable_bins(segs, 20, 3), "usc1")
    assert _applied_error(cmap, segs) < 1e-6


def test_usc1_corrects_pure_crosstalk():
    segs = _calib_segments(lambda x, y: (x + 0.04 * y, y))
    cmap = fit_calibration(select_stable_bins(segs, 20, 3), CalibrationKind.USC1)
    assert _applied_error(cmap, segs) < 1e-6


def test_usc2_recovers_quadratic_map():
    # gaze whose mapping back to the target is x_t = g + 0.002 g^2
    def gaze(tx, ty):
        return (-1 + np.sqrt(1 + 0.008 * tx)) / 0.004, ty
    segs = _calib_segments(gaze)
    bins = select_stable_bins(segs, 20, 3)
    usc2 = fit_calibration(bins, "usc2")
    usc1 = fit_calibration(bins, "usc1")
    assert usc2.weights_x == pytest.approx([0.002, 0, 1, 0, 0], abs=1e-9)
    assert _applied_error(usc2, segs) < 1e-6
    assert _applied_error(usc1, segs) > 1e-3


def test_fit_minimises_rss_against_normal_equations():
    segs = _calib_segments(lambda x, y: (1.02 * x + 0.2, y - 0.01 * x * x), noise=0.05, seed=4)
    bins = select_stable_bins(segs, 20, 3)
    gx = np.concatenate([b.x for b in bins])
    gy = np.concatenate([b.y for b in bins])
    tx = np.concatenate([np.full(20, b.target.x_deg) for b in bins])
    F = np.column_stack([gx * gx, gy * gy, gx, gy, np.ones_like(gx)])
    ref = np.linalg.solve(F.T @ F, F.T @ tx)
    cmap = fit_calibration(bins, "usc2")
    assert np.allclose(cmap.weights_x, ref, atol=1e-9)


def test_too_few_targets():
    segs = _calib_segments(lambda x, y: (x, y))[:4]
    bins = select_stable_bins(segs, 20, 3)
    fit_calibration(bins, "usc1")
    with pytest.raises(RankDeficient):
        fit_calibration(bins, "usc2")
    with pytest.raises(RankDeficient):
        fit_calibration(bins[:6], "usc1")


def test_apply_examples():
    ch = GazeChannel(Eye.BINOCULAR, [0, 4, 8], [1.0, np.nan, -2.0], [3.0, np.nan, 0.5], [1, 0, 1])
    assert apply_calibration(ch, CalibrationMap.identity("usc1")) == ch
    assert apply_calibration(ch, CalibrationMap.identity("usc2")) == ch
    out = apply_calibration(ch, CalibrationMap("usc1", [2, 0, 0], [0, 2, 0]))
    assert (out.x[0], out.y[0]) == (2.0, 6.0)
    assert not out.valid[1] and np.isnan(out.x[1])


def test_map_serialisation():
    cmap = CalibrationMap("usc2", [0.1, 0.2, 0.9, 0.0, 0.3], [0.0, -0.1, 0.05, 1.1, -0.2])
    assert CalibrationMap.from_json(cmap.to_json()) == cmap
    assert set(cmap.to_dict()["x"]) == {"A", "B", "C", "D", "E"}
    with pytest.raises(ValueError):
        CalibrationMap("usc1", [1, 0], [0, 1, 0])


def test_planted_distortion_improves_accuracy():
    bias = synth.Distortion(x0=0.6, xx=1.04, xy=0.02, y0=-0.4, yy=0.97)
    rec, gt = synth.generate(synth.SynthConfig(seed=8, bias={"B": bias}, eyes=("B",)))
    shift = preprocess.estimate_latency(rec.channel("B"), rec.target, 200, rec.nominal_rate_hz)

    def acc(channel):
        segs = preprocess.screen_segments(preprocess.segment_fixations(
            rec, "B", shift, channel=channel, start_step=rec.calib_steps))
        return metrics.aggregate([metrics.spatial_accuracy(s) for s in segs]).theta_c

    cal = preprocess.segment_fixations(rec, "B", shift, stop_step=rec.calib_steps)
    cmap = fit_calibration(select_stable_bins(cal, 20, 3), "usc1")
    before, after = acc(rec.channel("B")), acc(apply_calibration(rec.channel("B"), cmap))
    assert after < 0.5 * before
