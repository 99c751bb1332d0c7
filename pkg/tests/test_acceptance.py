"""Acceptance criteria 1 to 10.

Each test records one PASS/FAIL line (shown in the terminal summary) and
then asserts at the stated tolerance.
"""
import math
import time

import numpy as np
import pytest

from gazeqc import kernels, metrics, pipeline, spectral, statkit, synth
from gazeqc.cli import main
from gazeqc.core import Eye, TargetStep, correct_target_for_eye
from gazeqc.ingest import load_recording, load_report
from gazeqc.preprocess import estimate_latency, remove_outliers
from gazeqc.recalibration import fit_calibration, select_stable_bins

from conftest import make_segment

SUITE_START = []
GAUSS_MAD = 0.6744897501960817


@pytest.fixture(scope="module", autouse=True)
def _suite_clock():
    SUITE_START.append(time.perf_counter())


def _best_time(fn, repeats=200):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_01_ipd_target_correction(criterion):
    left = correct_target_for_eye(TargetStep(0.0, -15.0, 0.0), Eye.LEFT, 62.0)
    right = correct_target_for_eye(TargetStep(0.0, 15.0, 0.0), Eye.LEFT, 62.0)
    elapsed = _best_time(lambda: correct_target_for_eye(TargetStep(0.0, 15.0, 0.0), Eye.LEFT, 62.0))
    ok = abs(left.x_deg + 13.33) <= 0.01 and abs(right.x_deg - 16.64) <= 0.01 and elapsed < 1e-3
    assert criterion(1, ok, f"left eye {left.x_deg:.4f} / {right.x_deg:.4f} deg, {elapsed * 1e6:.1f} us")


def test_criterion_02_latency_recovery(criterion):
    rng = np.random.default_rng(2)
    delays = np.concatenate([[1, 48, 200], rng.integers(1, 201, 97)])
    misses, slowest = [], 0.0
    for i, d in enumerate(delays):
        cfg = synth.SynthConfig(seed=9000 + i, latency_ms=4.0 * d, noise_law="gaussian",
                                noise_mad_deg=0.2 * GAUSS_MAD, n_saccades=12, eyes=("B",))
        rec, gt = synth.generate(cfg)
        t0 = time.perf_counter()
        est = estimate_latency(rec.channel("B"), rec.target, 200, rec.nominal_rate_hz)
        slowest = max(slowest, time.perf_counter() - t0)
        if est.shift_samples != gt.latency_samples or gt.latency_samples != d:
            misses.append((int(d), est.shift_samples))
    ok = not misses and slowest < 1.0
    assert criterion(2, ok, f"{len(delays) - len(misses)}/{len(delays)} exact, slowest {slowest * 1e3:.0f} ms, "
                            f"misses {misses[:5]}")


def test_criterion_03_mad_oracle(criterion):
    rec, gt = synth.generate(synth.SynthConfig(seed=303, noise_mad_deg={"B": 0.052}, eyes=("B",)))
    rep = pipeline.assess_recording(rec, pipeline.AssessConfig(eyes=("B",)))
    prec = rep.channel("B").precision
    fixations = rep.channel("B").n_fixations
    x = np.random.default_rng(3).normal(0.0, 0.1, 10_000)
    y = np.random.default_rng(4).normal(0.0, 0.1, 10_000)
    gauss = metrics.spatial_precision(make_segment(x, y))
    rel = [abs(prec.mad_h / 0.052 - 1), abs(prec.mad_v / 0.052 - 1)]
    grel = [abs(gauss.mad_h / (0.1 * GAUSS_MAD) - 1), abs(gauss.mad_v / (0.1 * GAUSS_MAD) - 1)]
    ok = fixations == 30 and max(rel) <= 0.10 and max(grel) <= 0.05
    assert criterion(3, ok, f"Laplace MAD H/V {prec.mad_h:.4f}/{prec.mad_v:.4f} over {fixations} fixations, "
                            f"Gaussian {gauss.mad_h:.5f}/{gauss.mad_v:.5f}")


def test_criterion_04_temporal_precision(criterion):
    cfg = synth.SynthConfig.clean(seed=404, n_saccades=330, eyes=("B",), isi_jitter_sd_ms=0.071)
    rec, _ = synth.generate(cfg)
    res = metrics.temporal_precision(rec.channel("B"))
    t = np.array([0.0, 4.0, 11.0, 11.03, 15.03, 19.03])
    flags = metrics.temporal_precision(t)
    edge = metrics.temporal_precision(np.array([0.0, 6.0, 6.04, 10.04]))
    ok = (res.n_isi >= 100_000 and abs(res.isi_sd_ms - 0.071) <= 0.005
          and flags.dropped == (2,) and flags.short == (3,) and edge.n_dropped == 0 and edge.n_short == 0)
    assert criterion(4, ok, f"ISI SD {res.isi_sd_ms:.4f} ms over {res.n_isi} intervals, "
                            f"dropped {flags.dropped} short {flags.short}")


REGIMES = {
    metrics.CrosstalkModel.INTERCEPT_ONLY: (1, 0, 0),
    metrics.CrosstalkModel.LINEAR_ONLY: (0, 1, 0),
    metrics.CrosstalkModel.QUADRATIC_ONLY: (0, 0, 1),
    metrics.CrosstalkModel.LINEAR_PLUS_QUADRATIC: (0, 1, 1),
}


def _brute_force_aic(offset, orth):
    n = offset.size
    designs = [np.ones((n, 1)), np.column_stack([np.ones(n), orth]), np.column_stack([np.ones(n), orth ** 2]),
               np.column_stack([np.ones(n), orth, orth ** 2])]
    scores = []
    for X in designs:
        beta = np.linalg.lstsq(X, offset, rcond=None)[0]
        rss = float(np.sum((offset - X @ beta) ** 2))
        scores.append(n * math.log(rss / n) + 2 * X.shape[1])
    return list(REGIMES)[int(np.argmin(scores))]


def test_criterion_05_crosstalk_selection(criterion):
    rng = np.random.default_rng(505)
    noise, n_fix, n_subjects = 0.1, 30, 200
    hits, disagreements = {}, 0
    for regime, (c0, c1, c2) in REGIMES.items():
        hit = 0
        for _ in range(n_subjects):
            orth = rng.uniform(-10.0, 10.0, n_fix)
            signs = rng.choice([-1.0, 1.0], 3)
            coef = 5 * noise * signs * np.array([c0, c1, c2])
            offset = coef[0] + coef[1] * orth + coef[2] * orth ** 2 + rng.normal(0.0, noise, n_fix)
            chosen, _, _ = metrics.select_crosstalk_model(offset, orth)
            disagreements += chosen != _brute_force_aic(offset, orth)
            hit += chosen == regime
        hits[regime.value] = hit / n_subjects
    ok = min(hits.values()) >= 0.95 and disagreements == 0
    rates = ", ".join(f"{k} {v:.1%}" for k, v in hits.items())
    assert criterion(5, ok, f"match rates {rates}; brute-force disagreements {disagreements}")


def _quadratic_gaze(tx, ty):
    # gaze whose map back to the target is t = g + 0.01 g^2 + 0.005 h^2 per axis
    gx = (-1 + math.sqrt(1 + 0.04 * tx)) / 0.02
    gy = (-1 + math.sqrt(1 + 0.04 * (ty - 0.005 * gx * gx))) / 0.02
    return gx, gy


def _quadratic_accuracy(rng):
    targets = [tuple(p) for p in synth.calibration_grid()]
    targets += [tuple(p) for p in np.column_stack([rng.uniform(-15, 15, 30), rng.uniform(-10, 10, 30)])]
    segs = []
    for i, (tx, ty) in enumerate(targets):
        gx, gy = _quadratic_gaze(tx, ty)
        segs.append(remove_outliers(make_segment(np.full(125, gx), np.full(125, gy), target=(tx, ty), index=i)))
    bins = select_stable_bins(segs[:13], 20, 3)
    out = {}
    for kind in ("usc1", "usc2"):
        cmap = fit_calibration(bins, kind)
        cal = []
        for s in segs:
            x, y = cmap(s.x, s.y)
            cal.append(make_segment(x, y, target=(s.target.x_deg, s.target.y_deg), index=s.index))
        out[kind] = metrics.aggregate([metrics.spatial_accuracy(remove_outliers(s)) for s in cal]).theta_c
    return out


def test_criterion_06_recalibration(criterion, bundled_corpus, tmp_path):
    affine = synth.Distortion(x0=0.4, xx=1.05, xy=0.03, y0=-0.25, yx=-0.02, yy=0.96)
    rec, _ = synth.generate(synth.SynthConfig.clean(seed=606, eyes=("B",), bias={"B": affine}))
    rep = pipeline.assess_recording(rec, pipeline.AssessConfig(eyes=("B",), calibration=("usc1",)))
    affine_acc = rep.channel("B", "usc1").accuracy.theta_c
    quad = _quadratic_accuracy(np.random.default_rng(6))

    out = tmp_path / "assess"
    assert main(["assess", str(bundled_corpus), "--eyes", "L,R", "--calibration", "usc1",
                 "--formats", "json", "--out", str(out), "--quiet"]) in (0, 1)
    gains = []
    for i in range(12):
        r = load_report(out / f"subj-{i:03d}.json")
        for eye in ("L", "R"):
            before = r.channel(eye).accuracy.theta_c
            gains.append((before - r.channel(eye, "usc1").accuracy.theta_c) / before)
    median_gain = float(np.median(gains))
    ok = affine_acc < 1e-6 and quad["usc2"] < 1e-6 and quad["usc1"] > 0.05 and median_gain >= 0.10
    assert criterion(6, ok, f"affine USC-1 {affine_acc:.2e} deg, quadratic USC-2 {quad['usc2']:.2e} / "
                            f"USC-1 {quad['usc1']:.3f} deg, median noisy gain {median_gain:.1%}")


def _load_bundled(path):
    return [load_recording(p) for p in sorted(path.iterdir()) if p.is_dir()]


def test_criterion_07_filter_identification(criterion, bundled_corpus):
    _, est = pipeline.spectrum_corpus(_load_bundled(bundled_corpus))

    ma9 = synth.moving_average_taps(9)
    recs = [synth.generate(synth.SynthConfig(seed=700 + i, subject_id=f"ma-{i:02d}", binocular_taps=tuple(ma9)))[0]
            for i in range(12)]
    _, ma_est = pipeline.spectrum_corpus(recs)
    freq, true_db = spectral.response_db(ma9, 250.0)
    f3, _ = spectral.minus3db_point(freq, true_db)
    passband = freq <= f3
    err_db = float(np.max(np.abs(ma_est.response_db[passband] - true_db[passband])))
    ok = est.n_pairs == 36 and abs(est.minus3db_hz - 11.0) <= 1.0 and ma_est.n_pairs == 36 and err_db <= 0.5
    assert criterion(7, ok, f"11 Hz corpus: -3 dB at {est.minus3db_hz:.2f} Hz from {est.n_pairs} pairs; "
                            f"MA9 passband error {err_db:.2f} dB (-3 dB {ma_est.minus3db_hz:.2f} vs {f3:.2f} Hz)")


def test_criterion_08_linearity_inference(criterion):
    z = np.random.default_rng(8).normal(size=12)
    z = (z - z.mean()) / z.std(ddof=1)
    slopes = 0.965 + 0.047 * z
    res = statkit.one_sample_t(slopes, 1.0)
    ok = abs(res.statistic + 2.58) <= 0.05 and abs(res.p_two_tailed - 0.025) <= 0.005 and res.df == 11
    assert criterion(8, ok, f"t({res.df:g}) = {res.statistic:.3f}, p = {res.p_two_tailed:.4f}")


def _holm_oracle(p):
    m = p.size
    out = np.empty(m)
    for i in range(m):
        # direct definition: max over every p_(j) <= p_(i) in sorted order
        order = np.argsort(p, kind="stable")
        rank = int(np.flatnonzero(order == i)[0])
        out[i] = min(1.0, max((m - k) * p[order[k]] for k in range(rank + 1)))
    return out


def test_criterion_09_numerical_kernels(criterion):
    rng = np.random.default_rng(909)
    v = rng.normal(size=256)
    n = np.arange(256)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / 256) @ v
    fft_err = max(float(np.max(np.abs(b.fft_radix2(v) - dft)) / np.max(np.abs(dft)))
                  for b in (kernels.pure, kernels.backend))

    pts = rng.normal(size=(25, 2)) * [3.0, 1.0]
    pts[:3] += 8.0
    gx, gy = statkit.geometric_median(pts)

    def objective(px, py):
        return np.sum(np.hypot(pts[:, 0, None, None] - px, pts[:, 1, None, None] - py), axis=0)

    xs = np.linspace(pts[:, 0].min(), pts[:, 0].max(), 200)
    ys = np.linspace(pts[:, 1].min(), pts[:, 1].max(), 200)
    grid_best = float(objective(*np.meshgrid(xs, ys)).min())
    gm_obj = float(objective(np.array([[gx]]), np.array([[gy]]))[0, 0])

    X = np.column_stack([np.ones(200), rng.normal(size=(200, 4))])
    fit = statkit.ols(X @ rng.normal(size=5) + rng.normal(size=200), X)
    ortho = float(np.max(np.abs(X.T @ fit.residuals)))

    holm_bad = 0
    for _ in range(1000):
        p = rng.uniform(0, 1, rng.integers(1, 15)) ** 2
        holm_bad += not np.allclose(statkit.holm_adjust(p), _holm_oracle(p), rtol=0, atol=1e-15)
    ok = fft_err <= 1e-9 and gm_obj <= grid_best and ortho <= 1e-8 and holm_bad == 0
    assert criterion(9, ok, f"FFT rel err {fft_err:.1e}, geometric median {gm_obj:.6f} vs grid {grid_best:.6f}, "
                            f"X'r {ortho:.1e}, Holm mismatches {holm_bad}/1000")


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(criterion, bundled_corpus, tmp_path):
    runs = {}
    for name, extra in (("first", []), ("second", []), ("jobs1", ["--jobs", "1"]), ("jobs8", ["--jobs", "8"])):
        out = tmp_path / name
        code = main(["assess", str(bundled_corpus), "--out", str(out), "--quiet", *extra])
        assert code in (0, 1)
        runs[name] = _tree(out)
    same_runs = runs["first"] == runs["second"]
    same_jobs = runs["jobs1"] == runs["jobs8"] == runs["first"]
    elapsed = time.perf_counter() - SUITE_START[0]
    ok = same_runs and same_jobs and len(runs["first"]) == 26 and elapsed < 60.0
    assert criterion(10, ok, f"repeat identical {same_runs}, jobs 1 vs 8 identical {same_jobs}, "
                             f"{len(runs['first'])} files, acceptance suite {elapsed:.1f} s")
