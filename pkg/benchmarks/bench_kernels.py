"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend and the speed-up.
"""
import argparse
import timeit

import numpy as np

from gazeqc import kernels, synth


def cases():
    rec, _ = synth.generate(synth.SynthConfig(seed=1, eyes=("B",)))
    ch = rec.channel("B")
    onsets = np.array([s.onset_ms for s in rec.target])
    tx = np.array([s.x_deg for s in rec.target])
    ty = np.array([s.y_deg for s in rec.target])
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(2000, 2))
    sig = rng.normal(size=256)
    return {
        f"latency_curve ({len(ch)} samples, 200 shifts)":
            lambda b: b.latency_curve(ch.t_ms, ch.x, ch.y, ch.valid, onsets, tx, ty, 4.0, 200),
        "weiszfeld (2000 points)": lambda b: b.weiszfeld(pts[:, 0], pts[:, 1]),
        "fft_radix2 (256 points)": lambda b: b.fft_radix2(sig),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": kernels.pure}
    if kernels.compiled is not None:
        backends["cython"] = kernels.compiled
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<46}" + "".join(f"{name:>12}" for name in backends) + f"{'speed-up':>10}")
    for label, fn in cases().items():
        times = {}
        for name, b in backends.items():
            timer = timeit.Timer(lambda: fn(b))
            number, _ = timer.autorange()
            times[name] = min(timer.repeat(args.repeat, number)) / number
        row = f"{label:<46}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times.values())
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
