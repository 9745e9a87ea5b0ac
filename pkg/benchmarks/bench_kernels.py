"""Time the numba and numpy flavours of each hot kernel on realistic inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Numba timings exclude the first (compiling) call. Each pair is also checked
for agreement before it is timed.
"""

import argparse
import time

import numpy as np

from retina_grade import _accel, kernels
from retina_grade.cascade import PipelineConfig, prepare_image
from retina_grade.features import ring_index_map
from retina_grade.synthgen import SynthSpec, generate
from retina_grade.wavelet import combined_detail, make_kernel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def flat(result):
    parts = result if isinstance(result, (tuple, list)) else (result,)
    return np.concatenate([np.ravel(p).astype(np.float64) for p in parts])


def cases():
    img, _ = generate(SynthSpec(grade=2, side=256, seed=1))
    square = prepare_image(img, PipelineConfig())
    k = make_kernel(3)
    padded = np.ascontiguousarray(np.pad(square, ((0, 0), (2, 2)), mode="symmetric"))
    detail = np.ascontiguousarray(combined_detail(square, k).values)
    idx = ring_index_map(128, 128, 20)
    thresholds = np.arange(1.0, 41.0)
    bits = np.ascontiguousarray(detail > 10.0)
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 0.5, (200, 20))
    T = np.eye(2)[rng.integers(0, 2, 200)]
    p0 = [rng.uniform(-0.5, 0.5, (10, 20)), np.zeros(10), rng.uniform(-0.5, 0.5, (2, 10)), np.zeros(2)]

    def train(fn):
        p = [a.copy() for a in p0]
        fn(X, T, *p, 0.5, 2000)
        return p

    return {
        "analysis_rows (256x262, n=3)": (lambda f: f(padded, k.lowpass, k.highpass), "analysis_rows"),
        "label_components (128x128)": (lambda f: np.sort(f(bits, True)[1]), "label_components"),
        "ring_histogram (128x128)": (lambda f: f(bits, idx, 20), "ring_histogram"),
        "threshold_stack (40 thresholds)": (lambda f: f(detail, thresholds, idx, 20, 10, True), "threshold_stack"),
        "train_gd (200x20, 2000 epochs)": (train, "train_gd"),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy flavour can run")
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (call, base) in cases().items():
        f_np = getattr(kernels, f"{base}_numpy")
        t_np = best_of(lambda: call(f_np), args.repeat)
        if _accel.HAVE_NUMBA:
            f_nb = getattr(kernels, f"{base}_numba")
            a, b = flat(call(f_np)), flat(call(f_nb))
            if a.shape != b.shape or not np.allclose(a, b, atol=1e-9):
                raise SystemExit(f"{name}: numba and numpy disagree")
            t_nb = best_of(lambda: call(f_nb), args.repeat)
            print(f"{name:34s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:7.1f}x")
        else:
            print(f"{name:34s} {1e3 * t_np:10.2f} {'-':>10s}")


if __name__ == "__main__":
    main()
