#!/usr/bin/env python3
"""Timing comparison of the compiled field kernel vs the numpy fallback.

Both backends evaluate the same expression tree in the same order, so
their outputs must agree bit for bit; the script asserts that before
timing anything. Workload shape mirrors a map evaluation: one batch of
pixel points against a filament bundle.

    python3 benchmarks/bench_field_kernel.py --segments 96 --points 20000
"""

import argparse
import time

import numpy as np


def make_workload(n_segments, n_points, seed=0):
    rng = np.random.default_rng(seed)
    starts = rng.uniform(-1e-3, 1e-3, (n_segments, 3))
    ends = starts + rng.uniform(-5e-4, 5e-4, (n_segments, 3))
    cur_re = rng.normal(size=n_segments) * 0.05
    cur_im = rng.normal(size=n_segments) * 0.01
    points = rng.uniform(-1e-3, 1e-3, (n_points, 3))
    points[:, 2] = np.abs(points[:, 2]) + 1e-5  # stay off the wires
    return (np.ascontiguousarray(starts), np.ascontiguousarray(ends),
            np.ascontiguousarray(cur_re), np.ascontiguousarray(cur_im),
            np.ascontiguousarray(points))


def run(kernel, workload, repeats):
    starts, ends, cur_re, cur_im, points = workload
    out_re = np.zeros((points.shape[0], 3))
    out_im = np.zeros((points.shape[0], 3))
    best = float("inf")
    for _ in range(repeats):
        out_re[:] = 0.0
        out_im[:] = 0.0
        t0 = time.perf_counter()
        rc = kernel(starts, ends, cur_re, cur_im, points, 1e-9,
                    out_re, out_im)
        best = min(best, time.perf_counter() - t0)
        if rc >= 0:
            raise RuntimeError(f"kernel reported proximity code {rc}")
    return best, out_re.copy(), out_im.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--segments", type=int, default=96)
    parser.add_argument("--points", type=int, default=20000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    try:
        from nvscope._fieldkern import field_accumulate as compiled
    except ImportError:
        compiled = None
    from nvscope._fieldkern_py import field_accumulate as fallback

    workload = make_workload(args.segments, args.points)
    pairs = args.segments * args.points

    t_py, re_py, im_py = run(fallback, workload, args.repeats)
    print(f"workload: {args.segments} segments x {args.points} points "
          f"({pairs:.2e} pairs), best of {args.repeats}")
    print(f"numpy fallback : {t_py * 1e3:9.2f} ms "
          f"({pairs / t_py / 1e6:8.1f} Mpair/s)")

    if compiled is None:
        print("compiled kernel: not built (install without NVSCOPE_NO_EXT "
              "and with a C compiler)")
        return

    t_c, re_c, im_c = run(compiled, workload, args.repeats)
    print(f"compiled kernel: {t_c * 1e3:9.2f} ms "
          f"({pairs / t_c / 1e6:8.1f} Mpair/s)")
    print(f"speedup        : {t_py / t_c:9.2f}x")

    if np.array_equal(re_py, re_c) and np.array_equal(im_py, im_c):
        print("outputs        : bit-identical")
    else:
        raise SystemExit("outputs differ between backends")


if __name__ == "__main__":
    main()
