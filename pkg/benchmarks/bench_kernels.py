"""Timing comparison of the compiled and pure kernel backends.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends produce the same results (see tests/test_backends.py); this
script only reports wall time per kernel on representative workloads.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from fractalflow import rng
from fractalflow._kernels import common, get_backend, pure


def build_workloads():
    gen = rng.stream(123, "bench")
    enc = common.TrajectoryEncoding(
        types=np.array([common.TR_CIRCULAR, common.TR_PWLINEAR], dtype=np.int32),
        params=np.array([[0.0, 0.0, 0.3, 2.0, 0.0], [0] * 5], dtype=float),
        knot_offsets=np.array([0, 0, 3], dtype=np.int32),
        knot_times=np.array([0.0, 0.5, 1.0]),
        knot_points=np.array([[-0.3, 0.0], [0.1, 0.2], [0.4, -0.1]]),
    )
    field = common.KernelField(2, common.BG_ROTATION, np.array([0.5, 0.0, 0.0]),
                               enc, np.array([0.3, -0.2]))
    sectional = common.KernelDistance(mode=common.DIST_SECTIONAL,
                                      trajectories=enc, scan_step=1 / 1024,
                                      horizon=1.0)
    spacetime = common.KernelDistance(mode=common.DIST_SPACETIME,
                                      trajectories=enc, scan_step=1 / 1024,
                                      horizon=1.0)
    queries_t = gen.random(20_000)
    queries_x = gen.normal(size=(20_000, 2)) * 0.8
    cloud = gen.normal(size=(4_096, 2))
    grid_times = np.linspace(0.0, 1.0, 513)
    sections = np.stack([
        np.stack([[0.3 * np.cos(2 * s), 0.3 * np.sin(2 * s)], [s - 0.5, 0.1]])
        for s in grid_times
    ])
    x0 = gen.normal(size=(20_000, 2)) * 0.9
    out_times = np.linspace(0.0, 1.0, 9)
    sources = gen.normal(size=(3_000, 2))
    weights = gen.normal(size=3_000) * 0.01

    return {
        "min_dist (20k x 4k)": lambda b: b.min_dist(queries_x, cloud),
        "eval_field (20k)": lambda b: b.eval_field(field, queries_t, queries_x),
        "sectional dist (20k)": lambda b: b.eval_distance(sectional, queries_t, queries_x),
        "spacetime scan (20k)": lambda b: b.eval_distance(spacetime, queries_t, queries_x),
        "graph table scan (20k)": lambda b: b.graph_scan_dist(
            queries_t, queries_x, grid_times, sections),
        "biot_savart (3k x 3k)": lambda b: b.biot_savart(sources, sources, weights,
                                                         1e-4, True),
        "flow RK4 (20k, 8 frames)": lambda b: b.flow_integrate(
            field, sectional, x0, out_times, 1 / 128, 0.1, 1e-8, 1e-6),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; run `python3 setup.py build_ext --inplace`")
        return 1
    workloads = build_workloads()
    name_w = max(len(k) for k in workloads)
    print(f"{'kernel':<{name_w}}  {'compiled':>10}  {'pure':>10}  {'speedup':>8}")
    for name, fn in workloads.items():
        times = {}
        for label, backend in (("compiled", compiled), ("pure", pure)):
            fn(backend)  # warm-up
            best = min(
                _timed(fn, backend) for _ in range(args.repeat)
            )
            times[label] = best
        ratio = times["pure"] / times["compiled"]
        print(f"{name:<{name_w}}  {times['compiled']:>9.4f}s  {times['pure']:>9.4f}s  "
              f"{ratio:>7.1f}x")
    return 0


def _timed(fn, backend):
    start = time.perf_counter()
    fn(backend)
    return time.perf_counter() - start


if __name__ == "__main__":
    sys.exit(main())
