"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py --points 2000 --steps 8 --repeat 3
"""
import argparse
import time

import numpy as np

from saddlepress import kernels
from saddlepress.core import orbit_segment
from saddlepress.systems import make_system


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def max_difference(x, y):
    # index sets must match exactly; window sums differ only by summation order
    if isinstance(x, tuple):
        return max(float(np.max(np.abs(u - v))) for u, v in zip(x, y))
    return 0.0 if np.array_equal(x, y) else float("inf")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--points", type=int, default=2000, help="trajectories for the separated-set kernel")
    ap.add_argument("--steps", type=int, default=8, help="trajectory length")
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--orbits", type=int, default=256, help="cycles for the window kernel")
    ap.add_argument("--orbit-length", type=int, default=64)
    ap.add_argument("--window", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    cat = make_system("cat_map")
    traj = orbit_segment(cat, rng.random((args.points, 2)), args.steps)
    periodic = np.ones(2, dtype=np.uint8)
    steps = rng.normal(size=(args.orbits, args.orbit_length))

    backends = ["python"]
    try:
        kernels._pick("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled backend not built; timing python only")

    print(f"{'kernel':<24}{'backend':<10}{'seconds':>12}")
    results = {}
    for name, call in (("greedy_separated", lambda b: kernels.greedy_separated(traj, periodic, args.eps, b)),
                       ("cyclic_window_extrema", lambda b: kernels.cyclic_window_extrema(steps, args.window, b))):
        for b in backends:
            dt, out = best_of(lambda: call(b), args.repeat)
            results[name, b] = (dt, out)
            print(f"{name:<24}{b:<10}{dt:>12.4f}")
        if len(backends) == 2:
            a, p = results[name, "cython"], results[name, "python"]
            diff = max_difference(a[1], p[1])
            print(f"{'':<24}{'speedup':<10}{p[0] / a[0]:>11.1f}x  max output difference: {diff:.1e}")


if __name__ == "__main__":
    main()
