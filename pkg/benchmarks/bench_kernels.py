"""Compare the compiled and pure-numpy forest kernels.

Usage: python benchmarks/bench_kernels.py [--rows N] [--width W] [--repeat R]

Each backend trains the same forests on the same synthetic one-hot data; the
script checks that serialised models are byte-identical and prints the median
wall time per backend and the speed-up.
"""
import argparse
import statistics
import time

import numpy as np

from ppmupdate import forest


def synthetic(rows, width, seed=0):
    rng = np.random.default_rng(seed)
    X = (rng.random((rows, width)) < 0.2).astype(np.float64)
    X[:, 0] = rng.random(rows)
    y = (X[:, 0] > 0.5) ^ (X[:, 1] > 0) ^ (rng.random(rows) < 0.1)
    return X, y


def timed(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--width", type=int, default=120)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not forest.has_compiled():
        print("compiled extension not available; nothing to compare")
        return 1
    X, y = synthetic(args.rows, args.width)
    jobs = {
        "build_tree (batch, 20 trees)": lambda b: forest.train_batch(
            (X, y), forest.BatchHyperparameters(n_trees=20, max_depth=10), 1,
            backend=b, n_threads=1),
        "hoeffding_learn (incremental, 10 trees)": lambda b: forest.train_incremental_initial(
            (X, y), forest.IncHyperparameters(n_trees=10, grace_period=100), 1,
            backend=b, n_threads=1),
    }
    print(f"rows={args.rows} width={args.width} repeat={args.repeat}")
    print(f"{'kernel':42s} {'compiled s':>11s} {'python s':>10s} {'speed-up':>9s} identical")
    for name, job in jobs.items():
        tc, mc = timed(lambda: job("compiled"), args.repeat)
        tp, mp = timed(lambda: job("python"), args.repeat)
        same = forest.serialize(mc) == forest.serialize(mp)
        print(f"{name:42s} {tc:11.3f} {tp:10.3f} {tp / tc:8.1f}x {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
