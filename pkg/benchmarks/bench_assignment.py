"""Benchmark the compiled assignment kernel against the pure-Python one.

The attack solves thousands of 16x16 assignments (patch alignment) and a
handful of NxN ones (image matching), so those are the sizes reported.

Run:  python benchmarks/bench_assignment.py [--sizes 16,64,100,200] [--reps 5]
"""

import argparse
import time

import numpy as np

from patchbreak import matching, rng


def bench_one(n, reps, gen):
    costs = [gen.standard_normal((n, n)) for _ in range(reps)]
    # warm both paths so timings exclude first-call overhead
    matching.solve_assignment(costs[0])
    matching.solve_assignment_python(costs[0])

    out = {}
    for name, solve in (("compiled" if matching.BACKEND == "compiled" else
                         "python(default)", matching.solve_assignment),
                        ("python", matching.solve_assignment_python)):
        t0 = time.perf_counter()
        for c in costs:
            solve(c)
        out[name] = (time.perf_counter() - t0) / reps
    for c in costs:
        a = matching.solve_assignment(c)
        b = matching.solve_assignment_python(c)
        if not np.array_equal(a.mapping, b.mapping):
            raise AssertionError(f"backends disagree at n={n}")
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="16,64,100,200")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"default backend: {matching.BACKEND}")
    gen = rng.stream(args.seed, "bench.assignment")
    header = False
    for n in (int(s) for s in args.sizes.split(",")):
        res = bench_one(n, args.reps, gen)
        names = list(res)
        if not header:
            print(f"{'n':>6} " + " ".join(f"{k:>18}" for k in names)
                  + f" {'speedup':>9}")
            header = True
        ratio = res[names[1]] / res[names[0]]
        print(f"{n:>6} " + " ".join(f"{res[k] * 1e3:>15.2f} ms" for k in names)
              + f" {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
