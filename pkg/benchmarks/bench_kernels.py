"""Time the numba and numpy variants of each hot kernel.

Usage::

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 7]

Each kernel is called once before timing so numba compilation is excluded.
Results are checked for agreement before the timings are reported, and an
end-to-end Monte Carlo study is timed under both settings of
``NNRI_DISABLE_NUMBA`` in subprocesses.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nnri import _kernels as k


def make_inputs(n, rng):
    x = np.sort(rng.uniform(1, 1e5, n))
    targets = rng.uniform(1, 1e5, n)
    index = rng.integers(-1, n, n)
    w = rng.uniform(1, 10, n)
    values = rng.lognormal(5, 1, size=(n, 5))
    labels = rng.integers(0, 4, n)
    factors = np.array([0.3, 0.2, 0.1, 0.0])
    scale = np.array([1.01, 1.02, 1.05, 1.1])
    return {
        "nearest_sorted": (x, targets),
        "scatter_add": (index, w, n),
        "stratum_sum_squares": (values, labels, 4),
        "jackknife_sum_squares": (values, w, labels, factors, scale),
    }


def bench(n, repeat):
    rng = np.random.default_rng(0)
    print(f"kernel timings, n = {n}, best of {repeat} (ms)")
    print(f"{'kernel':<24}{'numpy':>10}{'numba':>10}{'speedup':>10}")
    for name, args in make_inputs(n, rng).items():
        f_np = getattr(k, f"{name}_numpy")
        f_nb = getattr(k, f"{name}_numba")
        a, b = f_np(*args), f_nb(*args)
        for u, v in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(u, v, rtol=1e-9)
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat)) * 1e3
        print(f"{name:<24}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>9.1f}x")


STUDY = (
    "import time; from nnri.simulation import StudyConfig, run_study;"
    "cfg = StudyConfig(replicates=50, methods=('NAIVE', 'PARAM1', 'PARAM2'), seed=1);"
    "run_study(StudyConfig(replicates=2, methods=('PARAM1',)));"
    "t = time.perf_counter(); run_study(cfg); print(time.perf_counter() - t)"
)


def bench_study():
    print("\nend-to-end study, 50 replicates, parametric methods (s)")
    for flag in ("0", "1"):
        env = dict(os.environ, NNRI_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", STUDY], env=env, capture_output=True,
                             text=True, check=True)
        label = "numpy" if flag == "1" else "numba"
        print(f"{label:<10}{float(out.stdout.strip()):>8.2f}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--no-study", action="store_true", help="skip the end-to-end timing")
    args = p.parse_args()
    bench(args.n, args.repeat)
    if not args.no_study:
        bench_study()


if __name__ == "__main__":
    main()
