"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--cases 300] [--resamples 1000]

The package picks one backend at import time (``LLM_JURY_DISABLE_NUMBA=1``
forces numpy); this script imports both implementations directly so they
run on identical inputs in one process.  numba compile time is excluded by
a warm-up call and reported separately.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from llm_jury import kernels
from llm_jury.kernels import _numpy

try:
    from llm_jury.kernels import _numba
except ImportError:
    _numba = None


def make_inputs(n_cases: int, n_resamples: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    sizes = rng.integers(1, 3, n_cases)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(offsets[-1])
    ref = rng.integers(1, 6, n).astype(float)
    other = np.clip(ref - 0.5 + rng.normal(0, 0.8, n), 1, 5)
    return {
        "resample": (ref, other, offsets, np.arange(n, dtype=np.int64),
                     rng.integers(0, n_cases, (n_resamples, n_cases)).astype(np.int64)),
        "kendall": (rng.normal(size=2000), rng.normal(size=2000)),
        "pava": (rng.normal(size=5000).cumsum() + rng.normal(0, 5, 5000), np.ones(5000)),
        "kde": (np.linspace(0, 6, 256), other, 0.3),
    }


CASES = [
    ("resample offset", lambda m, a: m.resample_stat(*a["resample"], kernels.OFFSET)),
    ("resample spearman", lambda m, a: m.resample_stat(*a["resample"], kernels.SPEARMAN)),
    ("resample kappa", lambda m, a: m.resample_stat(*a["resample"], kernels.KAPPA)),
    ("kendall tau-b n=2000", lambda m, a: m.kendall_tau_b(*a["kendall"])),
    ("pava n=5000", lambda m, a: m.pava(*a["pava"])),
    ("kde 256 x n", lambda m, a: m.kde_eval(*a["kde"])),
]


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cases", type=int, default=300)
    ap.add_argument("--resamples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    inputs = make_inputs(args.cases, args.resamples, args.seed)
    print(f"active backend: {kernels.BACKEND}; {args.cases} cases, {args.resamples} resamples, "
          f"best of {args.repeat}")
    if _numba is None:
        print("numba is not installed; timing the numpy fallback only")
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'compile s':>11}")
    for name, call in CASES:
        t_np = best_of(lambda: call(_numpy, inputs), args.repeat)
        if _numba is None:
            print(f"{name:<24}{1e3 * t_np:>12.2f}")
            continue
        t0 = time.perf_counter()
        fast = call(_numba, inputs)
        compile_s = time.perf_counter() - t0
        slow = call(_numpy, inputs)
        if not np.allclose(fast, slow, rtol=1e-10, atol=1e-12, equal_nan=True):
            raise SystemExit(f"{name}: backends disagree")
        t_nb = best_of(lambda: call(_numba, inputs), args.repeat)
        print(f"{name:<24}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x{compile_s:>11.2f}")


if __name__ == "__main__":
    main()
