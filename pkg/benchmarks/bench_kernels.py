"""Time the compiled and numpy BSM kernels on identical inputs.

Run with ``python benchmarks/bench_kernels.py [--rows N] [--repeat R]``.
"""

import argparse
import timeit

import numpy as np

from mdiqkd import _kernels_py

try:
    from mdiqkd import _kernels as _compiled
except ImportError:
    _compiled = None


def _inputs(rows, seed=0):
    rng = np.random.default_rng(seed)
    shape = (rows, 2)
    a = np.sqrt(rng.uniform(0, 1e-2, shape)) * np.exp(1j * rng.uniform(0, 2 * np.pi, shape))
    b = np.sqrt(rng.uniform(0, 1e-2, shape)) * np.exp(1j * rng.uniform(0, 2 * np.pi, shape))
    return a, b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[16, 256, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = {"python": _kernels_py.bsm_probabilities}
    if _compiled is None:
        print("compiled extension not built; timing the numpy kernel only")
    else:
        impls["cython"] = _compiled.bsm_probabilities
    overlap, q = 0.968, 1 - 3e-8
    print(f"{'rows':>6} " + " ".join(f"{name:>14}" for name in impls) + "   speedup   max|diff|")
    for rows in args.rows:
        a, b = _inputs(rows)
        times, outs = {}, {}
        for name, fn in impls.items():
            outs[name] = fn(a, b, overlap, q)
            number = max(1, 2000 // rows)
            best = min(timeit.repeat(lambda: fn(a, b, overlap, q), number=number, repeat=args.repeat))
            times[name] = best / number
        line = f"{rows:>6} " + " ".join(f"{times[n] * 1e6:>11.1f} us" for n in impls)
        if "cython" in impls:
            diff = np.max(np.abs(outs["cython"] - outs["python"]))
            line += f"   {times['python'] / times['cython']:>6.1f}x   {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
