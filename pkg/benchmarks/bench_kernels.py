"""
Compare the compiled and pure-Python hot kernels.

    python3 benchmarks/bench_kernels.py --size 256 --repeat 20

Prints, per kernel, the best wall time for each available backend, the
speedup and the largest relative disagreement between the backends.
"""
import argparse
import math
import timeit

import numpy as np

from couette import kernels
from couette.spectral import make_grid


def _cases(n: int, rng: np.random.Generator):
    g = make_grid(n, n, 2 * math.pi)
    p = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    small = make_grid(32, 32, 2 * math.pi)
    small_c = rng.standard_normal(small.shape) + 1j * rng.standard_normal(small.shape)
    idx = np.arange(2 * n + 1)
    kmat = 2.0 ** -np.abs(np.subtract.outer(idx, idx).astype(float))
    return {
        "shear_factor": lambda m: m.shear_factor(g.alpha, g.eta, 0.3, 0.05, 1e-3),
        "packed_dot": lambda m: m.packed_dot(p, q),
        "oracle_rk4": lambda m: m.oracle_rk4(small_c, small.alpha, small.eta, 0.0, 5.0, 1e-2, 200),
        "schur_sums": lambda m: m.schur_sums(kmat),
    }


def _rel_diff(a, b) -> float:
    a = [np.asarray(x) for x in (a if isinstance(a, tuple) else (a,))]
    b = [np.asarray(x) for x in (b if isinstance(b, tuple) else (b,))]
    worst = 0.0
    for x, y in zip(a, b):
        scale = max(float(np.max(np.abs(y))), 1e-300)
        worst = max(worst, float(np.max(np.abs(x - y))) / scale)
    return worst


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="grid points per direction")
    ap.add_argument("--repeat", type=int, default=10, help="timing repetitions (best is reported)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    found = kernels.backends()
    cases = _cases(args.size, np.random.default_rng(args.seed))
    names = sorted(found)
    print(f"grid {args.size}x{args.size}; backends: {', '.join(names)}; default: {kernels.BACKEND}")
    print(f"{'kernel':<14}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speedup':>10}{'max rel diff':>14}")
    for kname, fn in cases.items():
        times, outs = {}, {}
        for n in names:
            mod = found[n]
            outs[n] = fn(mod)
            times[n] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        line = f"{kname:<14}" + "".join(f"{times[n]:>16.3f}" for n in names)
        if "cython" in found:
            line += f"{times['python'] / times['cython']:>10.2f}{_rel_diff(outs['cython'], outs['python']):>14.2e}"
        print(line)


if __name__ == "__main__":
    main()
