"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 64] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from nsfdecay import kernels
from nsfdecay import spectral as sp
from nsfdecay.linear import DimensionlessParams, LinearPropagator, symbol_matrix


def bench(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64, help="grid points per axis for the propagation benchmark")
    ap.add_argument("--matrices", type=int, default=20000, help="batch size for the matrix exponential")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not available; timing the fallback only")

    params = DimensionlessParams(1.0, 1.0, 0.5)
    rng = np.random.default_rng(0)
    mats = symbol_matrix(rng.uniform(0, 10, args.matrices), params) * 0.5
    grid = sp.GridSpec(3, args.n, 64.0)
    u = (rng.standard_normal((5,) + grid.shape) + 1j * rng.standard_normal((5,) + grid.shape))

    rows = []
    for b in backends:
        t_expm = bench(lambda: kernels.expm3(mats, backend=b), args.repeat)
        prop = LinearPropagator(grid, params, backend=b)
        prop.factors(0.5)
        t_prop = bench(lambda: prop.apply_array(u, 0.5), args.repeat)
        rows.append((b, t_expm, t_prop))

    print(f"{'backend':<8} {'expm3 x' + str(args.matrices):>16} {'propagate ' + str(args.n) + '^3':>16}")
    for b, te, tp in rows:
        print(f"{b:<8} {te * 1e3:13.2f} ms {tp * 1e3:13.2f} ms")
    if len(rows) == 2:
        print(f"speedup  {rows[0][1] / rows[1][1]:15.1f}x {rows[0][2] / rows[1][2]:15.1f}x")


if __name__ == "__main__":
    main()
