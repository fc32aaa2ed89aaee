"""Compare the numba and pure-numpy loop backends on (BN)-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--R 512]

Reports the best wall time of each backend per kernel and the largest
absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from recmix import _loops
from recmix.kernels import likelihood_table
from recmix.recursion import WeightSchedule, permutations_for
from recmix.simgen import gen, scenario


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--num-perms", type=int, default=100)
    ap.add_argument("--R", type=int, default=512, help="importance-sampling passes")
    args = ap.parse_args(argv)

    sc = scenario("BN", n=args.n)
    meas = sc.measure()
    d = gen(sc, 0, meas)
    table = likelihood_table(sc.model(), d.xs, meas)
    rows, offsets = table.rows, table.offsets
    f0 = sc.f0(meas).masses
    w = WeightSchedule().weights(args.n)
    perms = table.index[permutations_for(args.n, args.num_perms, 0)]
    rng = np.random.default_rng(0)
    orders = table.index[np.array([rng.permutation(args.n) for _ in range(args.R)])]
    unif = rng.random((args.R, args.n))
    base = rows @ f0

    cases = {
        "re_fold": lambda b: _loops.re_fold(rows, table.index, w, f0, backend=b)[0],
        "pare_fold": lambda b: _loops.pare_fold(rows, perms, w, f0, backend=b)[0],
        "sis_chunk": lambda b: _loops.sis_chunk(rows, offsets, base, f0, 1.0, orders, unif,
                                                backend=b)[2],
    }
    backends = ["numpy"] + (["numba"] if _loops.USE_NUMBA else [])
    print(f"{'kernel':10s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup  max|diff|")
    for name, run in cases.items():
        res = {b: best_of(lambda: run(b), args.repeat) for b in backends}
        line = f"{name:10s} " + " ".join(f"{res[b][0] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = float(np.abs(res["numpy"][1] - res["numba"][1]).max())
            line += f"   {res['numpy'][0] / res['numba'][0]:6.1f}x  {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
