"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--sizes 200 400 800] [--alpha 1.5] [--repeat 3]

For each grid size the script times the pairwise sector-kernel table and the
full corrected matrix build with each backend, and reports the largest
difference between the two pairwise tables.  The numba timings exclude the
one-off JIT compilation, which is triggered by a warm-up call.
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from choquard import _accel, _kernels, riesz
from choquard.grid import make_grid


def _timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _set_backend(name: str) -> None:
    os.environ["CHOQUARD_DISABLE_NUMBA"] = "0" if name == "numba" else "1"


def run(sizes, alpha, L, repeat):
    os.environ.pop("CHOQUARD_CACHE_DIR", None)
    backends = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]
    if "numba" in backends:
        _set_backend("numba")
        _kernels.pairwise_kernels(3, alpha, L, np.linspace(0.1, 1.0, 8))
    print(f"alpha = {alpha}, sectors 0..{L}, best of {repeat}")
    print(f"{'n':>6} {'backend':>8} {'pairwise [s]':>13} {'build [s]':>10} {'max rel diff':>13}")
    for n in sizes:
        g = make_grid(n, 20.0)
        tables = {}
        for b in backends:
            _set_backend(b)
            t_pair, tables[b] = _timed(lambda: _kernels.pairwise_kernels(3, alpha, L, g.nodes), repeat)

            def build():
                riesz.clear_cache()
                return riesz.build_kernels(g, alpha, tuple(range(L + 1)))

            t_build, _ = _timed(build, repeat)
            diff = ""
            if b != backends[0]:
                ref = tables[backends[0]]
                diff = f"{np.max(np.abs(tables[b] - ref)) / np.max(np.abs(ref)):.1e}"
            print(f"{n:>6} {b:>8} {t_pair:>13.3f} {t_build:>10.3f} {diff:>13}")
    os.environ.pop("CHOQUARD_DISABLE_NUMBA", None)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 400, 800])
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--sectors", type=int, default=2, help="highest sector ℓ")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    run(args.sizes, args.alpha, args.sectors, args.repeat)


if __name__ == "__main__":
    main()
