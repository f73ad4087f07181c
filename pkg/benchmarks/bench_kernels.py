"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``TWINMIX_DISABLE_NUMBA``. The script times a batch of
combined fits and homogeneity tests per backend, then checks both backends
produced the same log-likelihoods.

    python3 benchmarks/bench_kernels.py [--n 400] [--fits 40] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from twinmix import _accel
from twinmix.estimation import fit_combined
from twinmix.inference import lrt_homogeneity
from twinmix.model import BvnParams, sample_pairs

n, fits, repeat = map(int, sys.argv[1:4])
g = np.random.default_rng(0)
data = [(sample_pairs(g, BvnParams(0, 0, 0.9, 1), n), sample_pairs(g, BvnParams(0, 0.5, 0.3, 1), n))
        for _ in range(fits)]
t0 = time.perf_counter()
fit_combined(*data[0])
warm = time.perf_counter() - t0

def timed(fn):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = [fn(mz, dz) for mz, dz in data]
        best = min(best, time.perf_counter() - t)
    return best, out

t_fit, fit_out = timed(fit_combined)
t_lrt, lrt_out = timed(lrt_homogeneity)
print(json.dumps({
    "numba": _accel.NUMBA_ENABLED,
    "first_call_s": warm,
    "fit_ms": 1e3 * t_fit / fits,
    "lrt_ms": 1e3 * t_lrt / fits,
    "loglik": [f.loglik for f in fit_out],
    "stat": [r.statistic for r in lrt_out],
}))
"""


def run_backend(disable, n, fits, repeat):
    env = dict(os.environ, TWINMIX_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(n), str(fits), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="pairs per stratum")
    ap.add_argument("--fits", type=int, default=40, help="datasets per timing")
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats (best is kept)")
    args = ap.parse_args(argv)

    fast = run_backend(False, args.n, args.fits, args.repeat)
    slow = run_backend(True, args.n, args.fits, args.repeat)
    print(f"n = {args.n} pairs per stratum, {args.fits} datasets, best of {args.repeat}")
    print(f"{'backend':<8}{'first call s':>14}{'fit ms':>10}{'LRT ms':>10}")
    for name, r in (("numba", fast), ("numpy", slow)):
        print(f"{name:<8}{r['first_call_s']:>14.3f}{r['fit_ms']:>10.2f}{r['lrt_ms']:>10.2f}")
    print(f"speed-up: fit x{slow['fit_ms'] / fast['fit_ms']:.1f}, "
          f"LRT x{slow['lrt_ms'] / fast['lrt_ms']:.1f}")

    gap_ll = max(abs(a - b) for a, b in zip(fast["loglik"], slow["loglik"]))
    gap_r = max(abs(a - b) for a, b in zip(fast["stat"], slow["stat"]))
    print(f"max |loglik| gap {gap_ll:.2e}, max |R| gap {gap_r:.2e}")
    if not (fast["numba"] and not slow["numba"]):
        print("warning: backend flag had no effect", file=sys.stderr)
        return 1
    return 0 if gap_ll < 1e-8 and gap_r < 1e-6 else 1


if __name__ == "__main__":
    sys.exit(main())
