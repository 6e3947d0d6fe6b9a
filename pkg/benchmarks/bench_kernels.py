"""Compiled kernels vs the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each hot kernel on both backends, checks the outputs agree, then times
one full reference-size simulation per backend (the fallback run happens in
a subprocess with EDGESCHED_PURE=1 so module selection is honest).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from edgesched import _fallback
from edgesched.operator import noisy_grid

try:
    from edgesched import _kernels as compiled
except ImportError:
    compiled = None

SIM = (
    "import time; from edgesched import kernels; from edgesched.simulator import SimConfig, run;"
    "from edgesched.workload import ProfileSpec, generate;"
    "wl = generate(ProfileSpec(seed=1)); t = time.perf_counter();"
    "[run(SimConfig(1, 4, 16e6, 'splines', 'inverse', seed=s), wl) for s in range({n})];"
    "print(kernels.BACKEND, (time.perf_counter() - t) / {n})"
)


def cases():
    rng = np.random.default_rng(0)
    img = noisy_grid((1024, 1024), 0.5, seed=0)
    kx = np.sort(rng.choice(100_000, 500, replace=False)).astype(np.int64)
    ky = rng.uniform(0, 1e6, 500)
    q = rng.integers(0, 100_000, 10_000).astype(np.int64)
    cand = np.sort(rng.choice(100_000, 5_000, replace=False)).astype(np.int64)
    return {
        "flood_fill 1024x1024": ("flood_fill", (img, 30, 4)),
        "interp_many 500 knots x 10k": ("interp_many", (kx, ky, q, 0.0)),
        "best_candidate 5k": ("best_candidate", (kx, ky, cand, 0.0, True)),
        "farthest_candidate 5k": ("farthest_candidate", (kx, cand)),
    }


def best_of(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 4
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sims", type=int, default=3)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback is available", file=sys.stderr)

    print(f"{'kernel':<30} {'python':>12} {'cython':>12} {'speedup':>9}")
    for label, (name, a) in cases().items():
        py = best_of(getattr(_fallback, name), a, args.repeat)
        if compiled is None:
            print(f"{label:<30} {py * 1e3:10.3f}ms {'-':>12} {'-':>9}")
            continue
        cy = best_of(getattr(compiled, name), a, args.repeat)
        same = np.array_equal(np.asarray(getattr(_fallback, name)(*a)), np.asarray(getattr(compiled, name)(*a)))
        print(f"{label:<30} {py * 1e3:10.3f}ms {cy * 1e3:10.3f}ms {py / cy:8.1f}x" + ("" if same else "  MISMATCH"))

    print()
    for pure in ("1", "0"):
        env = {k: v for k, v in os.environ.items() if k != "EDGESCHED_PURE"}
        if pure == "1":
            env["EDGESCHED_PURE"] = "1"
        out = subprocess.run([sys.executable, "-c", SIM.format(n=args.sims)], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"simulation, 759 docs, M=1 ({backend}): {float(secs) * 1e3:.1f} ms per run")


if __name__ == "__main__":
    main()
