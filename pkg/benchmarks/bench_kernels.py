"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Prints one row per (kernel, size) with the best-of-``repeat`` time per call
for each backend and the speed-up. ``--end-to-end`` also times a regularized
ILQR run on the pendulum with each backend (one subprocess per backend, since
the backend is fixed at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from trajopt import _kernels

SIZES = [(100, 2, 1), (100, 4, 2), (500, 4, 2), (200, 12, 4)]


def _inputs(tau, d, p, seed=0):
    rng = np.random.default_rng(seed)
    phi_x = 0.9 * rng.standard_normal((tau, d, d)) / np.sqrt(d)
    phi_u = rng.standard_normal((tau, p, d))
    h_x = rng.standard_normal((tau + 1, d))
    L = rng.standard_normal((tau + 1, d, d))
    h_xx = np.einsum("tij,tkj->tik", L, L)
    g_u = rng.standard_normal((tau, p))
    g_uu = np.broadcast_to(np.eye(p), (tau, p, p)).copy()
    K = 0.1 * rng.standard_normal((tau, p, d))
    k = rng.standard_normal((tau, p))
    z = rng.standard_normal((tau, d))
    v = rng.standard_normal((tau, p))
    return dict(phi_x=phi_x, phi_u=phi_u, h_x=h_x, h_xx=h_xx, g_u=g_u, g_uu=g_uu, K=K, k=k, z=z, v=v)


def _calls(mod, a):
    return {
        "lq_backward": lambda: mod.lq_backward(a["phi_x"], a["phi_u"], a["h_x"], a["h_xx"],
                                               a["g_u"], a["g_uu"], 1.0),
        "lq_rollout": lambda: mod.lq_rollout(a["phi_x"], a["phi_u"], a["K"], a["k"]),
        "adjoint": lambda: mod.adjoint(a["phi_x"], a["phi_u"], a["z"]),
        "tangent": lambda: mod.tangent(a["phi_x"], a["phi_u"], a["v"]),
    }


def _best(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_kernels(repeat):
    mods = {m.BACKEND: m for m in _kernels.available_backends()}
    names = list(mods)
    print(f"{'kernel':<12} {'tau,d,p':<12} " + " ".join(f"{n:>12}" for n in names)
          + ("   speed-up" if len(names) > 1 else ""))
    for tau, d, p in SIZES:
        a = _inputs(tau, d, p)
        per_backend = {n: _calls(m, a) for n, m in mods.items()}
        for kernel in per_backend[names[0]]:
            times = [_best(per_backend[n][kernel], repeat) for n in names]
            row = f"{kernel:<12} {f'{tau},{d},{p}':<12} " + " ".join(f"{t * 1e3:>10.3f}ms" for t in times)
            if len(times) > 1:
                row += f"   {times[0] / times[1]:>7.1f}x"
            print(row)
    if len(names) == 1:
        print("compiled backend not available; only the numpy fallback was timed")


_E2E = """
import time
from trajopt import BACKEND, make_env, SolverConfig, regularized_ilqr
P = make_env("pendulum")
t = time.perf_counter()
_, rec = regularized_ilqr(P, P.zero_command(), SolverConfig(gamma0=1e3))
print(BACKEND, rec.iterations, f"{time.perf_counter() - t:.3f}")
"""


def bench_end_to_end():
    print("\nregularized ILQR on pendulum (tau=100)")
    for pure in ("1", "0"):
        env = dict(os.environ, TRAJOPT_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True,
                             check=True).stdout.split()
        print(f"  backend={out[0]:<8} iterations={out[1]:<5} wall={out[2]}s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--end-to-end", action="store_true")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
