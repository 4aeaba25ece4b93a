"""Compare the compiled and pure-Python calibration kernels on a
representative workload and verify they agree.

Usage: python benchmarks/bench_kernels.py [--steps 5000] [--m 756] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from varcal import _kernels_py
from varcal.synth import RegimeModel, simulate

try:
    from varcal import _kernels
except ImportError:
    _kernels = None


def _workload(steps: int, m: int):
    model = RegimeModel(n=steps + m + 50, seed=11)
    sim = simulate(model)
    rng = np.random.default_rng(3)
    scores = np.ascontiguousarray(sim.returns + 0.002 * rng.standard_normal(sim.returns.shape[0]))
    z = np.ascontiguousarray(np.column_stack([np.abs(sim.returns), np.abs(np.roll(sim.returns, 1))]))
    start = m + 50
    stop = start + steps
    return scores, z, start, stop


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--m", type=int, default=756)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    scores, z, start, stop = _workload(args.steps, args.m)
    cases = [
        ("swc", dict(use_kernel=0, lam=0.0, h=np.inf, n_min=0.0)),
        ("twc", dict(use_kernel=0, lam=0.005, h=np.inf, n_min=0.0)),
        ("rwc", dict(use_kernel=1, lam=0.005, h=1.0, n_min=100.0)),
    ]
    print(f"steps={args.steps} m={args.m} repeat={args.repeat}")
    print(f"{'case':<6} {'python':>10} {'compiled':>10} {'speedup':>8}  agreement")
    for name, kw in cases:
        def run(mod):
            return mod.run_weighted_conformal(
                scores, z, kw["use_kernel"], 0, start, stop, args.m,
                kw["lam"], kw["h"], kw["n_min"], 0.01, 0,
            )

        t_py = _time(lambda: run(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<6} {t_py:>9.3f}s {'n/a':>10} {'n/a':>8}  compiled kernel not built")
            continue
        t_c = _time(lambda: run(_kernels), args.repeat)
        a, b = run(_kernels_py), run(_kernels)
        chat_ok = np.array_equal(a[0], b[0])
        diag_ok = all(np.allclose(x, y, rtol=1e-12, atol=0.0) for x, y in zip(a[1:], b[1:]))
        agree = "chat bit-exact, diagnostics <= 1e-12" if chat_ok and diag_ok else "MISMATCH"
        print(f"{name:<6} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
