"""Compare the compiled kernel backend against the pure NumPy fallback.

Times each hot kernel on default-scenario shapes (M=3, N=16) and, with
``--solvers``, whole solver runs executed in subprocesses so the import
time backend selection applies (``EECOORD_PURE=1`` forces the fallback).

Usage: python benchmarks/bench_kernels.py [--repeat 2000] [--solvers]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def build_payload(m_bs=3, n_sub=16, seed=0):
    rng = np.random.default_rng(seed)
    c = np.ascontiguousarray
    p = c(rng.uniform(0.001, 0.2, (m_bs, n_sub)))
    gk = c(rng.uniform(0.0, 1e7, (m_bs, m_bs, n_sub)))
    zbar = rng.uniform(0.1, 50.0, (m_bs, n_sub))
    alpha = c(zbar / (1 + zbar))
    beta = c(np.log2(1 + zbar) - alpha * np.log2(zbar))
    theta = c(rng.uniform(0.25, 0.75, (m_bs, n_sub)))
    gamma = c(np.full((m_bs, n_sub), 3.8))
    w = c(np.full((m_bs, n_sub), 1.0 / (m_bs * n_sub)))
    caps = c(np.full((m_bs, n_sub), 0.2))
    return p, gk, alpha, beta, theta, gamma, w, caps


def time_call(fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat):
    from eecoord.kernels import _pure

    try:
        from eecoord.kernels import _core
    except ImportError:
        print("compiled backend not built; only timing the pure backend")
        _core = None

    p, gk, alpha, beta, theta, gamma, w, caps = build_payload()
    cases = {
        "sinr_and_den": lambda impl: impl.sinr_and_den(p, gk),
        "fg_grad(bound)": lambda impl: impl.fg_grad(p, gk, alpha, beta, theta, gamma,
                                                    1.8e5, 1e4, False),
        "fg_grad(true)": lambda impl: impl.fg_grad(p, gk, alpha, beta, theta, gamma,
                                                   1.8e5, 1e4, True),
        "prodlog_grad": lambda impl: impl.prodlog_grad(p, gk, alpha, beta, theta, gamma,
                                                       1.8e5, w, w, False),
        "sumee_eval": lambda impl: impl.sumee_eval(p, gk, theta, gamma, 1.8e5, w),
        "fixed_point_solve": lambda impl: impl.fixed_point_solve(caps, gk, alpha, gamma,
                                                                 caps, 1e4, 1.8e5, 1e-8,
                                                                 10_000),
    }
    print(f"{'kernel':<20}{'pure':>12}{'compiled':>12}{'speedup':>9}")
    for name, call in cases.items():
        t_pure = time_call(lambda: call(_pure), repeat)
        if _core is None:
            print(f"{name:<20}{t_pure * 1e6:>10.1f}us{'-':>12}{'-':>9}")
            continue
        t_core = time_call(lambda: call(_core), repeat)
        print(f"{name:<20}{t_pure * 1e6:>10.1f}us{t_core * 1e6:>10.1f}us"
              f"{t_pure / t_core:>8.1f}x")


SOLVER_SNIPPET = r"""
import time
import numpy as np
from eecoord import ScenarioConfig, draw_scenario, solve_gee, solve_prodee, kernels

cfg = ScenarioConfig(seed=42)
insts = [draw_scenario(cfg, drop=d).instance for d in range(5)]
for name, solver in (("solve_gee", solve_gee), ("solve_prodee", solve_prodee)):
    solver(insts[0])  # warm up
    t0 = time.perf_counter()
    for inst in insts:
        solver(inst)
    dt = (time.perf_counter() - t0) / len(insts)
    print(f"{kernels.BACKEND:>9} {name:<14} {dt * 1e3:8.1f} ms/solve")
"""


def bench_solvers():
    for env_extra in ({}, {"EECOORD_PURE": "1"}):
        env = {**os.environ, **env_extra}
        subprocess.run([sys.executable, "-c", SOLVER_SNIPPET], env=env, check=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--solvers", action="store_true",
                    help="also benchmark whole solver runs per backend (subprocesses)")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if args.solvers:
        print()
        bench_solvers()


if __name__ == "__main__":
    main()
