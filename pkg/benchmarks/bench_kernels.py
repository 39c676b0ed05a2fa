"""Compiled vs pure-Python kernels on the driven-step Hamiltonian.

Usage: python benchmarks/bench_kernels.py [--dim 18] [--steps 20000] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from sps2cs.config import load_preset, resolve_preset
from sps2cs.device import build_H3_full
from sps2cs.hilbert import HilbertSpace
from sps2cs.kernels import BACKEND, PackedHamiltonian, _pykernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=18, help="cavity truncation")
    ap.add_argument("--steps", type=int, default=20000, help="RK4 steps")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = load_preset(resolve_preset("paper_sec4"))
    space = HilbertSpace((3, args.dim), ("qutrit", "c1p"))
    comps = build_H3_full(p, space).components()
    nu = max(abs(n) for _, n in comps)
    dt = 1 / (20 * nu)
    psi0 = np.zeros(space.dim, complex)
    psi0[0] = 1

    backends = {"python": _pykernels}
    if BACKEND == "cython":
        from sps2cs.kernels import _ckernels

        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the fallback only")

    results = {}
    for name, impl in backends.items():
        H = PackedHamiltonian(comps, space.dim, backend=impl)
        x = np.random.default_rng(0).normal(size=space.dim) + 0j
        t_mv, _ = best_of(lambda: [H.matvec(1e-7 * k, x) for k in range(2000)], args.repeat)
        t_rk, psi = best_of(lambda: H.rk4(psi0, 0.0, dt, args.steps), args.repeat)
        results[name] = psi
        print(f"{name:7s} matvec {t_mv / 2000 * 1e6:8.2f} us/call   rk4 {t_rk / args.steps * 1e6:8.2f} us/step"
              f"   norm {np.linalg.norm(psi):.12f}")
    if len(results) == 2:
        diff = np.max(np.abs(results["python"] - results["cython"]))
        print(f"max |psi_python - psi_cython| = {diff:.2e} after {args.steps} steps "
              f"(t = {args.steps * dt * 1e9:.3g} ns, dim {space.dim}, max |nu|/2pi = {nu / 2 / math.pi / 1e9:.3g} GHz)")


if __name__ == "__main__":
    main()
