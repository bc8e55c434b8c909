"""Compare the compiled stencil kernel with the numpy fallback.

Runs the same excited marble for a fixed number of steps on each available
backend, reports nanoseconds per cell-step and checks the fields agree
bit for bit.

    python benchmarks/bench_kernels.py --cells-per-diameter 64 --steps 2000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from bzmarbles import _kernels
from bzmarbles.kinetics import KineticsParams, rest_state
from bzmarbles.medium import MarbleSpec, SolverParams, build_disc_mask, stimulus_cells


def setup(cells_per_diameter: int):
    kp = KineticsParams()
    grid = build_disc_mask(MarbleSpec.from_resolution(50.0, cells_per_diameter))
    sp = SolverParams.auto(grid.h_mm, kp)
    u0, v0 = rest_state(kp)
    u = np.full(grid.n_cells, u0)
    v = np.full(grid.n_cells, v0)
    u[stimulus_cells(grid, grid.centre_cell, 0.5)] = 0.8
    return kp, grid, sp, u, v


def run(backend: str, cells_per_diameter: int, steps: int, threads: int, repeats: int):
    kp, grid, sp, u0, v0 = setup(cells_per_diameter)
    best = np.inf
    for _ in range(repeats):
        u, v = u0.copy(), v0.copy()
        system = _kernels.CellSystem(grid.nbr.astype(np.int64), np.full(grid.n_cells, grid.h_mm ** -2),
                                     _kernels.Coupling.empty())
        system.enable_detection(0.1, 0.05, v)
        ext = np.zeros(grid.n_cells)
        t = time.perf_counter()
        _kernels.advance(system, u, v, ext, kp, kp.diffusion_dimless, sp.dt, steps,
                         threads=threads, backend=backend)
        best = min(best, time.perf_counter() - t)
    return best, grid.n_cells, u, v


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells-per-diameter", type=int, default=64)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    results = {}
    for backend in _kernels.available_backends():
        secs, n, u, v = run(backend, args.cells_per_diameter, args.steps, args.threads, args.repeats)
        results[backend] = (u, v)
        ns = secs / (n * args.steps) * 1e9
        print(f"{backend:>7}: {n} cells x {args.steps} steps in {secs:.3f} s = {ns:.2f} ns/cell-step")
    if len(results) == 2:
        (uc, vc), (up, vp) = results["cython"], results["python"]
        same = np.array_equal(uc, up) and np.array_equal(vc, vp)
        print(f"fields identical across backends: {same}")


if __name__ == "__main__":
    main()
