"""Compare the compiled and pure-Python kernels, and the two face solvers.

Usage: python3 benchmarks/bench_kernels.py [--n 30] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from hmmrd import kernels
from hmmrd.experiments import preset_example2
from hmmrd.mesh import build_uniform_triangular
from hmmrd.timestepper import DiffusionOperator, StepperConfig


def best(func, repeat):
    return min(timeit.repeat(func, number=1, repeat=repeat))


def bench_kernels(mesh, repeat):
    phi = np.random.default_rng(0).normal(size=mesh.n_dofs)
    rows = []
    for name in kernels.BACKENDS:
        t_asm = best(lambda: kernels.hmm_local_triplets(mesh, 1.0, backend=name), repeat)
        t_grad = best(lambda: kernels.diamond_gradients(mesh, phi, backend=name), repeat)
        rows.append((name, t_asm, t_grad))
    return rows


def bench_solvers(mesh, dt, repeat, steps=20):
    ops = DiffusionOperator(mesh, 1.0)
    rng = np.random.default_rng(1)
    u = rng.uniform(size=mesh.n_cells)
    src = rng.normal(size=mesh.n_cells)
    ops.face_system(dt)                    # factorisation excluded from per-step cost
    rows = []
    for solver in ("direct", "cg"):
        cfg = StepperConfig(linear_solver=solver)
        t = best(lambda: [ops.solve(u, src, dt, cfg) for _ in range(steps)], repeat) / steps
        rows.append((solver, t))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    mesh = build_uniform_triangular(7.5, args.n)
    print(f"mesh: {mesh.n_cells} cells, {mesh.n_faces} faces; default backend {kernels.backend()}")
    print(f"{'backend':>8} {'assembly [ms]':>14} {'gradients [ms]':>15}")
    rows = bench_kernels(mesh, args.repeat)
    for name, a, g in rows:
        print(f"{name:>8} {1e3 * a:14.3f} {1e3 * g:15.3f}")
    if len(rows) > 1:
        py = dict((r[0], r[1:]) for r in rows)
        print(f"speed-up cython/python: assembly {py['python'][0] / py['cython'][0]:.1f}x, "
              f"gradients {py['python'][1] / py['cython'][1]:.1f}x")
    dt = preset_example2().time_step
    print(f"\nface solve per step (dt = {dt:g}):")
    for solver, t in bench_solvers(mesh, dt, args.repeat):
        print(f"{solver:>8} {1e3 * t:10.3f} ms")


if __name__ == "__main__":
    main()
