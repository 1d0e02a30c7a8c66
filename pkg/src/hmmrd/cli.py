"""Command-line driver: ``hmmrd {run,converge,diagnose,mesh-info}``.

Exit status is 0 on success, 1 on invalid input and 2 on solver failure.
"""

import argparse
import json
import os
import sys
import time


from .errors import (ConfigError, FixedPointDivergence, MeshError, NonFiniteState,
                     PreconditionError, SingularBlock, SingularMatrix, SolverFailure)
from .experiments import gd_quality_study, heat_convergence_study, spiral_diagnostics, SpiralRecorder
from .io import RunConfig, SnapshotWriter, read_config, resolve, write_provenance
from .mesh import build_uniform_triangular, read_mesh, regularity
from .timestepper import energy_estimate_check, gradient_estimate_check, run

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
INPUT_ERRORS = (ConfigError, MeshError, PreconditionError, ValueError, OSError)
SOLVER_ERRORS = (SolverFailure, FixedPointDivergence, NonFiniteState, SingularMatrix, SingularBlock)


def _csv_list(text):
    return ",".join(t.strip() for t in text.split(","))


def _parser():
    p = argparse.ArgumentParser(prog="hmmrd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a spiral preset or config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=["example1", "example2"])
    src.add_argument("--config", help="path to a key = value config file")
    r.add_argument("--out", help="output directory")
    r.add_argument("--T", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--n", type=int)
    r.add_argument("--scheme", choices=["semi-implicit", "implicit-fixedpoint"])
    r.add_argument("--kinetics", choices=["barkley", "off"])
    r.add_argument("--formats", type=_csv_list, help="comma-separated subset of csv,vtk")
    r.add_argument("--linear-solver", choices=["direct", "cg"])

    c = sub.add_parser("converge", help="heat-equation convergence study")
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--n0", type=int, default=4)
    c.add_argument("--T", type=float, default=0.05)
    c.add_argument("--out", help="write convergence.csv here")

    d = sub.add_parser("diagnose", help="consistency / limit-conformity decay table")
    d.add_argument("--levels", type=int, default=4)
    d.add_argument("--n0", type=int, default=4)
    d.add_argument("--solver", choices=["cg", "direct"], default="cg")
    d.add_argument("--out", help="write quality.csv here")

    m = sub.add_parser("mesh-info", help="geometry and regularity report")
    g = m.add_mutually_exclusive_group()
    g.add_argument("--mesh", help="mesh file")
    g.add_argument("--preset", choices=["example1", "example2"])
    m.add_argument("--L", type=float, default=1.0)
    m.add_argument("--n", type=int, default=4)
    return p


def _cmd_run(args):
    cfg = read_config(args.config) if args.config else RunConfig(preset=args.preset)
    cfg = cfg.merged(out=args.out, T=args.T, dt=args.dt, n=args.n, scheme=args.scheme,
                     kinetics=args.kinetics, linear_solver=args.linear_solver,
                     formats=tuple(args.formats.split(",")) if args.formats else None)
    res = resolve(cfg)
    preset = res.preset
    os.makedirs(res.out, exist_ok=True)
    mesh = preset.mesh()
    grid = preset.grid()
    write_provenance(os.path.join(res.out, "provenance.txt"), res, mesh,
                     {"steps": grid.n_steps, "dt": repr(grid.dt_max)})
    writer = SnapshotWriter(mesh, res.out, grid, preset.snapshot_times, res.formats)
    rec = SpiralRecorder(mesh, preset.params.delta, max(1, grid.n_steps // 2000))
    t0 = time.perf_counter()
    result = run(mesh, res.reaction(), preset.u_ini, preset.v_ini, grid, res.stepper,
                 observers=(writer, rec), mu=preset.mu)
    elapsed = time.perf_counter() - t0
    diag = spiral_diagnostics(rec)
    with open(os.path.join(res.out, "diagnostics.csv"), "w") as fh:
        fh.write("time,excited_fraction,max_u\n")
        for t, f, m in zip(diag.times, diag.fraction, diag.max_u):
            fh.write(f"{t:.17g},{f:.17g},{m:.17g}\n")
    energy = energy_estimate_check(result.trajectory)
    grad = gradient_estimate_check(result.trajectory)
    summary = {
        "classification": diag.classification,
        "fraction_maxima": diag.n_maxima,
        "final_excited_fraction": float(diag.fraction[-1]),
        "steps": grid.n_steps,
        "energy_norms": energy.norms,
        "gradient_norms": grad.norms,
        "estimates_finite": bool(energy.passed and grad.passed),
        "max_fixed_point_iterations": int(max(result.fixed_point_iterations, default=0)),
        "snapshots": [os.path.basename(p) for p in writer.written],
        "wall_seconds": elapsed,
    }
    with open(os.path.join(res.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"{preset.name}: {grid.n_steps} steps in {elapsed:.1f} s, "
          f"classification {diag.classification}, output in {res.out}")
    return EXIT_OK


def _cmd_converge(args):
    table = heat_convergence_study(args.levels, n0=args.n0, T=args.T)
    print(table.format())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "convergence.csv"), "w") as fh:
            fh.write("n,h,dt,steps,err_cell,order_cell,err_grad,order_grad\n")
            for r in table.rows:
                fh.write(f"{r.n},{r.h!r},{r.dt!r},{r.steps},{r.err_cell!r},{r.order_cell!r},"
                         f"{r.err_grad!r},{r.order_grad!r}\n")
    return EXIT_OK


def _cmd_diagnose(args):
    table = gd_quality_study(args.levels, n0=args.n0, solver=args.solver)
    print(table.format())
    for name in ("S", "S_prime", "W"):
        print(f"order {name}: " + " ".join(f"{o:.3f}" for o in table.order(name)))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "quality.csv"), "w") as fh:
            fh.write("n,h,S_D,S_Dprime,W_D,theta\n")
            for r in table.rows:
                fh.write(f"{r.n},{r.h!r},{r.S!r},{r.S_prime!r},{r.W!r},{r.theta!r}\n")
    return EXIT_OK


def _cmd_mesh_info(args):
    if args.mesh:
        mesh = read_mesh(args.mesh)
    elif args.preset:
        from .experiments import PRESETS
        mesh = PRESETS[args.preset]().mesh()
    else:
        mesh = build_uniform_triangular(args.L, args.n)
    reg = regularity(mesh)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    print(f"cells      {mesh.n_cells}")
    print(f"faces      {mesh.n_faces} ({mesh.boundary_faces.size} boundary)")
    print(f"vertices   {mesh.n_vertices}")
    print(f"bbox       [{lo[0]:g}, {hi[0]:g}] x [{lo[1]:g}, {hi[1]:g}]")
    print(f"measure    {mesh.measure:.12g}")
    print(f"h          {mesh.h:.6g}")
    print(f"theta      {reg.theta:.6g} (cell term {reg.cell_term:.6g}, face term {reg.face_term:.6g})")
    print(f"hash       {mesh.hash()}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "converge": _cmd_converge, "diagnose": _cmd_diagnose,
            "mesh-info": _cmd_mesh_info}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are input errors here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except SOLVER_ERRORS as exc:
        print(f"hmmrd: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except INPUT_ERRORS as exc:
        print(f"hmmrd: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
