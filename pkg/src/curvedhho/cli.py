"""Command line entry points.

`curvedhho run` executes one of the built-in experiments and writes plain
whitespace tables (plus a metadata sidecar) into an output directory.  Rows
are flushed as they finish so an aborted run still leaves a usable partial
table.  `curvedhho validate` re-checks a mesh file written by --dump-mesh.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import scipy.sparse.linalg as spla

from . import harness
from .geometry import point_in_element, read_mesh, validate_mesh, write_mesh
from .hho import build_discretization
from .solver import assemble, solve


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="curvedhho",
        description="Hybrid high-order diffusion solver on meshes with curved faces.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in convergence experiment")
    run.add_argument(
        "--test",
        choices=("ellipse", "hetero"),
        required=True,
        help="ellipse: manufactured Dirichlet problem; hetero: disc with interface",
    )
    run.add_argument("--k", type=int, default=1, help="face polynomial degree (default 1)")
    run.add_argument(
        "--levels",
        type=int,
        default=None,
        help="number of mesh refinements (default: 3 for ellipse, 1 for hetero)",
    )
    run.add_argument(
        "--mesh",
        choices=("curved", "straight"),
        default="curved",
        help="use exactly curved faces or their straightened counterparts",
    )
    run.add_argument(
        "--sweep",
        choices=("h", "k"),
        default="h",
        help="refine the mesh at fixed k, or raise k=0..K on the finest mesh",
    )
    run.add_argument("--quad-points", type=int, default=30, help="1d Gauss nodes per edge")
    run.add_argument("--out", default="out", help="output directory (default ./out)")
    run.add_argument("--dump-mesh", action="store_true", help="also write the mesh files")
    run.add_argument(
        "--dump-solution",
        type=int,
        default=0,
        metavar="N",
        help="sample the final reconstruction on an NxN grid into a CSV",
    )
    run.add_argument(
        "--debug-uncondensed",
        action="store_true",
        help="cross-check static condensation against the full system",
    )
    run.add_argument(
        "--check",
        action="store_true",
        help="verify the run against the expected convergence behaviour, exit 2 on failure",
    )

    val = sub.add_parser("validate", help="check a mesh file for structural problems")
    val.add_argument("meshfile")
    return p


def cmd_validate(args) -> int:
    try:
        mesh = read_mesh(args.meshfile)
    except OSError as exc:
        print(f"FAIL cannot read {args.meshfile}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    n_bnd = len(mesh.boundary_faces())
    print(
        f"{len(mesh.elements)} elements, {len(mesh.faces)} faces "
        f"({n_bnd} boundary), h = {mesh.h:.6g}"
    )
    problems = validate_mesh(mesh)
    for msg in problems:
        print(f"FAIL {msg}")
    if problems:
        return 2
    print("mesh ok")
    return 0


def _default_levels(test: str) -> int:
    return 3 if test == "ellipse" else 1


def _dump_meshes(case, args, out_dir):
    levels = range(args.levels) if args.sweep == "h" else [args.levels - 1]
    for lvl in levels:
        mesh = harness.case_mesh(case, lvl, args.mesh)
        path = os.path.join(out_dir, f"mesh_{case.name}_{args.mesh}_L{lvl}.txt")
        write_mesh(mesh, path)
        print(f"wrote {path}")


def _debug_uncondensed(case, args) -> float:
    """Solve the first setting of the sweep both ways and report the dof gap."""
    lvl = 0 if args.sweep == "h" else args.levels - 1
    kk = args.k if args.sweep == "h" else 0
    mesh = harness.case_mesh(case, lvl, args.mesh)
    disc = build_discretization(mesh, case.diffusion, kk, quad_points=args.quad_points)
    system = assemble(disc, case.source, build_full=True)
    sol = solve(disc, system)
    dm = system.dofmap
    if dm.n_cell + dm.n_face == 0:
        print("uncondensed check: empty system, nothing to compare")
        return 0.0
    full = spla.spsolve(system.full_matrix.tocsc(), system.full_rhs)
    full = np.atleast_1d(full)
    gap = 0.0
    for elem in disc.mesh.elements:
        off = dm.cell_offset[elem.id]
        got = full[off : off + dm.cell_dim]
        gap = max(gap, float(np.max(np.abs(got - sol.dofs.cell[elem.id]), initial=0.0)))
    for face in disc.mesh.faces:
        off = dm.face_offset[face.id]
        if off is None:
            continue
        got = full[dm.n_cell + off : dm.n_cell + off + dm.face_dim[face.id]]
        gap = max(gap, float(np.max(np.abs(got - sol.dofs.face[face.id]), initial=0.0)))
    scale = max(1.0, float(np.max(np.abs(full))))
    rel = gap / scale
    print(f"uncondensed check (level {lvl}, k={kk}): max dof gap {gap:.3e} (rel {rel:.3e})")
    return rel


def _element_boxes(mesh):
    boxes = {}
    for elem in mesh.elements:
        pts = [mesh.corner_points(elem)]
        for face, _fwd in mesh.element_loop(elem):
            if not face.is_straight:
                t0, t1 = face.curve.param_range
                pts.append(face.curve.point(np.linspace(t0, t1, 17)))
        pts = np.vstack(pts)
        boxes[elem.id] = (pts.min(axis=0), pts.max(axis=0))
    return boxes


def _dump_solution(case, args, out_dir, n_grid: int):
    """Sample the reconstructed potential of the final setting on a grid."""
    lvl = args.levels - 1
    kk = args.k
    mesh = harness.case_mesh(case, lvl, args.mesh)
    _disc, sol = harness.solve_case(case, mesh, kk, args.quad_points)
    (lo_x, lo_y), (hi_x, hi_y) = case.spec.box
    xs = np.linspace(lo_x, hi_x, n_grid)
    ys = np.linspace(lo_y, hi_y, n_grid)
    boxes = _element_boxes(mesh)
    pad = 1e-12 * mesh.h
    path = os.path.join(out_dir, f"solution_{case.name}_{args.mesh}_k{kk}_L{lvl}.csv")
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for y in ys:
            for x in xs:
                p = np.array([x, y])
                value = float("nan")
                for elem in mesh.elements:
                    lo, hi = boxes[elem.id]
                    if np.any(p < lo - pad) or np.any(p > hi + pad):
                        continue
                    if point_in_element(mesh, elem, p):
                        value = float(sol.reconstruction_values(elem.id, p[None, :])[0])
                        break
                fh.write(f"{x:.17g},{y:.17g},{value:.17g}\n")
    print(f"wrote {path}")


def cmd_run(args) -> int:
    if args.levels is None:
        args.levels = _default_levels(args.test)
    if args.k < 0 or args.levels < 1 or args.quad_points < 1:
        print("error: k must be >= 0, levels >= 1, quad-points >= 1", file=sys.stderr)
        return 1
    case = harness.ellipse_case() if args.test == "ellipse" else harness.hetero_case()
    os.makedirs(args.out, exist_ok=True)
    stem = f"{case.name}_{args.mesh}_{args.sweep}sweep_k{args.k}"
    dat_path = os.path.join(args.out, stem + ".dat")
    meta_path = os.path.join(args.out, stem + ".meta")

    dat = open(dat_path, "w")
    wrote_header = False

    def on_row(result, row):
        nonlocal wrote_header
        if not wrote_header:
            dat.write(harness.dat_header(result) + "\n")
            header = "  ".join(f"{c:>22s}" for c in result.columns)
            print(header)
            wrote_header = True
        dat.write(harness.dat_line(result, row) + "\n")
        dat.flush()
        lead = row.h if result.sweep == "h" else float(row.k)
        cells = [f"{lead:>22.15g}"] + [f"{v:>22.15g}" for v in row.values]
        print("  ".join(cells))

    try:
        result = harness.run_convergence(
            case,
            k=args.k,
            levels=args.levels,
            mode=args.mesh,
            sweep=args.sweep,
            quad_points=args.quad_points,
            on_row=on_row,
        )
    except Exception as exc:  # partial rows are already on disk
        dat.close()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"partial table left in {dat_path}", file=sys.stderr)
        return 1
    dat.close()

    rates = result.rates()
    if rates:
        label = "rates" if args.sweep == "h" else "ratios"
        print(f"{label}:")
        for row, rr in zip(result.rows[1:], rates):
            lead = f"h={row.h:.4g}" if args.sweep == "h" else f"k={row.k}"
            print("  " + lead + "  " + "  ".join(f"{r:8.3f}" for r in rr))
    harness.write_metadata(result, meta_path)
    print(f"wrote {dat_path}")
    print(f"wrote {meta_path}")

    if args.dump_mesh:
        _dump_meshes(case, args, args.out)
    if args.dump_solution > 0:
        _dump_solution(case, args, args.out, args.dump_solution)
    status = 0
    if args.debug_uncondensed:
        rel = _debug_uncondensed(case, args)
        if rel > 1e-10:
            print("FAIL condensation disagrees with the full system", file=sys.stderr)
            status = 2
    if args.check:
        failures = harness.check_result(result)
        for msg in failures:
            print(f"FAIL {msg}")
        if failures:
            status = 2
        else:
            print("PASS expected convergence behaviour")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
