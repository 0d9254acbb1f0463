import numpy as np
import pytest

from curvedhho.cli import build_parser, main
from curvedhho.geometry import read_mesh, validate_mesh


def test_parser_defaults():
    args = build_parser().parse_args(["run", "--test", "ellipse"])
    assert (args.k, args.mesh, args.sweep, args.quad_points) == (1, "curved", "h", 30)
    assert args.levels is None
    args = build_parser().parse_args(["validate", "m.txt"])
    assert args.command == "validate"


def test_run_writes_tables_and_meshes(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "run",
            "--test",
            "ellipse",
            "--k",
            "0",
            "--levels",
            "1",
            "--out",
            str(out),
            "--dump-mesh",
            "--debug-uncondensed",
        ]
    )
    assert code == 0
    dat = out / "ellipse_curved_hsweep_k0.dat"
    meta = out / "ellipse_curved_hsweep_k0.meta"
    meshfile = out / "mesh_ellipse_curved_L0.txt"
    assert dat.exists() and meta.exists() and meshfile.exists()
    lines = dat.read_text().strip().splitlines()
    assert lines[0].split() == ["MeshSize", "L2Error", "H1Error", "EnergyError"]
    assert len(lines) == 2
    vals = [float(t) for t in lines[1].split()]
    assert vals[0] == pytest.approx(np.sqrt(2.0) / 2.0, rel=1e-12)
    assert all(v > 0 for v in vals[1:])
    mesh = read_mesh(meshfile)
    assert validate_mesh(mesh) == []


def test_validate_command_round_trip(tmp_path):
    out = tmp_path / "o"
    main(["run", "--test", "ellipse", "--k", "0", "--levels", "1", "--out", str(out), "--dump-mesh"])
    assert main(["validate", str(out / "mesh_ellipse_curved_L0.txt")]) == 0


def test_validate_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a mesh\n")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.txt")]) == 2


def test_check_flag_fails_on_preasymptotic_run(tmp_path):
    """Two coarse levels cannot meet the pinned final-rate thresholds."""
    code = main(
        [
            "run",
            "--test",
            "ellipse",
            "--k",
            "1",
            "--levels",
            "2",
            "--out",
            str(tmp_path / "o"),
            "--check",
        ]
    )
    assert code == 2


def test_dump_solution_grid(tmp_path):
    out = tmp_path / "sol"
    code = main(
        [
            "run",
            "--test",
            "ellipse",
            "--k",
            "0",
            "--levels",
            "1",
            "--out",
            str(out),
            "--dump-solution",
            "8",
        ]
    )
    assert code == 0
    csv = out / "solution_ellipse_curved_k0_L0.csv"
    body = csv.read_text().strip().splitlines()
    assert body[0] == "x,y,value"
    assert len(body) == 1 + 64
    cells = [line.split(",") for line in body[1:]]
    values = np.array([float(c[2]) for c in cells])
    assert np.isnan(values).any()  # box corners lie outside the ellipse
    assert np.isfinite(values).any()
