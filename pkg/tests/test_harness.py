import math

import numpy as np
import pytest

from curvedhho import harness
from curvedhho.harness import (
    ConvergenceRow,
    HarnessError,
    RunResult,
    check_result,
    dat_header,
    dat_line,
    emit_dat,
    error_measures,
    run_convergence,
    solve_case,
    write_metadata,
)


def test_manufactured_solution_vanishes_on_boundary(ellipse):
    curve = ellipse.spec.loops[0].curve
    ts = np.linspace(0.0, 2.0 * math.pi, 100, endpoint=False)
    vals = ellipse.exact(curve.point(ts))
    assert np.max(np.abs(vals)) <= 1e-13


def test_manufactured_gradient_matches_difference_quotients(ellipse, rng):
    pts = rng.uniform(-0.7, 0.7, (30, 2))
    eps = 1e-6
    ex = np.stack(
        [
            (ellipse.exact(pts + [eps, 0]) - ellipse.exact(pts - [eps, 0])) / (2 * eps),
            (ellipse.exact(pts + [0, eps]) - ellipse.exact(pts - [0, eps])) / (2 * eps),
        ],
        axis=-1,
    )
    np.testing.assert_allclose(ellipse.exact_grad(pts), ex, atol=1e-8)


def test_manufactured_source_is_minus_laplacian(ellipse, rng):
    """Five-point stencil check that the right-hand side matches -div grad u."""
    pts = rng.uniform(-0.6, 0.6, (25, 2))
    h = 1e-4
    lap = np.zeros(len(pts))
    for d in (np.array([h, 0.0]), np.array([0.0, h])):
        lap += (ellipse.exact(pts + d) - 2 * ellipse.exact(pts) + ellipse.exact(pts - d)) / h**2
    np.testing.assert_allclose(ellipse.source(pts), -lap, rtol=1e-5, atol=1e-5)


def test_hetero_case_setup(hetero):
    assert hetero.exact is None
    assert hetero.straighten_faces == "interface"
    K1 = hetero.diffusion.tensors[1]
    ev = np.linalg.eigvalsh(K1)
    assert ev[0] == pytest.approx(1e-6, rel=1e-9)
    assert ev[1] == pytest.approx(2.0 - 1e-6, rel=1e-12)
    np.testing.assert_allclose(hetero.diffusion.tensors[0], np.eye(2))
    half = 2.0 * math.sqrt(2.0) * math.sin(math.pi / 8.0)
    assert hetero.spec.box[1][0] == pytest.approx(half, rel=1e-15)
    pts = np.zeros((3, 2))
    np.testing.assert_allclose(hetero.source(pts), 1.0)


def test_case_mesh_levels_and_modes(ellipse, hetero):
    m0 = harness.case_mesh(ellipse, 0, "curved")
    m1 = harness.case_mesh(ellipse, 1, "curved")
    assert m0.h == pytest.approx(2.0 * m1.h, rel=1e-12)
    flat = harness.case_mesh(ellipse, 0, "straight")
    assert all(f.is_straight for f in flat.faces)
    part = harness.case_mesh(hetero, 0, "straight")
    assert any(not f.is_straight for f in part.boundary_faces())
    with pytest.raises(ValueError):
        harness.case_mesh(ellipse, 0, "wavy")


def test_error_measures_requires_exact(hetero, disc_mesh_n4):
    disc, sol = solve_case(hetero, disc_mesh_n4, 0, quad_points=12)
    with pytest.raises(HarnessError):
        error_measures(hetero, disc, sol)


def test_error_measures_small_on_fine_solve(ellipse, ellipse_mesh_n8):
    disc, sol = solve_case(ellipse, ellipse_mesh_n8, 2)
    e0, e1, ea = error_measures(ellipse, disc, sol)
    assert 0 < e0 < 1e-4
    assert 0 < e1 < 1e-2
    assert 0 < ea < 1e-2


def test_run_convergence_h_sweep_shape(ellipse):
    seen = []
    result = run_convergence(
        ellipse, k=0, levels=2, on_row=lambda res, row: seen.append(row.index)
    )
    assert seen == [0, 1]
    assert [r.h for r in result.rows] == sorted((r.h for r in result.rows), reverse=True)
    assert result.columns == ("MeshSize", "L2Error", "H1Error", "EnergyError")
    assert result.meta["case"] == "ellipse"
    assert result.meta["seed"] == 20240117
    assert len(result.meta["level_seconds"]) == 2
    assert all(r.k == 0 for r in result.rows)
    assert result.rows[1].n_elements > result.rows[0].n_elements


def test_run_convergence_k_sweep_uses_fixed_mesh(ellipse):
    result = run_convergence(ellipse, k=1, levels=1, sweep="k")
    assert [r.k for r in result.rows] == [0, 1]
    assert len({r.n_elements for r in result.rows}) == 1
    assert result.columns[0] == "EdgeDegree"


def test_hetero_sweep_against_supplied_reference(hetero):
    result = run_convergence(
        hetero, k=1, levels=1, sweep="k", quad_points=20, reference=(0.46, 0.807)
    )
    assert result.columns == ("EdgeDegree", "IntegralGap", "SeminormGap")
    assert result.meta["reference_integral"] == 0.46
    assert all(len(r.values) == 2 for r in result.rows)


def _fake_result(values_list, sweep="h", case="ellipse", mode="curved", k=3):
    rows = []
    for i, vals in enumerate(values_list):
        rows.append(
            ConvergenceRow(
                index=i,
                h=1.0 / 2**i,
                k=(k if sweep == "h" else i),
                n_elements=4**i,
                n_internal_faces=2 * 4**i,
                values=tuple(vals),
            )
        )
    cols = ("MeshSize" if sweep == "h" else "EdgeDegree",) + ("A", "B", "C")[: len(values_list[0])]
    return RunResult(case, mode, sweep, cols, rows, {})


def test_rates_h_and_k():
    res = _fake_result([(1.0, 1.0, 1.0), (0.25, 0.5, 0.5)])
    np.testing.assert_allclose(res.rates()[0], (2.0, 1.0, 1.0), atol=1e-14)
    res_k = _fake_result([(1.0, 1.0), (0.1, 0.5)], sweep="k")
    np.testing.assert_allclose(res_k.rates()[0], (0.1, 0.5), atol=1e-14)


def test_check_result_flags_bad_rates():
    good = _fake_result(
        [(1.0, 1.0, 1.0), (2.0**-5, 2.0**-4, 2.0**-4), (2.0**-10, 2.0**-8, 2.0**-8)]
    )
    assert check_result(good) == []
    stalled = _fake_result([(1.0, 1.0, 1.0), (0.9, 0.9, 0.9), (0.85, 0.85, 0.85)])
    assert check_result(stalled) != []


def test_dat_output_round_trip(tmp_path):
    res = _fake_result([(1.0, 0.5, 0.25), (0.125, 0.0625, 0.03125)])
    path = tmp_path / "table.dat"
    emit_dat(res, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split() == list(res.columns)
    for line, row in zip(lines[1:], res.rows):
        nums = [float(tok) for tok in line.split()]
        assert nums[0] == row.h
        assert tuple(nums[1:]) == row.values
    assert dat_header(res) == lines[0]
    assert dat_line(res, res.rows[0]) == lines[1]


def test_metadata_file_contents(tmp_path, ellipse):
    result = run_convergence(ellipse, k=0, levels=1, quad_points=10)
    path = tmp_path / "run.meta"
    write_metadata(result, path)
    text = path.read_text()
    assert "case=ellipse" in text
    assert "seed=20240117" in text
    assert "quad_points=10" in text
    assert "elements=" in text and "seconds=" in text
