import math

import numpy as np
import pytest

from curvedhho.geometry import CircularArc, EllipseArc, validate_mesh
from curvedhho.meshgen import (
    BOUNDARY_CUT,
    INTERFACE_CUT,
    CutLoop,
    CutSpec,
    CutSpecError,
    DegenerateCutError,
    MeshGenError,
    cut_cartesian,
    mesh_sequence,
    straighten,
)

FULL = 2.0 * math.pi


def circle(r, mode=BOUNDARY_CUT, center=(0.0, 0.0)):
    return CutLoop(CircularArc(center, r, 0.0, FULL), mode)


def test_plain_grid_without_loops():
    mesh = cut_cartesian(CutSpec(box=((0.0, 0.0), (1.0, 1.0)), n=3, loops=[]))
    assert len(mesh.elements) == 9
    assert mesh.h == pytest.approx(math.sqrt(2.0) / 3.0, rel=1e-14)
    for elem in mesh.elements:
        assert elem.area == pytest.approx(1.0 / 9.0, rel=1e-13)
    assert validate_mesh(mesh) == []


def test_enclosing_loop_keeps_whole_grid():
    spec = CutSpec(box=((-1.0, -1.0), (1.0, 1.0)), n=2, loops=[circle(10.0)])
    mesh = cut_cartesian(spec)
    assert len(mesh.elements) == 4
    assert all(f.is_straight for f in mesh.faces)
    assert validate_mesh(mesh) == []


def test_loop_hidden_in_one_cell_rejected():
    spec = CutSpec(box=((-1.0, -1.0), (1.0, 1.0)), n=2, loops=[circle(0.2, center=(0.5, 0.5))])
    with pytest.raises(MeshGenError, match="coarse"):
        cut_cartesian(spec)


def test_loop_crossing_grid_boundary_rejected():
    spec = CutSpec(box=((-1.0, -1.0), (1.0, 1.0)), n=4, loops=[circle(1.2)])
    with pytest.raises(MeshGenError, match="boundary"):
        cut_cartesian(spec)


def test_corner_hit_is_degenerate():
    loop = circle(math.sqrt(0.5), center=(0.5, 0.5))  # passes through (1, 1)
    spec = CutSpec(box=((-1.0, -1.0), (2.0, 2.0)), n=3, loops=[loop])
    with pytest.raises(DegenerateCutError):
        cut_cartesian(spec)


def test_tangency_is_degenerate():
    loop = circle(0.7, center=(0.3, 0.2))  # tangent to the gridline x = 1
    spec = CutSpec(box=((-1.0, -1.0), (1.0, 1.0)), n=2, loops=[loop])
    with pytest.raises(DegenerateCutError):
        cut_cartesian(spec)


def test_cutspec_validation():
    with pytest.raises(CutSpecError):
        CutSpec(box=((0.0, 0.0), (1.0, 1.0)), n=0, loops=[])
    with pytest.raises(CutSpecError):
        CutSpec(box=((1.0, 0.0), (0.0, 1.0)), n=2, loops=[])
    with pytest.raises(CutSpecError):  # overlapping loops
        CutSpec(
            box=((-2.0, -2.0), (2.0, 2.0)),
            n=4,
            loops=[circle(1.0), circle(1.0, INTERFACE_CUT, center=(0.5, 0.0))],
        )


def test_cutloop_requires_closed_ccw():
    with pytest.raises(MeshGenError):
        CutLoop(CircularArc((0.0, 0.0), 1.0, 0.0, math.pi), BOUNDARY_CUT)
    with pytest.raises(MeshGenError):
        CutLoop(CircularArc((0.0, 0.0), 1.0, 0.0, FULL, orientation=-1), BOUNDARY_CUT)


def test_ellipse_mesh_exact_area_and_structure(ellipse, ellipse_mesh_n4):
    mesh = ellipse_mesh_n4
    assert validate_mesh(mesh) == []
    alpha = 0.8
    exact = math.pi * alpha**2 * 2.0 / math.sqrt(3.0)
    assert sum(e.area for e in mesh.elements) == pytest.approx(exact, rel=1e-13)
    assert mesh.h == pytest.approx(math.sqrt(2.0) / 2.0, rel=1e-12)
    for face in mesh.boundary_faces():
        assert isinstance(face.curve, EllipseArc)
    for face in mesh.interior_faces():
        assert face.left is not None and face.right is not None


def test_disc_mesh_regions_and_interface(disc_mesh_n4):
    mesh = disc_mesh_n4
    assert validate_mesh(mesh) == []
    inner = sum(e.area for e in mesh.elements if e.region == 1)
    outer = sum(e.area for e in mesh.elements if e.region == 0)
    assert inner == pytest.approx(math.pi * 0.64, rel=1e-12)
    assert outer == pytest.approx(math.pi * (1.0 - 0.64), rel=1e-12)
    interface = [
        f
        for f in mesh.faces
        if isinstance(f.curve, CircularArc) and abs(f.curve.radius - 0.8) < 1e-12
    ]
    assert interface
    for f in interface:
        regions = {mesh.element(f.left).region, mesh.element(f.right).region}
        assert regions == {0, 1}


def test_straighten_all_and_idempotence(ellipse_mesh_n4):
    flat = straighten(ellipse_mesh_n4, faces="all")
    assert all(f.is_straight for f in flat.faces)
    assert validate_mesh(flat) == []
    again = straighten(flat, faces="all")
    np.testing.assert_array_equal(again.vertices, flat.vertices)
    # chords cut the convex domain short
    assert sum(e.area for e in flat.elements) < sum(e.area for e in ellipse_mesh_n4.elements)
    for ea, eb in zip(flat.elements, ellipse_mesh_n4.elements):
        assert ea.region == eb.region
        assert ea.loop == eb.loop


def test_straighten_interface_only(disc_mesh_n4):
    part = straighten(disc_mesh_n4, faces="interface")
    assert validate_mesh(part) == []
    boundary_curved = [f for f in part.boundary_faces() if not f.is_straight]
    assert boundary_curved  # outer circle untouched
    for f in part.interior_faces():
        if isinstance(f.curve, CircularArc):
            assert False, "interface arcs should be chords now"


def test_mesh_sequence_levels(ellipse):
    pairs = mesh_sequence(ellipse.spec, 2)
    assert len(pairs) == 2
    (c0, s0), (c1, s1) = pairs
    assert c0.h == pytest.approx(2.0 * c1.h, rel=1e-12)
    assert len(c1.elements) > 3 * len(c0.elements)
    assert all(f.is_straight for f in s0.faces)


def test_generation_is_deterministic(ellipse):
    a = cut_cartesian(ellipse.spec)
    b = cut_cartesian(ellipse.spec)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert len(a.faces) == len(b.faces)
    for fa, fb in zip(a.faces, b.faces):
        assert (fa.left, fa.right, fa.orientation) == (fb.left, fb.right, fb.orientation)
        assert fa.curve.param_range == fb.curve.param_range
    for ea, eb in zip(a.elements, b.elements):
        assert ea.loop == eb.loop


def test_shared_cut_points_are_bitwise_identical(ellipse_mesh_n8):
    """Crossings are computed once per grid edge, so neighbouring cells agree.

    Straight-face endpoints must hit the vertex registry bit for bit; arc
    endpoints are recomputed from their angular parameters and may drift by a
    few ulps.  Re-derived crossings would instead show up as near-duplicate
    vertices.
    """
    mesh = ellipse_mesh_n8
    registry = {(x, y) for x, y in mesh.vertices}
    for face in mesh.faces:
        a, b = face.endpoints()
        for p in (a, b):
            if face.is_straight:
                assert (p[0], p[1]) in registry
            else:
                gap = np.min(np.linalg.norm(mesh.vertices - p, axis=1))
                assert gap <= 1e-13 * mesh.h
    from scipy.spatial.distance import pdist

    assert pdist(mesh.vertices).min() > 1e-6 * mesh.h
