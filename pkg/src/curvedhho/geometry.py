"""Mesh data model for 2D cells with exactly curved faces.

A mesh is built from three parametric curve types (segments, circular arcs,
ellipse arcs), faces that pair a curve with element incidence and a normal
orientation, and elements described by closed counterclockwise loops of
oriented faces.  Geometric queries are pure functions of the stored data;
per-element quantities (diameter, area, centroid) are cached at mesh
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "CurveDomainError",
    "IncidenceError",
    "StructureError",
    "MeshFormatError",
    "Segment",
    "CircularArc",
    "EllipseArc",
    "Face",
    "Element",
    "Mesh",
    "curve_eval",
    "rotate_minus90",
    "validate_mesh",
    "write_mesh",
    "read_mesh",
    "point_in_element",
]


class GeometryError(Exception):
    """Base class for mesh/geometry failures."""


class CurveDomainError(GeometryError):
    """Parameter outside the curve's parameter interval."""


class IncidenceError(GeometryError):
    """Face/element incidence queried or stored inconsistently."""


class StructureError(GeometryError):
    """Mesh structure invalid (open loop, negative area, bad reference)."""


class MeshFormatError(GeometryError):
    """Malformed mesh file."""


# 32-point Gauss-Legendre on [0,1]; used only for cached element quantities
# (area, centroid, boundary sampling).  The quadrature module owns the rules
# used by the discretization.
_gx, _gw = np.polynomial.legendre.leggauss(32)
_BDRY_NODES = 0.5 * (_gx + 1.0)
_BDRY_WEIGHTS = 0.5 * _gw


def rotate_minus90(v: np.ndarray) -> np.ndarray:
    """Rotate vectors by -90 degrees: (x, y) -> (y, -x).

    Applied to the travel tangent of a counterclockwise loop this gives the
    outward direction.
    """
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


# ---------------------------------------------------------------------------
# curves


@dataclass(eq=False)
class Segment:
    """Straight curve a + t*(b - a), t in [0, 1]."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(2)
        self.b = np.asarray(self.b, dtype=float).reshape(2)
        if not np.all(np.isfinite(self.a)) or not np.all(np.isfinite(self.b)):
            raise StructureError("segment endpoints must be finite")
        if np.allclose(self.a, self.b, rtol=0.0, atol=0.0):
            raise StructureError("degenerate segment: identical endpoints")

    @property
    def param_range(self) -> tuple[float, float]:
        return (0.0, 1.0)

    @property
    def is_straight(self) -> bool:
        return True

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + np.multiply.outer(t, self.b - self.a)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.b - self.a, t.shape + (2,)).copy()

    def subcurve(self, ta: float, tb: float) -> "Segment":
        return Segment(self.point(ta), self.point(tb))


@dataclass(eq=False)
class CircularArc:
    """Arc of a circle: center + radius*(cos(orientation*t), sin(orientation*t)).

    orientation=+1 traverses counterclockwise with increasing t.
    """

    center: np.ndarray
    radius: float
    t0: float
    t1: float
    orientation: int = 1

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        self.radius = float(self.radius)
        self.orientation = int(self.orientation)
        if self.radius <= 0.0:
            raise StructureError("circular arc needs radius > 0")
        if self.orientation not in (-1, 1):
            raise StructureError("orientation must be +1 or -1")
        if not self.t1 > self.t0:
            raise StructureError("arc needs t1 > t0")
        if self.t1 - self.t0 > 2.0 * math.pi + 1e-12:
            raise StructureError("arc parameter interval longer than full turn")

    @property
    def param_range(self) -> tuple[float, float]:
        return (self.t0, self.t1)

    @property
    def is_straight(self) -> bool:
        return False

    def point(self, t):
        t = np.asarray(t, dtype=float)
        s = self.orientation * t
        return self.center + self.radius * np.stack([np.cos(s), np.sin(s)], axis=-1)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        s = self.orientation * t
        return self.radius * self.orientation * np.stack([-np.sin(s), np.cos(s)], axis=-1)

    def subcurve(self, ta: float, tb: float) -> "CircularArc":
        return CircularArc(self.center, self.radius, ta, tb, self.orientation)


@dataclass(eq=False)
class EllipseArc:
    """Arc of an affine circle image: center + A @ (cos t, sin t).

    A must be invertible; det(A) > 0 gives counterclockwise traversal.
    """

    center: np.ndarray
    mat: np.ndarray
    t0: float
    t1: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        self.mat = np.asarray(self.mat, dtype=float).reshape(2, 2)
        if abs(np.linalg.det(self.mat)) < 1e-300:
            raise StructureError("ellipse matrix must be invertible")
        if not self.t1 > self.t0:
            raise StructureError("arc needs t1 > t0")
        if self.t1 - self.t0 > 2.0 * math.pi + 1e-12:
            raise StructureError("arc parameter interval longer than full turn")

    @property
    def param_range(self) -> tuple[float, float]:
        return (self.t0, self.t1)

    @property
    def is_straight(self) -> bool:
        return False

    def point(self, t):
        t = np.asarray(t, dtype=float)
        cs = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return self.center + cs @ self.mat.T

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        dcs = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        return dcs @ self.mat.T

    def subcurve(self, ta: float, tb: float) -> "EllipseArc":
        return EllipseArc(self.center, self.mat, ta, tb)


Curve = Segment | CircularArc | EllipseArc


def curve_eval(curve: Curve, t):
    """Evaluate position and (non-unit) tangent, checking the parameter domain."""
    t0, t1 = curve.param_range
    ts = np.asarray(t, dtype=float)
    tol = 1e-12 * max(t1 - t0, 1.0)
    if np.any(ts < t0 - tol) or np.any(ts > t1 + tol):
        raise CurveDomainError(
            f"parameter outside [{t0}, {t1}]: {ts[(ts < t0 - tol) | (ts > t1 + tol)]}"
        )
    return curve.point(ts), curve.velocity(ts)


def _curve_samples(curve: Curve) -> np.ndarray:
    """Endpoints plus Gauss nodes along the curve, for diameters and bboxes."""
    t0, t1 = curve.param_range
    ts = np.concatenate([[t0], t0 + (t1 - t0) * _BDRY_NODES, [t1]])
    return curve.point(ts)


# ---------------------------------------------------------------------------
# faces and elements


@dataclass(eq=False)
class Face:
    """A curve with element incidence.

    The stored unit normal is orientation * rotate_minus90(velocity)/|velocity|;
    `left` is the element whose outward normal equals the stored normal
    (it traverses the curve forward when orientation=+1), `right` the other,
    None on the boundary.
    """

    id: int
    curve: Curve
    left: int | None
    right: int | None
    orientation: int = 1

    def __post_init__(self):
        if self.orientation not in (-1, 1):
            raise StructureError("face orientation must be +1 or -1")
        if self.left is None and self.right is None:
            raise IncidenceError(f"face {self.id} has no incident element")

    @property
    def is_boundary(self) -> bool:
        return self.left is None or self.right is None

    @property
    def is_straight(self) -> bool:
        return self.curve.is_straight

    def unit_normal(self, t):
        v = self.curve.velocity(np.asarray(t, dtype=float))
        n = rotate_minus90(v)
        return self.orientation * n / np.linalg.norm(n, axis=-1, keepdims=True)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        t0, t1 = self.curve.param_range
        return self.curve.point(t0), self.curve.point(t1)


@dataclass(eq=False)
class Element:
    """Closed counterclockwise loop of oriented faces.

    loop entries are (face_id, forward); forward=True means the element
    traverses the curve with increasing parameter.  Cached quantities are
    filled in by Mesh.
    """

    id: int
    loop: tuple
    region: int = 0
    corner_vertices: tuple = ()
    # caches, set by Mesh:
    diameter: float = 0.0
    area: float = 0.0
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def n_faces(self) -> int:
        return len(self.loop)


class Mesh:
    """Immutable-by-convention container of vertices, faces, and elements."""

    def __init__(self, vertices, faces, elements, check: bool = True):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.faces = list(faces)
        self.elements = list(elements)
        self._face_by_id = {f.id: f for f in self.faces}
        self._elem_by_id = {e.id: e for e in self.elements}
        if len(self._face_by_id) != len(self.faces):
            raise StructureError("duplicate face ids")
        if len(self._elem_by_id) != len(self.elements):
            raise StructureError("duplicate element ids")
        for e in self.elements:
            self._fill_caches(e, check=check)

    # -- lookups ------------------------------------------------------------

    def face(self, fid: int) -> Face:
        try:
            return self._face_by_id[fid]
        except KeyError:
            raise StructureError(f"unknown face id {fid}") from None

    def element(self, eid: int) -> Element:
        try:
            return self._elem_by_id[eid]
        except KeyError:
            raise StructureError(f"unknown element id {eid}") from None

    @property
    def h(self) -> float:
        return max(e.diameter for e in self.elements)

    def boundary_faces(self):
        return [f for f in self.faces if f.is_boundary]

    def interior_faces(self):
        return [f for f in self.faces if not f.is_boundary]

    # -- orientation --------------------------------------------------------

    def outward_sign(self, element: Element, face: Face) -> int:
        """+1 if the stored face normal points out of `element`, else -1."""
        for fid, forward in element.loop:
            if fid == face.id:
                d = 1 if forward else -1
                return d * face.orientation
        raise IncidenceError(f"face {face.id} not on element {element.id}")

    def outward_normal(self, element: Element, face: Face, t):
        return self.outward_sign(element, face) * face.unit_normal(t)

    def element_loop(self, element: Element):
        """Yield (face, forward) pairs along the loop."""
        for fid, forward in element.loop:
            yield self.face(fid), forward

    def corner_points(self, element: Element) -> np.ndarray:
        pts = []
        for face, forward in self.element_loop(element):
            a, b = face.endpoints()
            pts.append(a if forward else b)
        return np.asarray(pts)

    # -- cached integrals ---------------------------------------------------

    def _boundary_nodes(self, element: Element):
        """Gauss sampling of the element boundary.

        Returns points (n,2), outward scaled normals (n,2) whose length is the
        line element |gamma'|, and weights (n,) on the parameter intervals.
        """
        pts, sn, wts = [], [], []
        for face, forward in self.element_loop(element):
            t0, t1 = face.curve.param_range
            ts = t0 + (t1 - t0) * _BDRY_NODES
            p = face.curve.point(ts)
            v = face.curve.velocity(ts)
            d = 1.0 if forward else -1.0
            pts.append(p)
            sn.append(d * rotate_minus90(v))
            wts.append((t1 - t0) * _BDRY_WEIGHTS)
        return np.concatenate(pts), np.concatenate(sn), np.concatenate(wts)

    def _fill_caches(self, element: Element, check: bool = True):
        if not element.loop:
            raise StructureError(f"element {element.id} has an empty loop")
        corners = self.corner_points(element)
        samples = [corners]
        for face, _fwd in self.element_loop(element):
            samples.append(_curve_samples(face.curve))
        samples = np.concatenate(samples)
        d2 = np.sum((samples[:, None, :] - samples[None, :, :]) ** 2, axis=-1)
        element.diameter = math.sqrt(float(d2.max()))

        if check:
            self._check_closure(element)

        pts, sn, wts = self._boundary_nodes(element)
        ref = corners[0]
        rel = pts - ref
        area = 0.5 * float(np.sum(wts * np.einsum("ij,ij->i", rel, sn)))
        if area <= 0.0:
            raise StructureError(
                f"element {element.id} loop is not counterclockwise (area {area:g})"
            )
        element.area = area
        cx = 0.5 * np.sum(wts * pts[:, 0] ** 2 * sn[:, 0])
        cy = 0.5 * np.sum(wts * pts[:, 1] ** 2 * sn[:, 1])
        element.centroid = np.array([cx, cy]) / area

    def _check_closure(self, element: Element):
        legs = list(self.element_loop(element))
        tol = 1e-12 * max(element.diameter, 1e-300)
        for i, (face, forward) in enumerate(legs):
            a, b = face.endpoints()
            end = b if forward else a
            nface, nforward = legs[(i + 1) % len(legs)]
            na, nb = nface.endpoints()
            start = na if nforward else nb
            if np.linalg.norm(end - start) > tol:
                raise StructureError(
                    f"element {element.id} loop is open between faces "
                    f"{face.id} and {nface.id}"
                )

    # -- independent area route (shoelace + arc-segment corrections) --------

    def shoelace_area(self, element: Element) -> float:
        corners = self.corner_points(element)
        x, y = corners[:, 0], corners[:, 1]
        area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        for face, forward in self.element_loop(element):
            c = face.curve
            if c.is_straight:
                continue
            t0, t1 = c.param_range
            dt = t1 - t0
            if isinstance(c, CircularArc):
                det = c.orientation * c.radius**2
            else:
                det = float(np.linalg.det(c.mat))
            d = 1.0 if forward else -1.0
            area += 0.5 * d * det * (dt - math.sin(dt))
        return area


def validate_mesh(mesh: Mesh) -> list[str]:
    """Run structural and geometric invariants; return violation messages."""
    bad: list[str] = []
    # face incidence
    usage: dict[int, list[tuple[int, int]]] = {f.id: [] for f in mesh.faces}
    for e in mesh.elements:
        for fid, forward in e.loop:
            if fid not in usage:
                bad.append(f"element {e.id} references unknown face {fid}")
                continue
            face = mesh.face(fid)
            usage[fid].append((e.id, (1 if forward else -1) * face.orientation))
    for f in mesh.faces:
        refs = usage[f.id]
        want = [eid for eid in (f.left, f.right) if eid is not None]
        if len(refs) != len(want):
            bad.append(
                f"face {f.id}: referenced by {len(refs)} element(s), "
                f"incidence stores {len(want)}"
            )
            continue
        for eid, sign in refs:
            owner = f.left if sign > 0 else f.right
            if owner != eid:
                bad.append(f"face {f.id}: element {eid} on wrong side")
        if not f.is_boundary and len(refs) == 2:
            if refs[0][1] * refs[1][1] != -1:
                bad.append(f"face {f.id}: both elements claim the same side")
    # unit normals orthogonal to tangents
    for f in mesh.faces:
        t0, t1 = f.curve.param_range
        ts = np.linspace(t0, t1, 7)
        n = f.unit_normal(ts)
        v = f.curve.velocity(ts)
        if np.max(np.abs(np.linalg.norm(n, axis=-1) - 1.0)) > 1e-13:
            bad.append(f"face {f.id}: normal not unit length")
        vn = np.abs(np.einsum("ij,ij->i", n, v) / np.linalg.norm(v, axis=-1))
        if np.max(vn) > 1e-13:
            bad.append(f"face {f.id}: normal not orthogonal to tangent")
    # element geometry
    for e in mesh.elements:
        if e.area <= 0.0:
            bad.append(f"element {e.id}: nonpositive area")
            continue
        ref = mesh.shoelace_area(e)
        if abs(e.area - ref) > 1e-10 * abs(ref):
            bad.append(
                f"element {e.id}: area routes disagree "
                f"(quadrature {e.area!r}, shoelace {ref!r})"
            )
        if e.corner_vertices:
            if any(v < 0 or v >= len(mesh.vertices) for v in e.corner_vertices):
                bad.append(f"element {e.id}: corner vertex id out of range")
    return bad


# ---------------------------------------------------------------------------
# convenience constructors


def polygon_mesh(vertices) -> Mesh:
    """Single-element mesh over a simple counterclockwise polygon."""
    pts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise StructureError("polygon needs at least 3 vertices")
    faces = [
        Face(i, Segment(pts[i], pts[(i + 1) % len(pts)]), 0, None, orientation=1)
        for i in range(len(pts))
    ]
    loop = tuple((i, True) for i in range(len(pts)))
    elem = Element(0, loop, corner_vertices=tuple(range(len(pts))))
    return Mesh(pts, faces, [elem])


# ---------------------------------------------------------------------------
# point location (debug sampling)


def _line_curve_hits(curve: Curve, p: np.ndarray, d: np.ndarray):
    """Intersections of the ray p + s*d with the curve.

    Returns a list of (s, t) pairs and a flag marking near-degenerate hits
    (grazing or endpoint) that should trigger a retry with another direction.
    """
    t0, t1 = curve.param_range
    hits, shaky = [], False
    if curve.is_straight:
        a, b = curve.a, curve.b
        m = np.array([[d[0], a[0] - b[0]], [d[1], a[1] - b[1]]])
        det = np.linalg.det(m)
        scale = max(np.linalg.norm(b - a), 1e-300)
        if abs(det) < 1e-12 * scale:
            return [], True
        s, u = np.linalg.solve(m, a - p)
        if -1e-12 < u < 1 + 1e-12 and s > 0:
            if u < 1e-9 or u > 1 - 1e-9:
                shaky = True
            hits.append((s, u))
        return hits, shaky
    if isinstance(curve, CircularArc):
        A = np.eye(2) * curve.radius
        A[1, 1] *= curve.orientation
        c = curve.center
    else:
        A = curve.mat
        c = curve.center
    Ainv = np.linalg.inv(A)
    q = Ainv @ (p - c)
    e = Ainv @ d
    # |q + s e|^2 = 1
    aa = e @ e
    bb = 2 * q @ e
    cc = q @ q - 1.0
    disc = bb * bb - 4 * aa * cc
    if abs(disc) < 1e-12 * max(bb * bb, abs(4 * aa * cc), 1e-30):
        return [], True
    if disc < 0:
        return [], False
    rt = math.sqrt(disc)
    for s in ((-bb - rt) / (2 * aa), (-bb + rt) / (2 * aa)):
        if s <= 0:
            continue
        u = q + s * e
        t = math.atan2(u[1], u[0])
        if isinstance(curve, CircularArc):
            t *= curve.orientation
        # unwrap into [t0, t1]
        while t < t0 - 1e-12:
            t += 2 * math.pi
        while t > t1 + 1e-12:
            t -= 2 * math.pi
        if t0 - 1e-12 <= t <= t1 + 1e-12:
            span = t1 - t0
            if t - t0 < 1e-9 * span or t1 - t < 1e-9 * span:
                shaky = True
            hits.append((s, t))
    return hits, shaky


def point_in_element(mesh: Mesh, element: Element, point) -> bool:
    """Parity ray cast against the element's faces.

    Retries with rotated ray directions when a hit is nearly tangent or lands
    too close to a face endpoint.
    """
    p = np.asarray(point, dtype=float).reshape(2)
    rng = np.random.default_rng(20240117)
    for _ in range(32):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        d = np.array([math.cos(ang), math.sin(ang)])
        count, ok = 0, True
        for face, _fwd in mesh.element_loop(element):
            hits, shaky = _line_curve_hits(face.curve, p, d)
            if shaky:
                ok = False
                break
            count += len(hits)
        if ok:
            return count % 2 == 1
    raise GeometryError("point location failed: all ray directions degenerate")


# ---------------------------------------------------------------------------
# mesh files
#
# Plain text, sections in order, '#' comments allowed:
#   VERTICES n          followed by: id x y
#   CURVES n            followed by: id SEGMENT ax ay bx by
#                                    id ARC cx cy r t0 t1 orient
#                                    id ELLIPSE cx cy a11 a12 a21 a22 t0 t1
#   FACES n             followed by: id curve_id left right orient   (-1 = none)
#   ELEMENTS n          followed by: id region nfaces fid dir fid dir ...
# Coordinates are written with 17 significant digits so a write/read round
# trip reproduces every float bit-exactly.


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_mesh(mesh: Mesh, path):
    lines = []
    lines.append(f"VERTICES {len(mesh.vertices)}")
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{i} {_fmt(x)} {_fmt(y)}")
    lines.append(f"CURVES {len(mesh.faces)}")
    for f in mesh.faces:
        c = f.curve
        if isinstance(c, Segment):
            lines.append(
                f"{f.id} SEGMENT {_fmt(c.a[0])} {_fmt(c.a[1])} {_fmt(c.b[0])} {_fmt(c.b[1])}"
            )
        elif isinstance(c, CircularArc):
            lines.append(
                f"{f.id} ARC {_fmt(c.center[0])} {_fmt(c.center[1])} {_fmt(c.radius)} "
                f"{_fmt(c.t0)} {_fmt(c.t1)} {c.orientation}"
            )
        else:
            m = c.mat
            lines.append(
                f"{f.id} ELLIPSE {_fmt(c.center[0])} {_fmt(c.center[1])} "
                f"{_fmt(m[0, 0])} {_fmt(m[0, 1])} {_fmt(m[1, 0])} {_fmt(m[1, 1])} "
                f"{_fmt(c.t0)} {_fmt(c.t1)}"
            )
    lines.append(f"FACES {len(mesh.faces)}")
    for f in mesh.faces:
        lf = -1 if f.left is None else f.left
        rt = -1 if f.right is None else f.right
        lines.append(f"{f.id} {f.id} {lf} {rt} {f.orientation}")
    lines.append(f"ELEMENTS {len(mesh.elements)}")
    for e in mesh.elements:
        parts = [str(e.id), str(e.region), str(len(e.loop))]
        for fid, forward in e.loop:
            parts.append(str(fid))
            parts.append("1" if forward else "-1")
        lines.append(" ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _tokens(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_mesh(path) -> Mesh:
    it = _tokens(path)

    def next_line(expect=None):
        try:
            lineno, toks = next(it)
        except StopIteration:
            raise MeshFormatError(f"{path}: unexpected end of file") from None
        if expect is not None and toks[0] != expect:
            raise MeshFormatError(f"{path}:{lineno}: expected {expect}, got {toks[0]}")
        return lineno, toks

    _, toks = next_line("VERTICES")
    nv = int(toks[1])
    vertices = np.zeros((nv, 2))
    for _ in range(nv):
        lineno, t = next_line()
        if len(t) != 3:
            raise MeshFormatError(f"{path}:{lineno}: vertex line needs 'id x y'")
        vertices[int(t[0])] = [float(t[1]), float(t[2])]

    _, toks = next_line("CURVES")
    nc = int(toks[1])
    curves: dict[int, Curve] = {}
    for _ in range(nc):
        lineno, t = next_line()
        cid, kind = int(t[0]), t[1]
        try:
            if kind == "SEGMENT":
                curves[cid] = Segment((float(t[2]), float(t[3])), (float(t[4]), float(t[5])))
            elif kind == "ARC":
                curves[cid] = CircularArc(
                    (float(t[2]), float(t[3])), float(t[4]), float(t[5]), float(t[6]), int(t[7])
                )
            elif kind == "ELLIPSE":
                curves[cid] = EllipseArc(
                    (float(t[2]), float(t[3])),
                    ((float(t[4]), float(t[5])), (float(t[6]), float(t[7]))),
                    float(t[8]),
                    float(t[9]),
                )
            else:
                raise MeshFormatError(f"{path}:{lineno}: unknown curve type {kind}")
        except (IndexError, ValueError) as exc:
            raise MeshFormatError(f"{path}:{lineno}: bad curve record ({exc})") from None

    _, toks = next_line("FACES")
    nf = int(toks[1])
    faces = []
    for _ in range(nf):
        lineno, t = next_line()
        if len(t) != 5:
            raise MeshFormatError(f"{path}:{lineno}: face line needs 5 fields")
        fid, cid, lf, rt, orient = (int(v) for v in t)
        if cid not in curves:
            raise MeshFormatError(f"{path}:{lineno}: face {fid} references unknown curve {cid}")
        faces.append(
            Face(
                fid,
                curves[cid],
                None if lf < 0 else lf,
                None if rt < 0 else rt,
                orient,
            )
        )

    _, toks = next_line("ELEMENTS")
    ne = int(toks[1])
    elements = []
    for _ in range(ne):
        lineno, t = next_line()
        eid, region, nfl = int(t[0]), int(t[1]), int(t[2])
        if len(t) != 3 + 2 * nfl:
            raise MeshFormatError(f"{path}:{lineno}: element {eid} face list truncated")
        loop = tuple(
            (int(t[3 + 2 * i]), int(t[4 + 2 * i]) > 0) for i in range(nfl)
        )
        elements.append(Element(eid, loop, region=region))
    return Mesh(vertices, faces, elements)
