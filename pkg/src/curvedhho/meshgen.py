"""Cut-Cartesian mesh generation.

A uniform n x n grid over a bounding box is cut along closed conic loops
(full circles or ellipses, counterclockwise).  Boundary loops discard the
outside; interface loops keep both sides and tag regions.  Intersections of
loops with grid lines are computed once per grid edge from the analytic
quadratic, so the two cells sharing an edge split it into bitwise identical
pieces and the resulting faces conform.  Arcs are split at every grid
crossing; cells cut into several components yield one element per component.

Anything numerically ambiguous (grazing tangency, a crossing at a grid
corner, a sliver element below the area threshold) raises DegenerateCutError
with the advice to shift or refine the grid rather than producing a mesh of
uncertain topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CircularArc, EllipseArc, Element, Face, Mesh, Segment

__all__ = [
    "MeshGenError",
    "CutSpecError",
    "DegenerateCutError",
    "BOUNDARY_CUT",
    "INTERFACE_CUT",
    "CutLoop",
    "CutSpec",
    "cut_cartesian",
    "straighten",
    "mesh_sequence",
]

BOUNDARY_CUT = "boundary"
INTERFACE_CUT = "interface"

_TOL_DISC = 1e-12  # relative discriminant threshold for grazing cuts
_TOL_S = 1e-12  # crossing-at-corner threshold, in edge-length units


class MeshGenError(Exception):
    pass


class CutSpecError(MeshGenError):
    pass


class DegenerateCutError(MeshGenError):
    """Cut is numerically ambiguous; shift the grid box or change n."""


@dataclass(eq=False)
class CutLoop:
    """A full counterclockwise conic loop with a cutting mode."""

    curve: CircularArc | EllipseArc
    mode: str

    def __post_init__(self):
        if self.mode not in (BOUNDARY_CUT, INTERFACE_CUT):
            raise CutSpecError(f"unknown cut mode {self.mode!r}")
        c = self.curve
        t0, t1 = c.param_range
        if abs(t0) > 1e-12 or abs((t1 - t0) - 2.0 * math.pi) > 1e-12:
            raise CutSpecError("loop curve must be parameterized over [0, 2*pi]")
        if isinstance(c, CircularArc):
            if c.orientation != 1:
                raise CutSpecError("loop must run counterclockwise")
            self._inv = np.eye(2) / c.radius
        elif isinstance(c, EllipseArc):
            if np.linalg.det(c.mat) <= 0.0:
                raise CutSpecError("loop must run counterclockwise (det > 0)")
            self._inv = np.linalg.inv(c.mat)
        else:
            raise CutSpecError("loops must be circular or ellipse arcs")

    def level(self, pts) -> np.ndarray:
        """Q(x) with Q < 0 strictly inside the loop."""
        u = (np.atleast_2d(np.asarray(pts, dtype=float)) - self.curve.center) @ self._inv.T
        return np.einsum("ij,ij->i", u, u) - 1.0

    def param_of(self, point) -> float:
        u = self._inv @ (np.asarray(point, dtype=float) - self.curve.center)
        return math.atan2(u[1], u[0]) % (2.0 * math.pi)

    def bbox(self):
        A = self._area_mat()
        hx = math.hypot(A[0, 0], A[0, 1])
        hy = math.hypot(A[1, 0], A[1, 1])
        c = self.curve.center
        return (c[0] - hx, c[1] - hy), (c[0] + hx, c[1] + hy)

    def _area_mat(self) -> np.ndarray:
        c = self.curve
        if isinstance(c, CircularArc):
            return np.eye(2) * c.radius
        return c.mat


@dataclass(eq=False)
class CutSpec:
    """Grid box, resolution, loops, and the sliver-rejection threshold."""

    box: tuple  # ((x0, y0), (x1, y1))
    n: int
    loops: list
    eps_cell: float = 1e-8

    def __post_init__(self):
        (x0, y0), (x1, y1) = self.box
        if not (x1 > x0 and y1 > y0):
            raise CutSpecError("empty bounding box")
        if self.n < 1:
            raise CutSpecError("need at least one cell per side")
        # pairwise disjointness, sampled: the cutter assumes loops never touch
        ts = np.linspace(0.0, 2.0 * math.pi, 257)
        for i, a in enumerate(self.loops):
            for b in self.loops[i + 1 :]:
                q = b.level(a.curve.point(ts))
                if q.min() < 0.0 < q.max():
                    raise CutSpecError("cut loops intersect each other")


@dataclass(eq=False)
class _Piece:
    """Directed boundary piece of a region."""

    kind: str  # "seg" | "arc"
    start: tuple
    end: tuple
    # seg fields
    edge: tuple = None  # ("h"|"v", i, j)
    s0: float = 0.0
    s1: float = 0.0
    # arc fields
    loop: int = -1
    ta: float = 0.0
    tb: float = 0.0
    forward: bool = True

    def midpoint(self, cutter) -> np.ndarray:
        if self.kind == "seg":
            return cutter.edge_point(self.edge, 0.5 * (self.s0 + self.s1))
        return cutter.loops[self.loop].curve.point(0.5 * (self.ta + self.tb))

    def reversed(self) -> "_Piece":
        p = _Piece(**self.__dict__)
        p.start, p.end = self.end, self.start
        if self.kind == "seg":
            p.s0, p.s1 = self.s1, self.s0
        else:
            p.forward = not self.forward
        return p


@dataclass(eq=False)
class _Region:
    cell: tuple
    pieces: list
    sides: dict = field(default_factory=dict)  # loop index -> -1 (inside) | +1


@dataclass(eq=False)
class _Crossing:
    point: tuple
    s: float
    t: float


class _Cutter:
    def __init__(self, spec: CutSpec):
        self.spec = spec
        self.loops = list(spec.loops)
        (x0, y0), (x1, y1) = spec.box
        self.xs = np.linspace(x0, x1, spec.n + 1)
        self.ys = np.linspace(y0, y1, spec.n + 1)
        self.cell_area = (self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0])
        # crossings[(edge key, loop index)] = [_Crossing ...] sorted by s
        self.crossings: dict = {}
        self._find_crossings()
        self._check_loop_placement()

    def _check_loop_placement(self):
        """Loops must be resolved by the grid or avoid it entirely.

        A loop with grid crossings must fit strictly inside the box (its cut
        is then fully represented).  A loop with no crossings must not fit
        inside the box: it is then uniformly inside or outside every cell
        (enclosing the box, or disjoint from it), which is representable; a
        crossing-free loop inside the box would hide within a single cell.
        """
        (x0, y0), (x1, y1) = self.spec.box
        for li, lp in enumerate(self.loops):
            crossed = any(key[1] == li for key in self.crossings)
            (lx0, ly0), (lx1, ly1) = lp.bbox()
            inside = x0 < lx0 and lx1 < x1 and y0 < ly0 and ly1 < y1
            if crossed and not inside:
                raise CutSpecError("loop crosses the grid boundary; enlarge the box")
            if not crossed and inside:
                raise CutSpecError("grid too coarse: loop hides inside one cell")

    # -- grid helpers --------------------------------------------------------

    def edge_endpoints(self, edge):
        axis, i, j = edge
        if axis == "h":
            return (
                np.array([self.xs[i], self.ys[j]]),
                np.array([self.xs[i + 1], self.ys[j]]),
            )
        return (
            np.array([self.xs[i], self.ys[j]]),
            np.array([self.xs[i], self.ys[j + 1]]),
        )

    def edge_point(self, edge, s) -> np.ndarray:
        a, b = self.edge_endpoints(edge)
        return a + s * (b - a)

    def _on_rim(self, a, b) -> bool:
        for coord, lo, hi in ((0, self.xs[0], self.xs[-1]), (1, self.ys[0], self.ys[-1])):
            if a[coord] == b[coord] and a[coord] in (lo, hi):
                return True
        return False

    def _edges(self):
        n = self.spec.n
        for j in range(n + 1):
            for i in range(n):
                yield ("h", i, j)
        for j in range(n):
            for i in range(n + 1):
                yield ("v", i, j)

    # -- phase 1: analytic crossings ----------------------------------------

    def _find_crossings(self):
        for edge in self._edges():
            a, b = self.edge_endpoints(edge)
            for li, lp in enumerate(self.loops):
                found = self._segment_loop_crossings(a, b, lp, edge)
                if found:
                    self.crossings[(edge, li)] = found

    def _segment_loop_crossings(self, a, b, lp: CutLoop, edge):
        u0 = lp._inv @ (a - lp.curve.center)
        e = lp._inv @ (b - a)
        qa = e @ e
        qb = 2.0 * (u0 @ e)
        qc = u0 @ u0 - 1.0
        disc = qb * qb - 4.0 * qa * qc
        scale = max(qb * qb, abs(4.0 * qa * qc), 1e-30)
        if abs(disc) < _TOL_DISC * scale:
            # only degenerate if the grazing point actually lies on the edge
            s = -qb / (2.0 * qa)
            if -0.1 < s < 1.1:
                raise DegenerateCutError(
                    f"loop grazes grid edge {edge}; shift the grid box"
                )
            return []
        if disc < 0.0:
            return []
        rt = math.sqrt(disc)
        out = []
        for s in ((-qb - rt) / (2.0 * qa), (-qb + rt) / (2.0 * qa)):
            if abs(s) < _TOL_S or abs(s - 1.0) < _TOL_S:
                raise DegenerateCutError(
                    f"loop crosses grid corner at edge {edge}; shift the grid box"
                )
            if 0.0 < s < 1.0:
                pt = a + s * (b - a)
                out.append(_Crossing(point=(float(pt[0]), float(pt[1])), s=s, t=lp.param_of(pt)))
        out.sort(key=lambda c: c.s)
        return out

    # -- phase 2/3: per-cell regions ------------------------------------------

    def _cell_pieces(self, i, j):
        corners = [
            (float(self.xs[i]), float(self.ys[j])),
            (float(self.xs[i + 1]), float(self.ys[j])),
            (float(self.xs[i + 1]), float(self.ys[j + 1])),
            (float(self.xs[i]), float(self.ys[j + 1])),
        ]
        walk = [
            (("h", i, j), corners[0], corners[1], 0.0, 1.0),
            (("v", i + 1, j), corners[1], corners[2], 0.0, 1.0),
            (("h", i, j + 1), corners[2], corners[3], 1.0, 0.0),
            (("v", i, j), corners[3], corners[0], 1.0, 0.0),
        ]
        return [
            _Piece(kind="seg", start=s, end=e, edge=edge, s0=sa, s1=sb)
            for edge, s, e, sa, sb in walk
        ]

    def _piece_crossings(self, piece: _Piece, li: int):
        found = self.crossings.get((piece.edge, li), [])
        lo, hi = min(piece.s0, piece.s1), max(piece.s0, piece.s1)
        out = []
        for cr in found:
            if lo + _TOL_S < cr.s < hi - _TOL_S:
                out.append(cr)
            elif lo - _TOL_S <= cr.s <= lo + _TOL_S or hi - _TOL_S <= cr.s <= hi + _TOL_S:
                raise DegenerateCutError(
                    f"crossing lands on an existing split point on edge {piece.edge}; "
                    "shift the grid box"
                )
        return out

    def _classify(self, pts, lp: CutLoop) -> int:
        q = lp.level(pts)
        idx = int(np.argmax(np.abs(q)))
        if q[idx] == 0.0:
            raise DegenerateCutError("region lies on a cut loop; shift the grid box")
        return -1 if q[idx] < 0.0 else 1

    def _point_in_region(self, pt, reg: _Region) -> bool:
        (i, j) = reg.cell
        tol = 1e-9 * max(self.xs[1] - self.xs[0], self.ys[1] - self.ys[0])
        if not (self.xs[i] - tol <= pt[0] <= self.xs[i + 1] + tol):
            return False
        if not (self.ys[j] - tol <= pt[1] <= self.ys[j + 1] + tol):
            return False
        for li, side in reg.sides.items():
            if self.loops[li].level(pt)[0] * side <= 0.0:
                return False
        return True

    def _cut_region(self, reg: _Region, li: int):
        """Split one region along loop li; returns [(side, child region)]."""
        lp = self.loops[li]
        events = []
        kept_any_arc = False
        for piece in reg.pieces:
            if piece.kind == "seg":
                events.extend((piece, cr) for cr in self._piece_crossings(piece, li))
            else:
                kept_any_arc = True
                other = self.loops[piece.loop]
                samples = np.array(
                    [piece.start, piece.end, other.curve.point(0.5 * (piece.ta + piece.tb))]
                )
                q = lp.level(samples)
                if q.min() < 0.0 < q.max():
                    raise DegenerateCutError("cut loops intersect inside a cell")
        if not events:
            mids = np.array([p.midpoint(self) for p in reg.pieces])
            side = self._classify(mids, lp)
            reg.sides[li] = side
            return [(side, reg)]

        # split seg pieces at the events, classify every sub-piece
        sided = {-1: [], 1: []}
        by_piece: dict = {}
        for piece, cr in events:
            by_piece.setdefault(id(piece), (piece, []))[1].append(cr)
        for piece in reg.pieces:
            if piece.kind != "seg" or id(piece) not in by_piece:
                mid = piece.midpoint(self)
                side = self._classify(mid[None, :], lp)
                sided[side].append(piece)
                continue
            _, crs = by_piece[id(piece)]
            crs = sorted(crs, key=lambda c: c.s, reverse=bool(piece.s0 > piece.s1))
            stops = [(piece.s0, piece.start)] + [(c.s, c.point) for c in crs] + [
                (piece.s1, piece.end)
            ]
            for (sa, pa), (sb, pb) in zip(stops[:-1], stops[1:]):
                sub = _Piece(kind="seg", start=pa, end=pb, edge=piece.edge, s0=sa, s1=sb)
                side = self._classify(sub.midpoint(self)[None, :], lp)
                sided[side].append(sub)

        # arcs of loop li inside this region
        recs = sorted((cr for _p, cr in events), key=lambda c: c.t)
        if len(recs) % 2 == 1 and not kept_any_arc:
            raise DegenerateCutError("odd crossing count; shift the grid box")
        arcs = []
        for r0, r1 in zip(recs, recs[1:] + recs[:1]):
            ta, tb = r0.t, r1.t
            if tb <= ta:
                tb += 2.0 * math.pi
            mid = lp.curve.point(0.5 * (ta + tb))
            if not self._point_in_region(mid, reg):
                continue
            arcs.append(
                _Piece(kind="arc", start=r0.point, end=r1.point, loop=li, ta=ta, tb=tb)
            )
        children = []
        for side in (-1, 1):
            pieces = list(sided[side])
            pieces += [a if side == -1 else a.reversed() for a in arcs]
            for cycle in self._stitch(pieces, reg):
                child = _Region(cell=reg.cell, pieces=cycle, sides=dict(reg.sides))
                child.sides[li] = side
                children.append((side, child))
        return children

    def _stitch(self, pieces, reg):
        if not pieces:
            return []
        by_start: dict = {}
        for p in sorted(pieces, key=lambda p: (p.start, p.end)):
            if p.start in by_start:
                raise DegenerateCutError(
                    f"ambiguous stitching in cell {reg.cell}; shift the grid box"
                )
            by_start[p.start] = p
        cycles, used = [], set()
        for p in sorted(pieces, key=lambda p: (p.start, p.end)):
            if id(p) in used:
                continue
            cycle, cur = [], p
            while True:
                cycle.append(cur)
                used.add(id(cur))
                nxt = by_start.get(cur.end)
                if nxt is None:
                    raise DegenerateCutError(
                        f"open boundary chain in cell {reg.cell}; shift the grid box"
                    )
                if nxt is p:
                    break
                if id(nxt) in used:
                    raise DegenerateCutError(
                        f"tangled boundary chain in cell {reg.cell}; shift the grid box"
                    )
                cur = nxt
            cycles.append(cycle)
        return cycles

    # -- phase 4: assemble the mesh -------------------------------------------

    def build(self) -> Mesh:
        order = sorted(
            range(len(self.loops)), key=lambda li: self.loops[li].mode != BOUNDARY_CUT
        )
        regions = []
        n = self.spec.n
        for j in range(n):
            for i in range(n):
                live = [_Region(cell=(i, j), pieces=self._cell_pieces(i, j))]
                for li in order:
                    nxt = []
                    for reg in live:
                        for side, child in self._cut_region(reg, li):
                            if side > 0 and self.loops[li].mode == BOUNDARY_CUT:
                                continue
                            nxt.append(child)
                    live = nxt
                regions.extend(live)
        if not regions:
            raise CutSpecError("no elements inside the domain")

        interface_loops = [li for li in range(len(self.loops)) if self.loops[li].mode == INTERFACE_CUT]
        vertex_ids: dict = {}
        vertices = []
        face_info: dict = {}  # key -> dict(curve=..., left=..., right=..., id=...)
        elements = []

        def vid(pt):
            if pt not in vertex_ids:
                vertex_ids[pt] = len(vertices)
                vertices.append(pt)
            return vertex_ids[pt]

        for eid, reg in enumerate(regions):
            loop_entries = []
            corner_vs = []
            for piece in reg.pieces:
                corner_vs.append(vid(piece.start))
                if piece.kind == "seg":
                    a, b = sorted([piece.start, piece.end])
                    key = ("seg", a, b)
                    forward = piece.start == a
                    curve = lambda a=a, b=b: Segment(a, b)
                else:
                    key = ("arc", piece.loop, piece.ta, piece.tb)
                    forward = piece.forward
                    curve = lambda p=piece: self.loops[p.loop].curve.subcurve(p.ta, p.tb)
                info = face_info.setdefault(
                    key, {"curve": curve, "left": None, "right": None, "id": len(face_info)}
                )
                side = "left" if forward else "right"
                if info[side] is not None:
                    raise DegenerateCutError(
                        f"face claimed twice from the same side in cell {reg.cell}"
                    )
                info[side] = eid
                loop_entries.append((info["id"], forward))
            region_tag = 0
            for b, li in enumerate(interface_loops):
                if reg.sides.get(li, 1) < 0:
                    region_tag |= 1 << b
            elements.append(
                Element(
                    eid,
                    tuple(loop_entries),
                    region=region_tag,
                    corner_vertices=tuple(corner_vs),
                )
            )

        faces = []
        for key, info in sorted(face_info.items(), key=lambda kv: kv[1]["id"]):
            one_sided = info["left"] is None or info["right"] is None
            if one_sided and key[0] == "seg" and not self._on_rim(key[1], key[2]):
                # every interior grid piece must be shared by two elements;
                # a lone one means the cut produced inconsistent topology
                raise DegenerateCutError(
                    f"unmatched straight face {key[1]}-{key[2]}; shift the grid box"
                )
            faces.append(
                Face(info["id"], info["curve"](), info["left"], info["right"], orientation=1)
            )

        mesh = Mesh(np.asarray(vertices, dtype=float), faces, elements)
        for e in mesh.elements:
            if e.area < self.spec.eps_cell * self.cell_area:
                raise DegenerateCutError(
                    f"element {e.id} in cell {regions[e.id].cell} has area "
                    f"{e.area:.3e} below the sliver threshold; shift the grid box"
                )
        return mesh


def cut_cartesian(spec: CutSpec) -> Mesh:
    return _Cutter(spec).build()


def straighten(mesh: Mesh, faces: str = "all") -> Mesh:
    """Replace curved faces by the segments joining their endpoints.

    faces="all" straightens every curved face; faces="interface" only the
    interior ones, leaving boundary faces exactly curved.  Face and element
    ids, incidence, loops, and region tags are preserved; cached element
    quantities are recomputed.  Idempotent.
    """
    if faces not in ("all", "interface"):
        raise ValueError("faces must be 'all' or 'interface'")
    new_faces = []
    for f in mesh.faces:
        if f.curve.is_straight or (faces == "interface" and f.is_boundary):
            curve = f.curve
        else:
            a, b = f.endpoints()
            curve = Segment(a, b)
        new_faces.append(Face(f.id, curve, f.left, f.right, f.orientation))
    new_elements = [
        Element(e.id, e.loop, region=e.region, corner_vertices=e.corner_vertices)
        for e in mesh.elements
    ]
    return Mesh(mesh.vertices.copy(), new_faces, new_elements)


def mesh_sequence(spec: CutSpec, levels: int, straighten_faces: str = "all"):
    """Doubling-resolution sequence of (curved, straightened) mesh pairs."""
    out = []
    for lvl in range(levels):
        s = CutSpec(
            box=spec.box, n=spec.n * 2**lvl, loops=spec.loops, eps_cell=spec.eps_cell
        )
        curved = cut_cartesian(s)
        out.append((curved, straighten(curved, faces=straighten_faces)))
    return out
