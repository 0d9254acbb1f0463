"""Quadrature on curved faces and curved 2D cells.

Edge rules push a 1D Gauss-Legendre rule through a face parameterization.
Element rules use the inverse-divergence construction: with a base point nu,

    int_T v = int_{dT} (x - nu) . n(x) int_0^1 t v(t x + (1 - t) nu) dt dS(x)

so a cell integral becomes a boundary rule tensorized with a radial rule on
[0,1] carrying the extra factor t.  Straight faces whose supporting line
passes through nu contribute nothing and are skipped, which is what makes the
point count (|faces| - 2) * N * M on a polygon with nu at a vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Element, Face, Mesh, Segment

__all__ = [
    "QuadratureError",
    "Rule1D",
    "EdgeRule",
    "ElemRule",
    "gauss_legendre",
    "edge_rule",
    "choose_base_vertex",
    "element_rule",
    "integrate",
    "dump_rule_csv",
]


class QuadratureError(Exception):
    pass


@dataclass(frozen=True)
class Rule1D:
    """Nodes and weights on [0, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.nodes)


def gauss_legendre(n: int) -> Rule1D:
    """n-point Gauss-Legendre rule mapped to [0, 1] (exact to degree 2n-1)."""
    if n < 1:
        raise QuadratureError("need at least one node")
    x, w = np.polynomial.legendre.leggauss(n)
    return Rule1D(0.5 * (x + 1.0), 0.5 * w)


@dataclass(frozen=True)
class EdgeRule:
    """Quadrature on one face.

    points/weights integrate dS along the curve; normals store the face's own
    unit normal (face orientation, not any element's outward side) at the
    nodes; params are the curve parameters of the nodes.
    """

    face_id: int
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    params: np.ndarray

    @property
    def n(self) -> int:
        return len(self.weights)


def edge_rule(face: Face, rule: Rule1D) -> EdgeRule:
    t0, t1 = face.curve.param_range
    ts = t0 + (t1 - t0) * rule.nodes
    pts = face.curve.point(ts)
    vel = face.curve.velocity(ts)
    speed = np.linalg.norm(vel, axis=-1)
    wts = (t1 - t0) * rule.weights * speed
    return EdgeRule(face.id, pts, wts, face.unit_normal(ts), ts)


def choose_base_vertex(element: Element, mesh: Mesh) -> np.ndarray:
    """Corner meeting the most straight faces; ties go to the lowest index.

    The index used for tie-breaking is the element's corner vertex id when the
    mesh stores one, otherwise the corner's position in the loop.
    """
    legs = list(mesh.element_loop(element))
    n = len(legs)
    counts = np.zeros(n, dtype=int)
    for i, (face, _fwd) in enumerate(legs):
        # leg i runs from corner i to corner (i+1) % n
        if face.is_straight:
            counts[i] += 1
            counts[(i + 1) % n] += 1
    order = (
        list(element.corner_vertices)
        if len(element.corner_vertices) == n
        else list(range(n))
    )
    best = min(range(n), key=lambda i: (-counts[i], order[i]))
    corners = mesh.corner_points(element)
    return corners[best]


def element_rule(
    element: Element,
    mesh: Mesh,
    edge_rules: dict[int, EdgeRule],
    radial: Rule1D,
    base_point=None,
) -> "ElemRule":
    if base_point is None:
        base_point = choose_base_vertex(element, mesh)
    nu = np.asarray(base_point, dtype=float).reshape(2)
    tol = 1e-12 * max(element.diameter, 1e-300)
    pts_blocks, wts_blocks = [], []
    min_flux = math.inf
    for face, _fwd in mesh.element_loop(element):
        er = edge_rules[face.id]
        sign = mesh.outward_sign(element, face)
        if face.is_straight:
            # (x - nu) . n is constant along the face; zero means the line
            # through the face contains nu and the whole face drops out.
            a, b = face.endpoints()
            nrm = sign * face.unit_normal(np.array([0.5]))[0]
            if abs((a - nu) @ nrm) <= tol and abs((b - nu) @ nrm) <= tol:
                continue
        flux = np.einsum("ij,ij->i", er.points - nu, sign * er.normals)
        min_flux = min(min_flux, float(flux.min()))
        # radial factor t: weights t_j * w_j, points t_j x_i + (1 - t_j) nu
        pe = (
            radial.nodes[:, None, None] * er.points[None, :, :]
            + (1.0 - radial.nodes)[:, None, None] * nu
        )
        we = (radial.weights * radial.nodes)[:, None] * (er.weights * flux)[None, :]
        pts_blocks.append(pe.reshape(-1, 2))
        wts_blocks.append(we.reshape(-1))
    if not pts_blocks:
        raise QuadratureError(f"element {element.id}: every face was skipped")
    points = np.concatenate(pts_blocks)
    weights = np.concatenate(wts_blocks)
    # star_ok: (x - nu) . n_T >= 0 on the sampled boundary means the radial
    # segments from nu stay inside the element.
    star_ok = min_flux >= -1e-12 * max(element.diameter, 1.0) ** 2
    return ElemRule(element.id, points, weights, nu, star_ok)


@dataclass(frozen=True)
class ElemRule:
    element_id: int
    points: np.ndarray
    weights: np.ndarray
    base_point: np.ndarray
    star_ok: bool

    @property
    def n(self) -> int:
        return len(self.weights)


def integrate(rule, f):
    """Apply a rule to a callable on (n,2) arrays or to precomputed values."""
    vals = f(rule.points) if callable(f) else np.asarray(f, dtype=float)
    if vals.shape[-1] != rule.weights.shape[0] and vals.shape[0] == rule.weights.shape[0]:
        vals = np.moveaxis(vals, 0, -1)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand produced non-finite values")
    return vals @ rule.weights


def dump_rule_csv(rule, path):
    """Write nodes and weights as 'x,y,weight' lines for external checks."""
    with open(path, "w") as fh:
        fh.write("x,y,weight\n")
        for (x, y), w in zip(rule.points, rule.weights):
            fh.write(f"{x:.17g},{y:.17g},{w:.17g}\n")
