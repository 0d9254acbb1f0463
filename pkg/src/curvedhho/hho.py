"""Local hybrid high-order operators on curved cells.

Unknowns on one element: a polynomial of degree k in the cell plus one
coefficient vector per face in that face's unknown space.  The potential
reconstruction p of degree k+1 solves

    <K grad p, grad w>_T = -<v_T, div(K grad w)>_T + <v_F, (K grad w).n_T>_dT

for all w of degree k+1, closed by int_T p = int_T v_T.  The stabilisation
penalizes v_T - pi0_T(p v) in the K-weighted H1 product and the face gaps
v_F - pi0_F(p v) in the boundary product weighted by K n.n, scaled by 1/h_T.
The local bilinear form is A_T = P^T G_K P + S; its kernel is exactly the
interpolate of the constant function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Element, Face, Mesh
from .quadrature import EdgeRule, ElemRule, edge_rule, element_rule, gauss_legendre
from .spaces import (
    CellBasis,
    FaceSpace,
    build_cell_basis,
    build_face_space,
    l2_project_cell,
    l2_project_face,
    space_dim,
)

__all__ = [
    "Diffusion",
    "FaceBlock",
    "ElementContext",
    "LocalOperators",
    "Discretization",
    "build_discretization",
    "interpolate",
    "potential_reconstruction",
    "stabilisation",
    "local_stiffness",
    "local_seminorm",
    "constant_dofs",
    "dump_local_operators",
]


@dataclass(eq=False)
class Diffusion:
    """Piecewise constant symmetric positive definite tensor, one per region."""

    tensors: dict

    def __post_init__(self):
        clean = {}
        for region, K in self.tensors.items():
            K = np.asarray(K, dtype=float).reshape(2, 2)
            if not np.allclose(K, K.T, rtol=0.0, atol=1e-14 * np.abs(K).max()):
                raise ValueError(f"diffusion tensor for region {region} not symmetric")
            ev = np.linalg.eigvalsh(K)
            if ev[0] <= 0.0:
                raise ValueError(f"diffusion tensor for region {region} not positive definite")
            clean[region] = K
        self.tensors = clean

    @classmethod
    def identity(cls) -> "Diffusion":
        return cls({0: np.eye(2)})

    def on(self, element: Element) -> np.ndarray:
        try:
            return self.tensors[element.region]
        except KeyError:
            raise KeyError(f"no diffusion tensor for region {element.region}") from None


@dataclass(eq=False)
class FaceBlock:
    """Per-face data as seen from one element."""

    face: Face
    space: FaceSpace
    rule: EdgeRule
    sign: int  # outward sign: outward normal = sign * rule.normals

    @property
    def dim(self) -> int:
        return self.space.dim


@dataclass(eq=False)
class ElementContext:
    element: Element
    k: int
    K: np.ndarray
    cell_basis: CellBasis  # degree k+1
    cell_dim: int  # dim P^k
    faces: list  # FaceBlock in loop order
    rule: ElemRule

    @property
    def ndof(self) -> int:
        return self.cell_dim + sum(fb.dim for fb in self.faces)

    def face_slices(self):
        off = self.cell_dim
        for fb in self.faces:
            yield fb, slice(off, off + fb.dim)
            off += fb.dim


@dataclass(eq=False)
class LocalOperators:
    P: np.ndarray  # reconstruction, dim P^{k+1} x ndof
    S: np.ndarray  # stabilisation, ndof x ndof
    A: np.ndarray  # P^T GK P + S
    GK: np.ndarray  # K-weighted gradient Gram of the degree-(k+1) basis


def interpolate(ctx: ElementContext, v) -> np.ndarray:
    """Element L2 projection on the cell, face L2 projections on each face."""
    dofs = np.zeros(ctx.ndof)
    dofs[: ctx.cell_dim] = l2_project_cell(v, ctx.cell_basis, ctx.rule, degree=ctx.k)
    for fb, sl in ctx.face_slices():
        dofs[sl] = l2_project_face(v, fb.space, fb.rule)
    return dofs


def constant_dofs(ctx: ElementContext, value: float = 1.0) -> np.ndarray:
    return interpolate(ctx, lambda p: np.full(len(p), float(value)))


def potential_reconstruction(ctx: ElementContext) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruction matrix P and the K-weighted gradient Gram GK.

    Columns of P map local dof vectors to degree-(k+1) cell coefficients.
    """
    basis, K, rule = ctx.cell_basis, ctx.K, ctx.rule
    n = basis.dim
    g = basis.grad(rule.points)
    Kg = np.einsum("cd,ipd->ipc", K, g)
    GK = np.einsum("ipc,jpc,p->ij", Kg, g, rule.weights)
    ints = basis.eval(rule.points) @ rule.weights  # int_T phi_m

    B = np.zeros((n, ctx.ndof))
    # cell part: -<v_T, div(K grad w)>_T
    div = basis.div_K_grad(K, rule.points)  # (n, q)
    phi_k = basis.eval(rule.points)[: ctx.cell_dim]
    B[:, : ctx.cell_dim] = -(div * rule.weights) @ phi_k.T
    # face parts: <v_F, (K grad w).n_T>_F
    for fb, sl in ctx.face_slices():
        gw = basis.grad(fb.rule.points)  # (n, q, 2)
        flux = np.einsum("ipc,cd,pd->ip", gw, K, fb.sign * fb.rule.normals)
        psi = fb.space.eval_on_rule(fb.rule)  # (D_F, q)
        B[:, sl] = (flux * fb.rule.weights) @ psi.T

    # mean-value closure: int_T p = int_T v_T
    crow = np.zeros(ctx.ndof)
    crow[: ctx.cell_dim] = ints[: ctx.cell_dim]
    sys = np.zeros((n + 1, n + 1))
    sys[:n, :n] = GK
    sys[:n, n] = ints
    sys[n, :n] = ints
    rhs = np.vstack([B, crow[None, :]])
    P = np.linalg.solve(sys, rhs)[:n]
    return P, GK


def stabilisation(ctx: ElementContext, P: np.ndarray, GK: np.ndarray) -> np.ndarray:
    """S(v, w) = <K grad d_T v, grad d_T w>_T + h^-1 <d_F v, d_F w>_{K,dT}.

    d_T v = v_T - pi0_T(p v) and d_F v = v_F - pi0_F(p v); the boundary
    product carries the weight K n.n so the form scales linearly in K.
    """
    nk = ctx.cell_dim
    # pi0_T of a degree-(k+1) coefficient vector is truncation (nested
    # orthonormal basis), so d_T = [I 0] - trunc(P).
    DT = -P[:nk, :].copy()
    DT[:, :nk] += np.eye(nk)
    S = DT.T @ GK[:nk, :nk] @ DT
    h = ctx.element.diameter
    for fb, sl in ctx.face_slices():
        psi = fb.space.eval_on_rule(fb.rule)  # (D_F, q)
        phi = ctx.cell_basis.eval(fb.rule.points)  # (n, q)
        # pi0_F of each degree-(k+1) basis function
        proj = (psi * fb.rule.weights) @ phi.T  # (D_F, n)
        DF = -proj @ P
        DF[:, sl] += np.eye(fb.dim)
        knn = np.einsum("pc,cd,pd->p", fb.rule.normals, ctx.K, fb.rule.normals)
        Mw = (psi * (fb.rule.weights * knn)) @ psi.T
        S += (DF.T @ Mw @ DF) / h
    return S


def local_stiffness(ctx: ElementContext) -> LocalOperators:
    P, GK = potential_reconstruction(ctx)
    S = stabilisation(ctx, P, GK)
    A = P.T @ GK @ P + S
    return LocalOperators(P=P, S=S, A=A, GK=GK)


def local_seminorm(ctx: ElementContext, dofs) -> float:
    """|v_T|_{K,H1}^2 + h^-1 ||v_F - v_T||_{K,dT}^2, returned as the norm."""
    dofs = np.asarray(dofs, dtype=float)
    nk = ctx.cell_dim
    vc = dofs[:nk]
    g = ctx.cell_basis.grad(ctx.rule.points)[:nk]
    Kg = np.einsum("cd,ipd->ipc", ctx.K, g)
    GKk = np.einsum("ipc,jpc,p->ij", Kg, g, ctx.rule.weights)
    acc = float(vc @ GKk @ vc)
    h = ctx.element.diameter
    for fb, sl in ctx.face_slices():
        trace = vc @ ctx.cell_basis.eval(fb.rule.points)[:nk]
        vals = dofs[sl] @ fb.space.eval_on_rule(fb.rule)
        knn = np.einsum("pc,cd,pd->p", fb.rule.normals, ctx.K, fb.rule.normals)
        gap = vals - trace
        acc += float(np.sum(fb.rule.weights * knn * gap * gap)) / h
    return math.sqrt(acc)


# ---------------------------------------------------------------------------
# whole-mesh discretization


@dataclass(eq=False)
class Discretization:
    mesh: Mesh
    k: int
    diffusion: Diffusion
    quad_points: int
    edge_rules: dict
    face_spaces: dict
    contexts: dict  # element id -> ElementContext
    ops: dict  # element id -> LocalOperators

    def context(self, eid: int) -> ElementContext:
        return self.contexts[eid]

    def face_dimension_report(self) -> str:
        lines = ["face  straight  D_F  dropped_pivots"]
        for f in self.mesh.faces:
            sp = self.face_spaces[f.id]
            drops = " ".join(f"{idx}:{piv:.3e}" for idx, piv in sp.dropped)
            lines.append(
                f"{f.id}  {int(f.is_straight)}  {sp.dim}  [{drops}]"
            )
        return "\n".join(lines)


def build_discretization(
    mesh: Mesh, diffusion: Diffusion, k: int, quad_points: int = 30
) -> Discretization:
    if k < 0:
        raise ValueError("k must be nonnegative")
    rule1d = gauss_legendre(quad_points)
    radial = gauss_legendre(quad_points)
    edge_rules = {f.id: edge_rule(f, rule1d) for f in mesh.faces}
    face_spaces = {f.id: build_face_space(f, k, edge_rules[f.id]) for f in mesh.faces}
    contexts, ops = {}, {}
    for e in mesh.elements:
        erule = element_rule(e, mesh, edge_rules, radial)
        basis = build_cell_basis(e, k + 1, erule)
        blocks = [
            FaceBlock(
                face=face,
                space=face_spaces[face.id],
                rule=edge_rules[face.id],
                sign=mesh.outward_sign(e, face),
            )
            for face, _fwd in mesh.element_loop(e)
        ]
        ctx = ElementContext(
            element=e,
            k=k,
            K=diffusion.on(e),
            cell_basis=basis,
            cell_dim=space_dim(k),
            faces=blocks,
            rule=erule,
        )
        contexts[e.id] = ctx
        ops[e.id] = local_stiffness(ctx)
    return Discretization(
        mesh=mesh,
        k=k,
        diffusion=diffusion,
        quad_points=quad_points,
        edge_rules=edge_rules,
        face_spaces=face_spaces,
        contexts=contexts,
        ops=ops,
    )


def dump_local_operators(ctx: ElementContext, ops: LocalOperators, path):
    """Text dump of the per-element matrices for debugging sessions."""
    with open(path, "w") as fh:
        fh.write(f"element {ctx.element.id}  k {ctx.k}  ndof {ctx.ndof}\n")
        for name, mat in (("P", ops.P), ("S", ops.S), ("A", ops.A), ("GK", ops.GK)):
            fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
