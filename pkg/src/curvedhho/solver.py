"""Global system assembly, static condensation, and sparse direct solve.

Unknowns live on interior faces only: boundary faces carry the homogeneous
Dirichlet condition and are eliminated, cell blocks are condensed out through
per-element Schur complements (the cell block of the local stiffness matrix
is positive definite, so a dense Cholesky factorization per element is both
the condensation and the recovery operator).  The condensed matrix is
symmetric positive definite and goes through SuperLU with diagonal pivoting,
which exposes the pivots for the definiteness diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hho import Discretization, ElementContext
from .spaces import l2_project_cell, l2_project_face

__all__ = [
    "SolverError",
    "AssemblyError",
    "DofMap",
    "GlobalSystem",
    "DofVector",
    "DiscreteSolution",
    "assemble",
    "solve",
    "interpolate_global",
    "energy_norm",
    "dump_solution",
]


class SolverError(Exception):
    pass


class AssemblyError(SolverError):
    pass


@dataclass(eq=False)
class DofMap:
    """Global numbering: cell blocks per element plus interior-face blocks.

    The condensed system uses only the face segment; the uncondensed debug
    path prepends all cell blocks.  Boundary faces have offset None.
    """

    cell_dim: int
    cell_offset: dict  # element id -> offset within the cell segment
    face_dim: dict  # face id -> D_F
    face_offset: dict  # face id -> offset within the face segment, None = boundary
    n_cell: int
    n_face: int

    @classmethod
    def build(cls, disc: Discretization) -> "DofMap":
        cell_dim = next(iter(disc.contexts.values())).cell_dim if disc.contexts else 0
        cell_offset = {}
        off = 0
        for e in disc.mesh.elements:
            cell_offset[e.id] = off
            off += cell_dim
        face_dim, face_offset = {}, {}
        foff = 0
        for f in disc.mesh.faces:
            d = disc.face_spaces[f.id].dim
            face_dim[f.id] = d
            if f.is_boundary:
                face_offset[f.id] = None
            else:
                face_offset[f.id] = foff
                foff += d
        return cls(cell_dim, cell_offset, face_dim, face_offset, off, foff)

    def condensed_indices(self, ctx: ElementContext) -> np.ndarray:
        """Global condensed index for each local face dof, -1 on boundary faces."""
        idx = []
        for fb, _sl in ctx.face_slices():
            off = self.face_offset[fb.face.id]
            if off is None:
                idx.extend([-1] * fb.dim)
            else:
                idx.extend(range(off, off + fb.dim))
        return np.asarray(idx, dtype=np.int64)

    def full_indices(self, ctx: ElementContext) -> np.ndarray:
        """Uncondensed numbering: cells first, then interior faces."""
        cell = np.arange(self.cell_dim) + self.cell_offset[ctx.element.id]
        face = self.condensed_indices(ctx)
        face = np.where(face >= 0, face + self.n_cell, -1)
        return np.concatenate([cell, face])


@dataclass(eq=False)
class _Recovery:
    chol: tuple  # cho_factor of the cell block
    Acf: np.ndarray
    bc: np.ndarray


@dataclass(eq=False)
class GlobalSystem:
    dofmap: DofMap
    matrix: sp.csr_matrix  # condensed, interior-face dofs
    rhs: np.ndarray
    recovery: dict  # element id -> _Recovery
    full_matrix: sp.csr_matrix | None = None  # uncondensed debug path
    full_rhs: np.ndarray | None = None


def _triplets_to_csr(rows, cols, vals, n):
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    order = np.lexsort((cols, rows))  # deterministic duplicate summation
    mat = sp.coo_matrix((vals[order], (rows[order], cols[order])), shape=(n, n))
    return mat.tocsr()


def assemble(disc: Discretization, source, build_full: bool = False) -> GlobalSystem:
    """Condense cell blocks element by element and accumulate face triplets.

    source is a callable point array -> values; it feeds the cell load
    vector only (faces carry no source term under Dirichlet conditions).
    """
    dm = DofMap.build(disc)
    rows, cols, vals = [], [], []
    rhs = np.zeros(dm.n_face)
    recovery = {}
    frows, fcols, fvals = [], [], []
    frhs = np.zeros(dm.n_cell + dm.n_face) if build_full else None

    for elem in disc.mesh.elements:
        ctx = disc.contexts[elem.id]
        A = disc.ops[elem.id].A
        nk = ctx.cell_dim
        fvalues = np.asarray(source(ctx.rule.points), dtype=float)
        bc = ctx.cell_basis.eval(ctx.rule.points)[:nk] @ (ctx.rule.weights * fvalues)

        try:
            chol = sla.cho_factor(A[:nk, :nk], lower=True)
        except sla.LinAlgError as exc:
            raise AssemblyError(
                f"cell block of element {elem.id} is not positive definite"
            ) from exc
        Acf = A[:nk, nk:]
        Y = sla.cho_solve(chol, Acf)
        Sff = A[nk:, nk:] - Acf.T @ Y
        gf = -Acf.T @ sla.cho_solve(chol, bc)
        recovery[elem.id] = _Recovery(chol=chol, Acf=Acf, bc=bc)

        idx = dm.condensed_indices(ctx)
        keep = idx >= 0
        if np.any(keep):
            gi = idx[keep]
            sub = Sff[np.ix_(keep, keep)]
            rows.append(np.repeat(gi, len(gi)))
            cols.append(np.tile(gi, len(gi)))
            vals.append(sub.ravel())
            np.add.at(rhs, gi, gf[keep])

        if build_full:
            fidx = dm.full_indices(ctx)
            fkeep = fidx >= 0
            gi = fidx[fkeep]
            sub = A[np.ix_(fkeep, fkeep)]
            frows.append(np.repeat(gi, len(gi)))
            fcols.append(np.tile(gi, len(gi)))
            fvals.append(sub.ravel())
            np.add.at(frhs, gi[:nk], bc)

    matrix = _triplets_to_csr(rows, cols, vals, dm.n_face)
    gap = abs(matrix - matrix.T)
    norm = abs(matrix).max() if matrix.nnz else 0.0
    if matrix.nnz and gap.max() > 1e-12 * norm:
        raise AssemblyError("condensed matrix is not symmetric")
    full_matrix = full_rhs = None
    if build_full:
        full_matrix = _triplets_to_csr(frows, fcols, fvals, dm.n_cell + dm.n_face)
        full_rhs = frhs
    return GlobalSystem(dm, matrix, rhs, recovery, full_matrix, full_rhs)


@dataclass(eq=False)
class DofVector:
    """Per-face and per-cell coefficient dictionaries (hybrid unknowns)."""

    face: dict  # face id -> coefficients
    cell: dict  # element id -> coefficients

    def local(self, ctx: ElementContext) -> np.ndarray:
        out = np.zeros(ctx.ndof)
        out[: ctx.cell_dim] = self.cell[ctx.element.id]
        for fb, sl in ctx.face_slices():
            out[sl] = self.face[fb.face.id]
        return out

    def __sub__(self, other: "DofVector") -> "DofVector":
        return DofVector(
            face={fid: v - other.face[fid] for fid, v in self.face.items()},
            cell={eid: v - other.cell[eid] for eid, v in self.cell.items()},
        )


@dataclass(eq=False)
class DiscreteSolution:
    disc: Discretization
    dofs: DofVector
    recon: dict  # element id -> degree-(k+1) coefficients in the cell basis
    n_unknowns: int
    min_pivot: float
    residual: float

    def reconstruction_values(self, eid: int, points) -> np.ndarray:
        return self.recon[eid] @ self.disc.contexts[eid].cell_basis.eval(points)

    def reconstruction_gradient(self, eid: int, points) -> np.ndarray:
        g = self.disc.contexts[eid].cell_basis.grad(points)
        return np.einsum("i,ipd->pd", self.recon[eid], g)


def solve(disc: Discretization, system: GlobalSystem) -> DiscreteSolution:
    dm = system.dofmap
    if dm.n_face:
        lu = spla.splu(
            system.matrix.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        pivots = lu.U.diagonal()
        min_pivot = float(pivots.min())
        if min_pivot <= 0.0:
            raise SolverError(
                f"factorization produced a nonpositive pivot {min_pivot:.3e} "
                f"({int(np.sum(pivots <= 0))} of {len(pivots)})"
            )
        x = lu.solve(system.rhs)
        bnorm = float(np.linalg.norm(system.rhs))
        rnorm = float(np.linalg.norm(system.matrix @ x - system.rhs))
        residual = rnorm / bnorm if bnorm > 0 else rnorm
    else:
        x = np.zeros(0)
        min_pivot = math.inf
        residual = 0.0

    face = {}
    for f in disc.mesh.faces:
        off = dm.face_offset[f.id]
        d = dm.face_dim[f.id]
        face[f.id] = np.zeros(d) if off is None else x[off : off + d].copy()

    cell, recon = {}, {}
    for elem in disc.mesh.elements:
        ctx = disc.contexts[elem.id]
        rec = system.recovery[elem.id]
        xf = np.concatenate([face[fb.face.id] for fb, _sl in ctx.face_slices()]) if ctx.faces else np.zeros(0)
        cell[elem.id] = sla.cho_solve(rec.chol, rec.bc - rec.Acf @ xf)
        dofs = np.concatenate([cell[elem.id], xf])
        recon[elem.id] = disc.ops[elem.id].P @ dofs

    return DiscreteSolution(
        disc=disc,
        dofs=DofVector(face=face, cell=cell),
        recon=recon,
        n_unknowns=dm.n_face,
        min_pivot=min_pivot,
        residual=residual,
    )


def interpolate_global(disc: Discretization, u) -> DofVector:
    """Face and cell L2 projections of a function, one projection per face."""
    face = {
        f.id: l2_project_face(u, disc.face_spaces[f.id], disc.edge_rules[f.id])
        for f in disc.mesh.faces
    }
    cell = {}
    for elem in disc.mesh.elements:
        ctx = disc.contexts[elem.id]
        cell[elem.id] = l2_project_cell(u, ctx.cell_basis, ctx.rule, degree=ctx.k)
    return DofVector(face=face, cell=cell)


def energy_norm(disc: Discretization, dv: DofVector) -> float:
    """Square root of the assembled bilinear form on a hybrid vector."""
    acc = 0.0
    for elem in disc.mesh.elements:
        ctx = disc.contexts[elem.id]
        v = dv.local(ctx)
        acc += float(v @ disc.ops[elem.id].A @ v)
    return math.sqrt(max(acc, 0.0))


def dump_solution(sol: DiscreteSolution, path):
    """Reconstructed potential, one element per block: basis metadata + coefficients."""
    disc = sol.disc
    with open(path, "w") as fh:
        fh.write(f"# degree {disc.k + 1} reconstruction coefficients per element\n")
        fh.write("# element id, centroid, scale, then one coefficient per line\n")
        for elem in disc.mesh.elements:
            basis = disc.contexts[elem.id].cell_basis
            fh.write(
                f"ELEMENT {elem.id} {basis.center[0]:.17g} {basis.center[1]:.17g} "
                f"{basis.scale:.17g}\n"
            )
            for c in sol.recon[elem.id]:
                fh.write(f"{c:.17g}\n")
