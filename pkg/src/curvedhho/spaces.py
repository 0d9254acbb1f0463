"""Local polynomial bases, curved-face unknown spaces, and projectors.

Cell bases are scaled monomials ((x - x_T)/h_T)^a orthonormalized under the
element quadrature.  Because the Gram-Schmidt sweep is triangular in graded
lexicographic order, the leading (l+1)(l+2)/2 functions of a degree-m basis
form an orthonormal basis of the degree-l subspace for every l <= m, so
truncating a coefficient vector IS the L2 projection onto lower degree.

Face spaces are spanned by {1} together with the two normal components of
ambient vector monomials, m(x)*n_x and m(x)*n_y for deg(m) <= k.  On a
straight face that collapses to the k+1 one-dimensional polynomials; on a
curved face the span is genuinely larger.  Redundancy is removed numerically:
rank detection by completely pivoted elimination on the quadrature Gram
matrix with a relative pivot threshold, then Gram-Schmidt on the survivors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Element, Face
from .quadrature import EdgeRule, ElemRule

__all__ = [
    "ConditioningError",
    "monomial_exponents",
    "space_dim",
    "CellBasis",
    "build_cell_basis",
    "FaceSpace",
    "build_face_space",
    "l2_project_cell",
    "l2_project_face",
    "elliptic_project",
]

PIVOT_THRESHOLD = 1e-15  # relative cutoff for face-space rank detection
MGS_TOLERANCE = 1e-13  # relative residual below which a basis is declared sick


class ConditioningError(Exception):
    pass


def space_dim(degree: int) -> int:
    """dim P^degree(R^2)."""
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree: int) -> np.ndarray:
    """Graded lexicographic exponent pairs: (0,0), (1,0), (0,1), (2,0), ..."""
    exps = []
    for d in range(degree + 1):
        for ax in range(d, -1, -1):
            exps.append((ax, d - ax))
    return np.asarray(exps, dtype=int)


def _scaled_powers(exps, center, scale, points):
    """Values of ((x-c)/h)^ax ((y-c)/h)^ay for every exponent row."""
    pts = (np.asarray(points, dtype=float) - center) / scale
    dmax = int(exps.max()) if len(exps) else 0
    px = np.vander(pts[:, 0], dmax + 1, increasing=True).T
    py = np.vander(pts[:, 1], dmax + 1, increasing=True).T
    return px[exps[:, 0]] * py[exps[:, 1]]


def _scaled_gradients(exps, center, scale, points):
    pts = (np.asarray(points, dtype=float) - center) / scale
    dmax = int(exps.max()) if len(exps) else 0
    px = np.vander(pts[:, 0], dmax + 1, increasing=True).T
    py = np.vander(pts[:, 1], dmax + 1, increasing=True).T
    ax, ay = exps[:, 0], exps[:, 1]
    gx = np.where(ax[:, None] > 0, ax[:, None] * px[np.maximum(ax - 1, 0)], 0.0) * py[ay]
    gy = px[ax] * np.where(ay[:, None] > 0, ay[:, None] * py[np.maximum(ay - 1, 0)], 0.0)
    return np.stack([gx, gy], axis=-1) / scale


def _scaled_hessians(exps, center, scale, points):
    """Second derivatives (xx, xy, yy) stacked on the last axis."""
    pts = (np.asarray(points, dtype=float) - center) / scale
    dmax = int(exps.max()) if len(exps) else 0
    px = np.vander(pts[:, 0], dmax + 1, increasing=True).T
    py = np.vander(pts[:, 1], dmax + 1, increasing=True).T
    ax, ay = exps[:, 0], exps[:, 1]

    def d2(p, a):
        return np.where(
            a[:, None] > 1, (a * (a - 1))[:, None] * p[np.maximum(a - 2, 0)], 0.0
        )

    def d1(p, a):
        return np.where(a[:, None] > 0, a[:, None] * p[np.maximum(a - 1, 0)], 0.0)

    hxx = d2(px, ax) * py[ay]
    hxy = d1(px, ax) * d1(py, ay)
    hyy = px[ax] * d2(py, ay)
    return np.stack([hxx, hxy, hyy], axis=-1) / scale**2


def _mgs(values, weights, label, coeffs=None):
    """Weighted modified Gram-Schmidt with reorthogonalization.

    Orthonormalizes the rows of `values` in the inner product sum(w f g),
    carrying `coeffs` (rows express each function in some fixed spanning set)
    through the same operations.
    """
    V = np.array(values, dtype=float)
    C = np.eye(V.shape[0]) if coeffs is None else np.array(coeffs, dtype=float)
    norms0 = np.sqrt(np.abs(np.sum(weights * V * V, axis=1)))
    for i in range(V.shape[0]):
        for _ in range(2):
            for j in range(i):
                r = float(np.sum(weights * V[i] * V[j]))
                V[i] -= r * V[j]
                C[i] -= r * C[j]
        nrm2 = float(np.sum(weights * V[i] * V[i]))
        if nrm2 <= 0.0 or math.sqrt(nrm2) < MGS_TOLERANCE * max(norms0[i], 1e-300):
            raise ConditioningError(
                f"{label}: basis function {i} lost to cancellation "
                f"(residual {math.sqrt(max(nrm2, 0.0)):.3e} of {norms0[i]:.3e})"
            )
        V[i] /= math.sqrt(nrm2)
        C[i] /= math.sqrt(nrm2)
    return V, C


# ---------------------------------------------------------------------------
# cell basis


@dataclass(eq=False)
class CellBasis:
    """Orthonormal basis of P^degree on one element, rows over scaled monomials."""

    element_id: int
    degree: int
    center: np.ndarray
    scale: float
    exps: np.ndarray
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def subdim(self, degree: int) -> int:
        if degree > self.degree:
            raise ValueError("degree exceeds basis degree")
        return space_dim(degree)

    def eval(self, points) -> np.ndarray:
        return self.coeffs @ _scaled_powers(self.exps, self.center, self.scale, points)

    def grad(self, points) -> np.ndarray:
        g = _scaled_gradients(self.exps, self.center, self.scale, points)
        return np.einsum("im,mpc->ipc", self.coeffs, g)

    def second(self, points) -> np.ndarray:
        hh = _scaled_hessians(self.exps, self.center, self.scale, points)
        return np.einsum("im,mpc->ipc", self.coeffs, hh)

    def div_K_grad(self, K, points) -> np.ndarray:
        """div(K grad phi_i) at points, K constant symmetric."""
        h = self.second(points)
        return K[0, 0] * h[..., 0] + 2.0 * K[0, 1] * h[..., 1] + K[1, 1] * h[..., 2]


def build_cell_basis(element: Element, degree: int, rule: ElemRule) -> CellBasis:
    exps = monomial_exponents(degree)
    center = element.centroid
    scale = element.diameter
    vals = _scaled_powers(exps, center, scale, rule.points)
    _, coeffs = _mgs(vals, rule.weights, f"cell basis (element {element.id})")
    return CellBasis(element.id, degree, center, scale, exps, coeffs)


# ---------------------------------------------------------------------------
# face space


@dataclass(eq=False)
class FaceSpace:
    """Orthonormal basis of the face unknown space for one face and degree.

    Spanning functions, in order: the constant 1, then m(x)*n_x and m(x)*n_y
    for each scaled ambient monomial m of degree <= k.  coeffs has one row per
    retained basis function over that spanning set; dropped records the
    spanning indices eliminated by rank detection with their pivot sizes.
    """

    face_id: int
    k: int
    center: np.ndarray
    scale: float
    exps: np.ndarray
    coeffs: np.ndarray
    dropped: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_span(self) -> int:
        return 1 + 2 * len(self.exps)

    def span_values(self, points, normals) -> np.ndarray:
        mono = _scaled_powers(self.exps, self.center, self.scale, points)
        normals = np.asarray(normals, dtype=float)
        rows = [np.ones(len(np.atleast_2d(points)))]
        for i in range(len(self.exps)):
            rows.append(mono[i] * normals[:, 0])
            rows.append(mono[i] * normals[:, 1])
        return np.asarray(rows)

    def eval(self, points, normals) -> np.ndarray:
        return self.coeffs @ self.span_values(points, normals)

    def eval_on_rule(self, rule: EdgeRule) -> np.ndarray:
        return self.eval(rule.points, rule.normals)


def _complete_pivot_columns(G: np.ndarray, threshold: float):
    """Completely pivoted elimination on a Gram matrix.

    Returns the pivot column indices (the retained spanning functions) and a
    log of (index, pivot) for everything eliminated below threshold * first
    pivot.
    """
    A = np.array(G, dtype=float)
    n = A.shape[0]
    rows = np.arange(n)
    cols = np.arange(n)
    kept, dropped = [], []
    first_pivot = None
    for step in range(n):
        sub = A[np.ix_(rows, cols)]
        flat = np.argmax(np.abs(sub))
        i, j = divmod(flat, sub.shape[1])
        pivot = sub[i, j]
        if first_pivot is None:
            first_pivot = abs(pivot)
            if first_pivot == 0.0:
                dropped.extend((int(c), 0.0) for c in cols)
                break
        if abs(pivot) < threshold * first_pivot:
            dropped.extend((int(c), float(abs(A[r, c]))) for r, c in zip(rows, cols))
            break
        pr, pc = rows[i], cols[j]
        kept.append(int(pc))
        rows = np.delete(rows, i)
        cols = np.delete(cols, j)
        if len(rows):
            factor = A[rows, pc] / pivot
            A[np.ix_(rows, cols)] -= np.outer(factor, A[pr, cols])
    return sorted(kept), dropped


def build_face_space(
    face: Face, k: int, rule: EdgeRule, threshold: float = PIVOT_THRESHOLD
) -> FaceSpace:
    exps = monomial_exponents(k)
    a, b = face.endpoints()
    samples = np.vstack([rule.points, a[None, :], b[None, :]])
    d2 = np.sum((samples[:, None, :] - samples[None, :, :]) ** 2, axis=-1)
    scale = math.sqrt(float(d2.max()))
    t0, t1 = face.curve.param_range
    center = face.curve.point(0.5 * (t0 + t1))
    proto = FaceSpace(face.id, k, center, scale, exps, np.empty((0, 0)))
    span = proto.span_values(rule.points, rule.normals)
    # the spanning set may exceed the node count (large k, small rules); the
    # pivoted elimination then discards the excess along with the true
    # near-dependencies, exactly like the exact-rank case
    G = (span * rule.weights) @ span.T
    kept, dropped = _complete_pivot_columns(G, threshold)
    if not kept:
        raise ConditioningError(f"face {face.id}: face space collapsed to nothing")
    if len(kept) > rule.n:
        raise ConditioningError(
            f"face {face.id}: surviving dimension {len(kept)} exceeds the "
            f"{rule.n}-node edge rule; raise the rule size"
        )
    seed = np.zeros((len(kept), span.shape[0]))
    for r, c in enumerate(kept):
        seed[r, c] = 1.0
    _, coeffs = _mgs(span[kept], rule.weights, f"face space (face {face.id})", coeffs=seed)
    return FaceSpace(face.id, k, center, scale, exps, coeffs, dropped=dropped)


# ---------------------------------------------------------------------------
# projectors


def _values_on(rule, f):
    vals = f(rule.points) if callable(f) else np.asarray(f, dtype=float)
    return vals


def l2_project_cell(f, basis: CellBasis, rule: ElemRule, degree: int | None = None):
    """Coefficients of the L2(T) projection onto P^degree (default: full basis)."""
    nfun = basis.dim if degree is None else space_dim(degree)
    vals = _values_on(rule, f)
    phi = basis.eval(rule.points)[:nfun]
    return phi @ (rule.weights * vals)


def l2_project_face(f, space: FaceSpace, rule: EdgeRule):
    """Coefficients of the L2(F) projection onto the face space.

    `f` is a callable on (n,2) point arrays or an array of nodal values; data
    that depends on the normal (Neumann traces) is passed as values computed
    at rule.points with rule.normals.
    """
    vals = f(rule.points) if callable(f) else np.asarray(f, dtype=float)
    psi = space.eval_on_rule(rule)
    return psi @ (rule.weights * vals)


def elliptic_project(f, grad_f, basis: CellBasis, K, rule: ElemRule):
    """Oblique elliptic projection onto the basis span.

    Solves  <K grad(pi f - f), grad w>_T = 0 for all w  with the mean
    constraint int_T (pi f - f) = 0 via one bordered system.
    """
    K = np.asarray(K, dtype=float).reshape(2, 2)
    n = basis.dim
    g = basis.grad(rule.points)
    Kg = np.einsum("cd,ipd->ipc", K, g)
    GK = np.einsum("ipc,jpc,p->ij", Kg, g, rule.weights)
    ints = basis.eval(rule.points) @ rule.weights
    gf = grad_f(rule.points) if callable(grad_f) else np.asarray(grad_f, dtype=float)
    rhs = np.einsum("ipc,pc,p->i", Kg, gf, rule.weights)
    fv = _values_on(rule, f)
    sys = np.zeros((n + 1, n + 1))
    sys[:n, :n] = GK
    sys[:n, n] = ints
    sys[n, :n] = ints
    b = np.concatenate([rhs, [float(rule.weights @ fv)]])
    try:
        sol = np.linalg.solve(sys, b)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"elliptic projector system singular: {exc}") from None
    return sol[:n]
