"""Assembly of the spatial operators of the space-time scheme.

All cell kernels are vectorised over cells; global matrices are formed from
COO triplets in a fixed order, so the result does not depend on anything
but the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .elements import edge_points, piola_map
from .mesh import Mesh
from .parameters import ModelParameters
from .quadrature import gauss_rule, triangle_rule
from .spaces import FESpace, build_space

LOAD_QUAD_DEGREE = 12


def _scatter(rows_dofs, cols_dofs, local, shape) -> sp.csr_matrix:
    """Sum local blocks (n, a, b) into a global CSR matrix."""
    n, a, b = local.shape
    r = np.broadcast_to(rows_dofs[:, :, None], (n, a, b)).ravel()
    c = np.broadcast_to(cols_dofs[:, None, :], (n, a, b)).ravel()
    A = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _cell_rule(space: FESpace, extra: int = 0):
    return triangle_rule(2 * space.degree + extra)


def _check_weight(weight):
    if weight is None:
        return 1.0
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        if w < 0:
            raise ValueError("mass weight must be nonnegative")
        return float(w)
    if w.shape != (2, 2) or not np.allclose(w, w.T, atol=1e-14):
        raise ValueError("tensor weight must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(w).min() < -1e-14:
        raise ValueError("tensor weight must be positive semidefinite")
    return w


def assemble_mass(space: FESpace, weight=None) -> sp.csr_matrix:
    """Weighted L2 mass matrix on the full space (constrained dofs included)."""
    w = _check_weight(weight)
    q = _cell_rule(space)
    _, det, _ = space.mesh.affine_maps()
    dx = q.weights[None, :] * np.abs(det)[:, None]
    phi = space.tabulate(q.nodes)[0]
    if space.is_vector:
        if np.ndim(w) == 0:
            local = w * np.einsum("cq,cqid,cqjd->cij", dx, phi, phi)
        else:
            local = np.einsum("cq,cqid,de,cqje->cij", dx, phi, w, phi)
    else:
        if np.ndim(w) != 0:
            raise ValueError("scalar spaces take a scalar weight")
        local = w * np.einsum("cq,cqi,cqj->cij", dx, phi, phi)
    n = space.num_dofs
    return _scatter(space.cell_dofs, space.cell_dofs, local, (n, n))


def _sym(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def assemble_elasticity_cells(space: FESpace, mu: float, lam: float) -> sp.csr_matrix:
    """Cell part of a_h: 2 mu (eps, eps) + lambda (div, div)."""
    q = _cell_rule(space)
    _, det, _ = space.mesh.affine_maps()
    dx = q.weights[None, :] * np.abs(det)[:, None]
    _, div, jac = space.tabulate(q.nodes)
    eps = _sym(jac)
    local = 2.0 * mu * np.einsum("cq,cqikl,cqjkl->cij", dx, eps, eps)
    local += lam * np.einsum("cq,cqi,cqj->cij", dx, div, div)
    n = space.num_dofs
    return _scatter(space.cell_dofs, space.cell_dofs, local, (n, n))


@dataclass
class FacetTraces:
    """Traces of the basis functions of both adjacent cells on every facet.

    Arrays are indexed (facet, side, quad point, local basis, ...); side 1 of
    boundary facets is zero-filled and ``dofs`` there repeats side 0 with
    zero values so scattering stays rectangular.
    """

    s: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    jacs: np.ndarray
    dofs: np.ndarray
    points: np.ndarray


def facet_traces(space: FESpace, npoints: int | None = None) -> FacetTraces:
    if not space.is_vector:
        raise ValueError("facet traces are only needed for the vector space")
    mesh = space.mesh
    key = ("facet_traces", npoints)
    if key in space._cache:
        return space._cache[key]
    m = space.degree
    g = gauss_rule(npoints or m + 1)
    nf, nq, nb = mesh.num_facets, len(g), space.element.dim
    J, det, _ = mesh.affine_maps()
    values = np.zeros((nf, 2, nq, nb, 2))
    jacs = np.zeros((nf, 2, nq, nb, 2, 2))
    dofs = np.zeros((nf, 2, nb), dtype=np.int64)

    for side in (0, 1):
        cells = mesh.facet_cells[:, side]
        for e in range(3):
            sel = np.flatnonzero((cells >= 0) & (mesh.facet_local[:, side] == e))
            if len(sel) == 0:
                continue
            ref = edge_points(e, g.nodes, reversed_=(side == 1))
            v, d, jac = space.element.tabulate(ref)
            c = cells[sel]
            pv, pj = piola_map(J[c], det[c], values=v, jacs=jac, h=mesh.cell_diameters[c])
            s = space.cell_signs[c][:, None, :]
            values[sel, side] = pv * s[..., None]
            jacs[sel, side] = pj * s[..., None, None]
            dofs[sel, side] = space.cell_dofs[c]
    bnd = mesh.is_boundary
    dofs[bnd, 1] = dofs[bnd, 0]
    p0 = mesh.vertices[mesh.facets[:, 0]]
    p1 = mesh.vertices[mesh.facets[:, 1]]
    points = p0[:, None, :] + g.nodes[None, :, None] * (p1 - p0)[:, None, :]
    out = FacetTraces(g.nodes, g.weights, values, jacs, dofs, points)
    space._cache[key] = out
    return out


def _facet_operands(space: FESpace, tr: FacetTraces):
    """Tangential jump T and average normal-tangential strain A per facet.

    Both have shape (nf, nq, 2 nb): side-0 functions followed by side-1.
    """
    mesh = space.mesh
    n = mesh.facet_normals
    t = mesh.facet_tangents
    bnd = mesh.is_boundary
    tang = np.einsum("fsqbc,fc->fsqb", tr.values, t)
    eps = _sym(tr.jacs)
    avg = np.einsum("fc,fsqbcd,fd->fsqb", t, eps, n)
    jump_sign = np.array([1.0, -1.0])
    T = tang * jump_sign[None, :, None, None]
    avg_w = np.where(bnd[:, None], [1.0, 0.0], [0.5, 0.5])
    A = avg * avg_w[:, :, None, None]
    T[bnd, 1] = 0.0
    nf, _, nq, nb = T.shape
    T = T.transpose(0, 2, 1, 3).reshape(nf, nq, 2 * nb)
    A = A.transpose(0, 2, 1, 3).reshape(nf, nq, 2 * nb)
    return T, A


def assemble_elasticity_facets(space: FESpace, mu: float, eta: float, which: str = "all"):
    """Facet parts of a_h: (consistency + symmetry terms, penalty term).

    ``which`` selects "all", "interior" or "boundary" facets.
    """
    if eta <= 0:
        raise ValueError("penalty eta must be positive")
    mesh = space.mesh
    tr = facet_traces(space)
    T, A = _facet_operands(space, tr)
    he = mesh.facet_lengths
    ds = tr.weights[None, :] * he[:, None]
    if which != "all":
        keep = {"interior": ~mesh.is_boundary, "boundary": mesh.is_boundary}[which]
        ds = ds * keep[:, None]
    cons = -2.0 * mu * (
        np.einsum("fq,fqa,fqb->fab", ds, T, A) + np.einsum("fq,fqa,fqb->fab", ds, A, T)
    )
    pen = 2.0 * mu * eta * np.einsum("fq,fqa,fqb->fab", ds / he[:, None], T, T)
    d = tr.dofs.reshape(len(he), -1)
    nd = space.num_dofs
    return _scatter(d, d, cons, (nd, nd)), _scatter(d, d, pen, (nd, nd))


def assemble_penalty(space: FESpace, mu: float, eta: float) -> sp.csr_matrix:
    return assemble_elasticity_facets(space, mu, eta)[1]


def assemble_elasticity_dg(space: FESpace, mu: float, lam: float, eta: float) -> sp.csr_matrix:
    """The interior-penalty elasticity form a_h on the full BDM space."""
    if eta <= 0:
        raise ValueError("penalty eta must be positive")
    A = assemble_elasticity_cells(space, mu, lam)
    cons, pen = assemble_elasticity_facets(space, mu, eta)
    out = (A + cons + pen).tocsr()
    out.sort_indices()
    return out


def assemble_div_coupling(vspace: FESpace, pspace: FESpace) -> sp.csr_matrix:
    """B[i, j] = (div phi_j, q_i): pressure rows, vector columns."""
    if vspace.mesh is not pspace.mesh:
        raise ValueError("vector and pressure spaces live on different meshes")
    q = triangle_rule(vspace.degree + pspace.degree + 1)
    _, det, _ = vspace.mesh.affine_maps()
    dx = q.weights[None, :] * np.abs(det)[:, None]
    div = vspace.tabulate(q.nodes)[1]
    psi = pspace.tabulate(q.nodes)[0]
    local = np.einsum("cq,cqi,cqj->cij", dx, psi, div)
    return _scatter(pspace.cell_dofs, vspace.cell_dofs, local, (pspace.num_dofs, vspace.num_dofs))


def assemble_load(space: FESpace, f: Callable, t: float, quad_degree: int = LOAD_QUAD_DEGREE) -> np.ndarray:
    """Load vector (f(., t), phi_i) on the full space.

    ``f(x, y, t)`` returns (..., 2) for vector spaces, (...) for scalar ones.
    """
    q = triangle_rule(quad_degree)
    X = space.map_points(q.nodes)
    vals = np.asarray(f(X[..., 0], X[..., 1], t), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"non-finite source values at t={t}")
    _, det, _ = space.mesh.affine_maps()
    dx = q.weights[None, :] * np.abs(det)[:, None]
    phi = space.tabulate(q.nodes)[0]
    if space.is_vector:
        local = np.einsum("cq,cqd,cqbd->cb", dx, vals, phi)
    else:
        local = np.einsum("cq,cq,cqb->cb", dx, vals, phi)
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.num_dofs)


@dataclass
class OperatorSet:
    """Spatial matrices of one mesh level, restricted to free dofs.

    ``B`` serves both the displacement and the flux coupling (the two vector
    spaces coincide), so momentum and mass-balance rows use bit-identical
    transposes.
    """

    vspace: FESpace
    pspace: FESpace
    params: ModelParameters
    ell: int
    eta: float
    M: sp.csr_matrix
    M_Kinv: sp.csr_matrix
    M_p: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix

    @property
    def B_u(self):
        return self.B

    @property
    def B_w(self):
        return self.B

    @property
    def nv(self) -> int:
        return self.vspace.num_free

    @property
    def np_(self) -> int:
        return self.pspace.num_dofs

    def vector_load(self, f: Callable, t: float) -> np.ndarray:
        return assemble_load(self.vspace, f, t)[self.vspace.free]

    def scalar_load(self, g: Callable, t: float) -> np.ndarray:
        return assemble_load(self.pspace, g, t)


def restrict(A: sp.spmatrix, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    out = A.tocsr()[rows][:, cols].tocsr()
    out.sort_indices()
    return out


def build_operators(mesh: Mesh, ell: int, params: ModelParameters) -> OperatorSet:
    """Spaces BDM_{l+1} x P_l on ``mesh`` and every matrix of the scheme."""
    V = build_space(mesh, "bdm", ell + 1)
    P = build_space(mesh, "dg", ell)
    eta = params.penalty(ell)
    fr = V.free
    allp = np.arange(P.num_dofs)
    M = restrict(assemble_mass(V), fr, fr)
    MK = restrict(assemble_mass(V, params.K_inv), fr, fr)
    Mp = assemble_mass(P)
    A = restrict(assemble_elasticity_dg(V, params.mu, params.lam, eta), fr, fr)
    B = restrict(assemble_div_coupling(V, P), allp, fr)
    return OperatorSet(V, P, params, ell, eta, M, MK, Mp, A, B)
