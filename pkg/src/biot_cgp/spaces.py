"""Global finite element spaces: dof numbering, orientation signs, constraints.

Vector spaces are BDM_m with the normal dofs of boundary facets pinned to
zero (H_0(div)); scalar spaces are discontinuous P_l.  The pressure space
does not constrain the mean, see ``FESpace`` notes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .elements import BDMElement, DGElement, bdm_element, dg_element, piola_map
from .mesh import Mesh
from .quadrature import triangle_rule

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FESpace:
    """A global space on ``mesh``.

    ``cell_dofs[c, i]`` is the global index of local basis function i on
    cell c and ``cell_signs[c, i]`` the factor relating the two.  A global
    basis function restricted to c equals ``sign * (mapped local function)``.

    The mean of pressure fields is not constrained; for compatible data the
    scheme keeps it at zero by itself.
    """

    mesh: Mesh
    element: BDMElement | DGElement
    kind: str
    num_dofs: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    constrained: np.ndarray
    free: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def is_vector(self) -> bool:
        return self.kind == "bdm"

    @property
    def num_free(self) -> int:
        return len(self.free)

    @property
    def degree(self) -> int:
        return self.element.order

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.free]

    def extend(self, x_free: np.ndarray) -> np.ndarray:
        x_free = np.asarray(x_free)
        out = np.zeros(x_free.shape[:-1] + (self.num_dofs,))
        out[..., self.free] = x_free
        return out

    # -- tabulation on physical cells ------------------------------------
    def tabulate(self, ref_pts: np.ndarray):
        """Physical basis data at ``ref_pts`` mapped into every cell, signs applied.

        Vector spaces return (values (nc,nq,nb,2), divs (nc,nq,nb), jacs
        (nc,nq,nb,2,2)); scalar spaces return (values (nc,nq,nb), grads
        (nc,nq,nb,2)).
        """
        key = ("tab", ref_pts.tobytes(), ref_pts.shape)
        if key in self._cache:
            return self._cache[key]
        J, det, _ = self.mesh.affine_maps()
        s = self.cell_signs[:, None, :]
        if self.is_vector:
            v, d, g = self.element.tabulate(ref_pts)
            pv, pd, pg = piola_map(J, det, v, d, g, h=self.mesh.cell_diameters)
            out = (pv * s[..., None], pd * s, pg * s[..., None, None])
        else:
            v, g = self.element.tabulate(ref_pts)
            Jinv = np.linalg.inv(J)
            pg = np.einsum("qbj,cjk->cqbk", g, Jinv)
            out = (np.broadcast_to(v, (self.mesh.num_cells,) + v.shape), pg)
        self._cache[key] = out
        return out

    def map_points(self, ref_pts: np.ndarray) -> np.ndarray:
        """Physical coordinates (nc, nq, 2) of reference points in every cell."""
        J, _, x0 = self.mesh.affine_maps()
        return np.einsum("cij,qj->cqi", J, ref_pts) + x0[:, None, :]

    def evaluate(self, coeffs: np.ndarray, ref_pts: np.ndarray, what: str = "value"):
        """Evaluate a global coefficient vector at mapped reference points.

        ``what`` is "value", "div" (vector only), "jac" (vector) or "grad" (scalar).
        Coefficient arrays may carry leading batch axes.
        """
        tab = self.tabulate(ref_pts)
        local = np.asarray(coeffs)[..., self.cell_dofs]  # (..., nc, nb)
        if self.is_vector:
            data = {"value": tab[0], "div": tab[1], "jac": tab[2]}[what]
        else:
            data = {"value": tab[0], "grad": tab[1]}[what]
        extra = "xyz"[: data.ndim - 3]
        return np.einsum(f"...cb,cqb{extra}->...cq{extra}", local, data)

    # -- interpolation ----------------------------------------------------
    def interpolate(self, f: Field, quad_degree: int | None = None) -> np.ndarray:
        """BDM: canonical dof interpolant.  DG: cell-wise L2 projection.

        ``f(x, y)`` takes coordinate arrays of equal shape and returns values
        with a trailing component axis (vector) or matching shape (scalar).
        """
        J, det, x0 = self.mesh.affine_maps()
        if self.is_vector:
            el = self.element
            X = self.map_points(el.dof_points)
            vals = np.asarray(f(X[..., 0], X[..., 1]), dtype=float)
            Jinv = np.linalg.inv(J)
            ref = det[:, None, None] * np.einsum("cij,cqj->cqi", Jinv, vals)
            local = el.apply_dofs(ref) * self.cell_signs
        else:
            deg = quad_degree if quad_degree is not None else max(2 * self.degree + 8, 12)
            q = triangle_rule(deg)
            X = self.map_points(q.nodes)
            vals = np.asarray(f(X[..., 0], X[..., 1]), dtype=float)
            phi, _ = self.element.tabulate(q.nodes)
            # reference basis is orthonormal, so the physical mass is |det| I
            local = np.einsum("q,cq,qb->cb", q.weights, vals, phi)
        out = np.zeros(self.num_dofs)
        out[self.cell_dofs] = local
        return out


def build_space(mesh: Mesh, kind: str, order: int) -> FESpace:
    """Build ``kind`` in {"bdm", "dg"} of the given polynomial order.

    ``order`` is m for BDM_m and l for P_l.
    """
    nc = mesh.num_cells
    if kind == "bdm":
        el = bdm_element(order)
        nfd = el.facet_dofs
        nint = el.interior_dofs
        nf = mesh.num_facets
        j = np.arange(nfd)
        facet_gl = mesh.cell_facets[:, :, None] * nfd + j  # (nc, 3, nfd)
        first = mesh.cell_facet_sign[:, :, None] > 0
        facet_sign = np.where(first, 1, (-1) ** (j + 1))
        facet_sign = np.broadcast_to(facet_sign, facet_gl.shape)
        interior_gl = nf * nfd + np.arange(nc)[:, None] * nint + np.arange(nint)
        cell_dofs = np.hstack([facet_gl.reshape(nc, -1), interior_gl])
        cell_signs = np.hstack([facet_sign.reshape(nc, -1), np.ones((nc, nint), dtype=int)])
        ndofs = nf * nfd + nc * nint
        constrained = (mesh.boundary_facets[:, None] * nfd + j).ravel()
    elif kind == "dg":
        el = dg_element(order)
        cell_dofs = np.arange(nc * el.dim).reshape(nc, el.dim)
        cell_signs = np.ones_like(cell_dofs)
        ndofs = nc * el.dim
        constrained = np.zeros(0, dtype=np.int64)
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    mask = np.ones(ndofs, dtype=bool)
    mask[constrained] = False
    return FESpace(
        mesh, el, kind, ndofs, cell_dofs, cell_signs.astype(float),
        np.sort(constrained), np.flatnonzero(mask),
    )
