"""Reference elements on the triangle (0,0), (1,0), (0,1).

``BDMElement`` is the Brezzi-Douglas-Marini element of order m: the full
space P_m^2 with degrees of freedom

* facet moments of the normal trace against orthonormal shifted Legendre
  polynomials (m + 1 per facet, parametrised in the local counterclockwise
  direction of the facet), and
* interior moments against grad P_{m-1} (constants dropped) and against
  curl(b P_{m-2}), b the cubic bubble.

``DGElement`` is P_l with a basis that is orthonormal on the reference cell.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import LOCAL_EDGES
from .quadrature import gauss_rule, monomial_integral, triangle_rule

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SUPPORTED_BDM_ORDERS = (1, 2, 3)
_INSIDE_TOL = 1e-12


def monomial_exponents(n: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(n + 1) for j in range(d + 1)]


def _tabulate_monomials(exps, pts):
    """Values and first derivatives of x^a y^b at points (npts, 2)."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = np.array([e[0] for e in exps])
    b = np.array([e[1] for e in exps])

    def pw(base, e):
        return np.where(e >= 0, base ** np.maximum(e, 0), 0.0)

    val = pw(x, a) * pw(y, b)
    dx = a * pw(x, a - 1) * pw(y, b)
    dy = b * pw(x, a) * pw(y, b - 1)
    return val, dx, dy


def shifted_legendre(n: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre polynomials on [0, 1]; returns (len(s), n + 1)."""
    from numpy.polynomial import legendre

    s = np.asarray(s, dtype=float)
    out = np.empty((s.size, n + 1))
    for j in range(n + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        out[:, j] = np.sqrt(2 * j + 1) * legendre.legval(2.0 * s - 1.0, c)
    return out


def check_reference_points(pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError("reference points must have shape (n, 2)")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x < -_INSIDE_TOL) or np.any(y < -_INSIDE_TOL) or np.any(x + y > 1 + _INSIDE_TOL):
        raise ValueError("point outside the reference triangle")
    return pts


def edge_points(edge: int, s: np.ndarray, reversed_: bool = False) -> np.ndarray:
    """Reference coordinates of parameters ``s`` along local edge ``edge``."""
    a, b = REF_VERTICES[LOCAL_EDGES[edge]]
    s = np.asarray(s, dtype=float)
    if reversed_:
        s = 1.0 - s
    return a + s[:, None] * (b - a)


class BDMElement:
    """BDM_m on the reference triangle with a nodal (dual) basis."""

    def __init__(self, order: int):
        if order not in SUPPORTED_BDM_ORDERS:
            raise ValueError(f"BDM order must be one of {SUPPORTED_BDM_ORDERS}, got {order}")
        self.order = m = order
        self.exps = monomial_exponents(m)
        self.nmon = len(self.exps)
        self.dim = 2 * self.nmon
        self.facet_dofs = m + 1
        self.interior_dofs = (m - 1) * (m + 1)
        assert self.dim == 3 * self.facet_dofs + self.interior_dofs

        self.dof_points, self.dof_weights = self._dof_functionals()
        D = self._apply_dofs_to_monomials()
        self.vandermonde = D
        self.coefficients = np.linalg.inv(D)
        self.coefficients.setflags(write=False)

    # -- degrees of freedom -------------------------------------------------
    def _dof_functionals(self):
        """Quadrature form of every dof: dof_k(v) = sum_q W[k, q] . v(X[q])."""
        m = self.order
        fq = gauss_rule(m + 1)
        P = shifted_legendre(m, fq.nodes)  # (nq, m+1)
        pts = []
        nfq = len(fq)
        tq = triangle_rule(2 * m)
        ntq = len(tq)
        nq = 3 * nfq + ntq
        W = np.zeros((self.dim, nq, 2))
        for e in range(3):
            a, b = REF_VERTICES[LOCAL_EDGES[e]]
            d = b - a
            n_scaled = np.array([d[1], -d[0]])  # outward normal times |e|
            pts.append(edge_points(e, fq.nodes))
            for j in range(m + 1):
                W[e * (m + 1) + j, e * nfq:(e + 1) * nfq] = (
                    (fq.weights * P[:, j])[:, None] * n_scaled
                )
        pts.append(tq.nodes)
        sl = slice(3 * nfq, nq)
        X = tq.nodes
        row = 3 * (m + 1)
        # grad q, q in P_{m-1} without constants
        _, qx, qy = _tabulate_monomials(monomial_exponents(m - 1), X)
        for c in range(1, qx.shape[1]):
            W[row, sl, 0] = tq.weights * qx[:, c]
            W[row, sl, 1] = tq.weights * qy[:, c]
            row += 1
        # curl(b r), r in P_{m-2}
        if m >= 2:
            x, y = X[:, 0], X[:, 1]
            bub = x * y * (1 - x - y)
            bx = y * (1 - 2 * x - y)
            by = x * (1 - x - 2 * y)
            rv, rx, ry = _tabulate_monomials(monomial_exponents(m - 2), X)
            for c in range(rv.shape[1]):
                # curl f = (df/dy, -df/dx)
                W[row, sl, 0] = tq.weights * (by * rv[:, c] + bub * ry[:, c])
                W[row, sl, 1] = -tq.weights * (bx * rv[:, c] + bub * rx[:, c])
                row += 1
        assert row == self.dim
        return np.vstack(pts), W

    def _monomial_vectors(self, pts):
        # primal basis: orthonormal P_m in each component (better conditioned than monomials)
        C = dg_element(self.order).coefficients
        val, dx, dy = (t @ C for t in _tabulate_monomials(self.exps, pts))
        n, k = val.shape
        V = np.zeros((n, 2 * k, 2))
        V[:, :k, 0] = val
        V[:, k:, 1] = val
        G = np.zeros((n, 2 * k, 2, 2))
        G[:, :k, 0, 0] = dx
        G[:, :k, 0, 1] = dy
        G[:, k:, 1, 0] = dx
        G[:, k:, 1, 1] = dy
        return V, G

    def _apply_dofs_to_monomials(self):
        V, _ = self._monomial_vectors(self.dof_points)
        return np.einsum("kqc,qac->ka", self.dof_weights, V)

    def apply_dofs(self, values: np.ndarray) -> np.ndarray:
        """Dofs of a reference field sampled at ``dof_points``; values (..., nq, 2)."""
        return np.einsum("kqc,...qc->...k", self.dof_weights, values)

    # -- tabulation ---------------------------------------------------------
    def tabulate(self, pts: np.ndarray):
        """Values (n, dim, 2), divergences (n, dim) and Jacobians (n, dim, 2, 2)."""
        pts = check_reference_points(pts)
        V, G = self._monomial_vectors(pts)
        vals = np.einsum("nac,ak->nkc", V, self.coefficients)
        jac = np.einsum("nacd,ak->nkcd", G, self.coefficients)
        div = jac[:, :, 0, 0] + jac[:, :, 1, 1]
        return vals, div, jac

    def facet_dof_indices(self, edge: int) -> np.ndarray:
        return np.arange(edge * self.facet_dofs, (edge + 1) * self.facet_dofs)

    def __repr__(self):
        return f"BDMElement(order={self.order})"


class DGElement:
    """Discontinuous P_l with a basis orthonormal on the reference triangle."""

    def __init__(self, order: int):
        if order < 0:
            raise ValueError(f"order must be nonnegative, got {order}")
        self.order = order
        self.exps = monomial_exponents(order)
        self.dim = len(self.exps)
        G = np.array(
            [[monomial_integral(a1 + a2, b1 + b2) for (a2, b2) in self.exps]
             for (a1, b1) in self.exps]
        )
        L = np.linalg.cholesky(G)
        self.coefficients = np.linalg.inv(L).T
        self.coefficients.setflags(write=False)

    def tabulate(self, pts: np.ndarray):
        """Values (n, dim) and reference gradients (n, dim, 2)."""
        pts = check_reference_points(pts)
        val, dx, dy = _tabulate_monomials(self.exps, pts)
        C = self.coefficients
        grads = np.stack([dx @ C, dy @ C], axis=-1)
        return val @ C, grads

    def __repr__(self):
        return f"DGElement(order={self.order})"


@lru_cache(maxsize=None)
def bdm_element(order: int) -> BDMElement:
    return BDMElement(order)


@lru_cache(maxsize=None)
def dg_element(order: int) -> DGElement:
    return DGElement(order)


def bdm_eval(element: BDMElement, point):
    """Basis values, divergences and Jacobians at a single reference point."""
    vals, div, jac = element.tabulate(np.atleast_2d(point))
    return vals[0], div[0], jac[0]


def dg_eval(element: DGElement, point):
    vals, grads = element.tabulate(np.atleast_2d(point))
    return vals[0], grads[0]


def piola_map(J, det, values=None, divs=None, jacs=None, h=None):
    """Contravariant Piola transform of reference basis data.

    ``J`` (..., 2, 2) and ``det`` (...) describe the affine cell maps; the
    reference arrays carry shapes (nq, nb, 2), (nq, nb) and (nq, nb, 2, 2).
    Outputs gain the leading cell axes of ``J``.
    """
    J = np.asarray(J, dtype=float)
    det = np.asarray(det, dtype=float)
    if h is None:
        h = np.sqrt(2.0) * np.abs(J).max(axis=(-2, -1))
    if np.any(np.abs(det) < 1e-14 * np.asarray(h) ** 2):
        raise ValueError("degenerate cell: |det J| too small")
    out = []
    if values is not None:
        out.append(np.einsum("...ij,qbj->...qbi", J, values) / det[..., None, None, None])
    if divs is not None:
        out.append(divs / det[..., None, None])
    if jacs is not None:
        Jinv = np.linalg.inv(J)
        g = np.einsum("...ij,qbjk,...kl->...qbil", J, jacs, Jinv)
        out.append(g / det[..., None, None, None, None])
    return tuple(out) if len(out) > 1 else out[0]
