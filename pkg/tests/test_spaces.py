import math

import numpy as np
import pytest
import sympy as sp

from biot_cgp.assembly import facet_traces
from biot_cgp.mesh import refined_mesh, unit_square_mesh
from biot_cgp.mms import ManufacturedSolution
from biot_cgp.quadrature import triangle_rule
from biot_cgp.spaces import build_space


@pytest.mark.parametrize("order, total, constrained", [(1, 170, 40), (2, 405, 60), (3, 740, 80)])
def test_bdm_dof_counts(order, total, constrained):
    V = build_space(unit_square_mesh(5), "bdm", order)
    assert V.num_dofs == total and len(V.constrained) == constrained
    assert V.num_free == total - constrained


def test_dg_dof_counts():
    P = build_space(unit_square_mesh(5), "dg", 1)
    assert P.num_dofs == 150 and len(P.constrained) == 0
    assert len(np.unique(P.cell_dofs)) == P.cell_dofs.size


def test_constrained_dofs_are_boundary_facet_dofs():
    mesh = unit_square_mesh(3)
    V = build_space(mesh, "bdm", 2)
    expect = np.concatenate([f * 3 + np.arange(3) for f in mesh.boundary_facets])
    assert np.array_equal(np.sort(V.constrained), np.sort(expect))


def test_interior_facet_dofs_shared_by_two_cells():
    mesh = unit_square_mesh(3)
    V = build_space(mesh, "bdm", 1)
    counts = np.bincount(V.cell_dofs.ravel(), minlength=V.num_dofs)
    facet_dofs = counts[: 2 * mesh.num_facets].reshape(mesh.num_facets, 2)
    assert np.all(facet_dofs[~mesh.is_boundary] == 2)
    assert np.all(facet_dofs[mesh.is_boundary] == 1)


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("level", [0, 1, 2])
def test_random_fields_are_hdiv_conforming(order, level):
    rng = np.random.default_rng(100 * order + level)
    mesh = refined_mesh(2, level)
    V = build_space(mesh, "bdm", order)
    x = V.extend(rng.standard_normal(V.num_free))
    tr = facet_traces(V, npoints=order + 3)
    n = mesh.facet_normals
    flux = np.einsum("fsqbc,fsb,fc->fsq", tr.values, x[tr.dofs], n)
    scale = np.abs(flux).max()
    inner = ~mesh.is_boundary
    assert np.abs(flux[inner, 0] - flux[inner, 1]).max() <= 1e-12 * scale
    assert np.abs(flux[~inner, 0]).max() <= 1e-12 * scale


@pytest.mark.parametrize("order", [1, 2, 3])
def test_divergence_lies_in_pressure_space(order):
    rng = np.random.default_rng(order)
    mesh = refined_mesh(2, 1)
    V = build_space(mesh, "bdm", order)
    P = build_space(mesh, "dg", order - 1)
    q = triangle_rule(2 * order + 2)
    x = V.extend(rng.standard_normal(V.num_free))
    div = V.evaluate(x, q.nodes, "div")
    phi, _ = P.element.tabulate(q.nodes)
    coeff = np.einsum("q,cq,qb->cb", q.weights, div, phi)
    proj = coeff @ phi.T
    assert np.abs(proj - div).max() <= 1e-12 * np.abs(div).max()


def test_interpolate_zero_and_constant():
    mesh = unit_square_mesh(3)
    V = build_space(mesh, "bdm", 2)
    assert not np.any(V.interpolate(lambda x, y: np.zeros(x.shape + (2,))))
    c = V.interpolate(lambda x, y: np.stack(np.broadcast_arrays(1.0, 0.0 * x), axis=-1))
    pts = triangle_rule(5).nodes
    vals = V.evaluate(c, pts)
    assert np.abs(vals - [1.0, 0.0]).max() <= 1e-12


@pytest.mark.parametrize("order", [1, 2, 3])
def test_polynomial_reproduction(order):
    rng = np.random.default_rng(7)
    a = rng.standard_normal((order + 1, order + 1, 2))

    def f(x, y):
        out = np.zeros(x.shape + (2,))
        for i in range(order + 1):
            for j in range(order + 1 - i):
                out += (x**i * y**j)[..., None] * a[i, j]
        return out

    mesh = refined_mesh(2, 1)
    V = build_space(mesh, "bdm", order)
    c = V.interpolate(f)
    pts = triangle_rule(6).nodes
    X = V.map_points(pts)
    assert np.abs(V.evaluate(c, pts) - f(X[..., 0], X[..., 1])).max() <= 1e-11


def test_pressure_cell_means_match_exact_integrals():
    """Oracle: exact symbolic integration of p(., 0) over each triangle."""
    sol = ManufacturedSolution()
    mesh = unit_square_mesh(5)
    P = build_space(mesh, "dg", 1)
    c = P.interpolate(lambda x, y: sol.p(x, y, 0.0))
    q = triangle_rule(4)
    ph = P.evaluate(c, q.nodes)
    _, det, _ = mesh.affine_maps()
    means = (ph * q.weights).sum(axis=1) * np.abs(det) / mesh.cell_areas

    x, y, s, t = sp.symbols("x y s t")
    phi = x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2
    p0 = -2 * sp.pi * (phi - sp.Rational(1, 900))
    V = [[sp.Rational(int(round(v * 5)), 5) for v in vert] for vert in mesh.vertices]
    for cell, mean in zip(mesh.cells, means):
        (x0, y0), (x1, y1), (x2, y2) = (V[i] for i in cell)
        sub = {x: x0 + (x1 - x0) * s + (x2 - x0) * t, y: y0 + (y1 - y0) * s + (y2 - y0) * t}
        jac = abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        integral = sp.integrate(sp.integrate(sp.expand(p0.subs(sub, simultaneous=True)), (t, 0, 1 - s)), (s, 0, 1))
        exact = float(integral * jac / (jac / 2))
        assert abs(mean - exact) <= 1e-10


def test_restrict_extend_round_trip():
    V = build_space(unit_square_mesh(2), "bdm", 2)
    x = np.arange(V.num_free, dtype=float)
    assert np.array_equal(V.restrict(V.extend(x)), x)
    assert not np.any(V.extend(x)[V.constrained])
