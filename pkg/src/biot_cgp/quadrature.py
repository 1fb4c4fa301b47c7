"""Quadrature rules on the unit interval and the reference triangle.

Interval rules live on [0, 1]; triangle rules on the reference triangle with
vertices (0, 0), (1, 0), (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

MAX_TRIANGLE_DEGREE = 30


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes, weights and the polynomial degree the rule integrates exactly."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        """Apply the rule to samples taken at ``nodes`` (leading axis)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _legendre_roots(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1, 1], Newton-polished."""
    x, w = legendre.leggauss(n)
    c = np.zeros(n + 1)
    c[n] = 1.0
    dc = legendre.legder(c)
    for _ in range(3):
        x = x - legendre.legval(x, c) / legendre.legval(x, dc)
    # w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2)
    w = 2.0 / ((1.0 - x**2) * legendre.legval(x, dc) ** 2)
    return x, w


@lru_cache(maxsize=None)
def gauss_rule(k: int) -> QuadratureRule:
    """k-point Gauss rule on [0, 1], exact for degree 2k - 1."""
    if k < 1:
        raise ValueError(f"Gauss rule needs at least one point, got {k}")
    if k == 1:
        x, w = np.array([0.5]), np.array([1.0])
    elif k == 2:
        d = 0.5 / np.sqrt(3.0)
        x, w = np.array([0.5 - d, 0.5 + d]), np.array([0.5, 0.5])
    elif k == 3:
        d = 0.5 * np.sqrt(0.6)
        x = np.array([0.5 - d, 0.5, 0.5 + d])
        w = np.array([5.0, 8.0, 5.0]) / 18.0
    else:
        xr, wr = _legendre_roots(k)
        x, w = 0.5 * (xr + 1.0), 0.5 * wr
    return QuadratureRule(x, w, 2 * k - 1)


@lru_cache(maxsize=None)
def gauss_lobatto_rule(npoints: int) -> QuadratureRule:
    """Gauss-Lobatto rule on [0, 1] with ``npoints`` = k + 1 nodes (exact for 2k - 1)."""
    if npoints < 2:
        raise ValueError(f"Gauss-Lobatto rule needs at least 2 points, got {npoints}")
    k = npoints - 1
    if npoints == 2:
        x, w = np.array([0.0, 1.0]), np.array([0.5, 0.5])
    elif npoints == 3:
        x = np.array([0.0, 0.5, 1.0])
        w = np.array([1.0, 4.0, 1.0]) / 6.0
    elif npoints == 4:
        d = np.sqrt(5.0) / 10.0
        x = np.array([0.0, 0.5 - d, 0.5 + d, 1.0])
        w = np.array([1.0, 5.0, 5.0, 1.0]) / 12.0
    else:
        # interior nodes are the roots of P_k' on [-1, 1]
        c = np.zeros(k + 1)
        c[k] = 1.0
        dc = legendre.legder(c)
        ddc = legendre.legder(dc)
        xi = np.sort(legendre.legroots(dc).real)
        for _ in range(3):
            xi = xi - legendre.legval(xi, dc) / legendre.legval(xi, ddc)
        xr = np.concatenate([[-1.0], xi, [1.0]])
        wr = 2.0 / (k * (k + 1) * legendre.legval(xr, c) ** 2)
        x, w = 0.5 * (xr + 1.0), 0.5 * wr
    return QuadratureRule(x, w, 2 * k - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle exact for total degree ``degree``.

    Built from a collapsed (Duffy) tensor product: Gauss-Jacobi(1, 0) in the
    collapsed direction and Gauss-Legendre along the fibres.
    """
    if degree < 0 or degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"triangle rule degree must be in [0, {MAX_TRIANGLE_DEGREE}], got {degree}"
        )
    if degree <= 1:
        return QuadratureRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1)
    n = degree // 2 + 1
    # x = (1 + a)/2 on [-1,1] with weight (1 - a) -> factor (1 - x) from the collapse
    a, wa = roots_jacobi(n, 1.0, 0.0)
    b, wb = _legendre_roots(n)
    x = 0.5 * (1.0 + a)
    s = 0.5 * (1.0 + b)
    X = np.repeat(x, n)
    Y = np.outer(1.0 - x, s).ravel()
    W = np.outer(wa / 4.0, wb / 2.0).ravel()
    return QuadratureRule(np.column_stack([X, Y]), W, 2 * n - 1)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)
