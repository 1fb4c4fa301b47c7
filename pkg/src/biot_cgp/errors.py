"""L^inf(L^2) error norms sampled on slabs, and experimental orders of convergence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import OperatorSet
from .quadrature import triangle_rule
from .timestepping import Trajectory, lagrange_basis
from .quadrature import gauss_lobatto_rule

COLUMNS = ("grad_u", "v", "w", "p")
_CHUNK = 16


def eoc(errs: Sequence[float]) -> list[float]:
    """log2 ratios of consecutive errors under halving of h and tau."""
    e = np.asarray(errs, dtype=float)
    if len(e) < 2:
        raise ValueError("need at least two levels")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite")
    return list(np.log2(e[:-1] / e[1:]))


def _field_data(ops: OperatorSet, traj: Trajectory, name: str):
    """(coefficient name, space, evaluation kind) for an error column."""
    if name == "grad_u":
        return "u", ops.vspace, "jac"
    if name in ("u", "v", "w"):
        return name, ops.vspace, "value"
    if name == "p":
        return "p", ops.pspace, "value"
    raise KeyError(f"unknown field {name!r}")


def linf_l2_error(
    traj: Trajectory,
    ops: OperatorSet,
    exact: Callable,
    name: str,
    samples: int = 100,
    quad_degree: int | None = None,
) -> float:
    """max over t_{n,i} = t_{n-1} + i tau_n / samples, i = 0..samples, of ||exact - discrete||_L2.

    ``name`` is "u", "v", "w", "p" or "grad_u" (broken gradient of u);
    ``exact(x, y, t)`` must broadcast a time array of shape (ns, 1, 1).
    """
    coeff_name, space, kind = _field_data(ops, traj, name)
    deg = quad_degree if quad_degree is not None else 2 * (ops.ell + 2)
    q = triangle_rule(deg)
    X = space.map_points(q.nodes)
    x, y = X[None, ..., 0], X[None, ..., 1]
    _, det, _ = space.mesh.affine_maps()
    dx = q.weights[None, :] * np.abs(det)[:, None]
    s = np.arange(samples + 1) / samples
    worst = 0.0
    for slab in traj.slabs:
        blocks = slab.field(coeff_name)
        if space.is_vector:
            blocks = space.extend(blocks)
        node_vals = space.evaluate(blocks, q.nodes, kind)  # (k+1, nc, nq, ...)
        L = lagrange_basis(gauss_lobatto_rule(slab.k + 1).nodes, s)
        for c0 in range(0, len(s), _CHUNK):
            Lc = L[c0:c0 + _CHUNK]
            disc = np.tensordot(Lc, node_vals, axes=(1, 0))
            t = (slab.t0 + slab.tau * s[c0:c0 + _CHUNK])[:, None, None]
            err = np.asarray(exact(x, y, t)) - disc
            sq = err**2
            while sq.ndim > 3:
                sq = sq.sum(axis=-1)
            norms = np.sqrt(np.einsum("cq,scq->s", dx, sq))
            worst = max(worst, float(norms.max()))
    return worst


def broken_grad_error(traj: Trajectory, ops: OperatorSet, exact_grad: Callable, samples: int = 100) -> float:
    """L^inf(L^2) norm of the cell-wise full gradient of the displacement error."""
    return linf_l2_error(traj, ops, exact_grad, "grad_u", samples)


@dataclass
class ErrorRow:
    level: int
    tau: float
    h: float
    errors: dict[str, float]
    seconds: float = 0.0


@dataclass
class ErrorReport:
    k: int
    ell: int
    rows: list[ErrorRow] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        return [r.errors[name] for r in self.rows]

    def rates(self, name: str) -> list[float | None]:
        """eoc per row, None for the first level."""
        if len(self.rows) < 2:
            return [None] * len(self.rows)
        return [None] + eoc(self.column(name))

    def table_rows(self) -> list[list[str]]:
        out = []
        rates = {c: self.rates(c) for c in COLUMNS}
        for i, r in enumerate(self.rows):
            line = [str(r.level), f"{r.tau:.6e}", f"{r.h:.6e}"]
            for c in COLUMNS:
                line.append(f"{r.errors[c]:.6e}")
                line.append("--" if rates[c][i] is None else f"{rates[c][i]:.4f}")
            out.append(line)
        return out


def measure_errors(traj: Trajectory, ops: OperatorSet, solution, samples: int = 100) -> dict[str, float]:
    """All four table columns for a benchmark trajectory."""
    return {
        "grad_u": linf_l2_error(traj, ops, solution.grad_u, "grad_u", samples),
        "v": linf_l2_error(traj, ops, solution.v, "v", samples),
        "w": linf_l2_error(traj, ops, solution.w, "w", samples),
        "p": linf_l2_error(traj, ops, solution.p, "p", samples),
    }
