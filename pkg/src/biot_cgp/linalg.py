"""Sparse storage helpers and a checked direct solver for the slab systems.

Storage is scipy CSR; factorisation is SuperLU with a COLAMD fill-reducing
column ordering.  Every solve verifies its relative residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorisation failure or a solve whose residual exceeds the tolerance."""


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape} @ {x.shape}")
    return A @ x


def spmv_transpose(A, x: np.ndarray) -> np.ndarray:
    """A^T x computed from CSR storage (same values as the explicit transpose)."""
    x = np.asarray(x)
    if A.shape[0] != x.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape}^T @ {x.shape}")
    return A.T.tocsr() @ x


def block_insert(blocks: list[list]) -> sp.csr_matrix:
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    return as_csr(sp.bmat(blocks, format="csr"))


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


class Factorization:
    """LU factors of a square sparse matrix, reusable for many right-hand sides.

    Solves only read the factors, so one instance may be shared.
    """

    def __init__(self, A, tol: float = RESIDUAL_TOL, refine: int = 2):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.tol = tol
        self.refine = refine
        # row equilibration keeps small-scale rows (e.g. s0-weighted ones) accurate
        rmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
        if np.any(rmax == 0):
            raise SolverError(f"singular matrix: {int(np.sum(rmax == 0))} zero rows")
        self.row_scale = 1.0 / rmax
        try:
            self.lu = spla.splu((sp.diags(self.row_scale) @ A).tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"LU factorisation failed for {A.shape} matrix: {exc}") from exc
        diag = np.abs(self.lu.U.diagonal())
        self.min_pivot = float(diag.min()) if diag.size else 0.0
        self.max_pivot = float(diag.max()) if diag.size else 0.0
        if not np.isfinite(self.min_pivot) or self.min_pivot == 0.0:
            raise SolverError(
                f"singular matrix: pivot range [{self.min_pivot:.3e}, {self.max_pivot:.3e}]"
            )

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        if np.iscomplexobj(b) and not np.iscomplexobj(self.A.data):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        b = b.astype(np.result_type(b.dtype, self.A.dtype, np.float64), copy=False)
        if not np.all(np.isfinite(b)):
            raise SolverError("right-hand side contains NaN or Inf")
        if not np.any(b):
            return np.zeros_like(b)
        d = self.row_scale
        x = self.lu.solve(d * b)
        res = relative_residual(self.A, x, b)
        # iterative refinement only kicks in when LU alone misses the target
        for _ in range(self.refine):
            if res <= 0.01 * self.tol:
                break
            x = x + self.lu.solve(d * (b - self.A @ x))
            res = relative_residual(self.A, x, b)
        self.last_residual = res
        if not np.isfinite(res) or res > self.tol:
            raise SolverError(
                f"relative residual {res:.3e} exceeds {self.tol:.1e} "
                f"(pivot range [{self.min_pivot:.3e}, {self.max_pivot:.3e}])"
            )
        return x


def solve(A, b: np.ndarray, tol: float = RESIDUAL_TOL) -> np.ndarray:
    """One-shot direct solve with residual verification."""
    return Factorization(A, tol=tol).solve(b)


@dataclass
class BlockSystem:
    """Slab system: unknown blocks ordered node-major, (u, v, w, p) within a node."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    block_sizes: tuple[int, ...]
    nodes: int

    @property
    def offsets(self) -> np.ndarray:
        per_node = np.cumsum((0,) + self.block_sizes)
        stride = per_node[-1]
        return np.concatenate([j * stride + per_node[:-1] for j in range(self.nodes)] + [[self.nodes * stride]])

    @property
    def dim(self) -> int:
        return self.nodes * sum(self.block_sizes)
