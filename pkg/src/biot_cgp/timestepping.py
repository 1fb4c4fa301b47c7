"""Continuous Galerkin-Petrov cGP(k) time slabs for the four-field system.

On every slab the trial functions are polynomials of degree k represented by
their values at the k + 1 Gauss-Lobatto nodes; the test functions are the
Lagrange polynomials of degree k - 1 at the k Gauss nodes.  All temporal
integrals are evaluated with the k-point Gauss rule, which is exact for the
integrands involved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np
import scipy.sparse as sp

from .assembly import OperatorSet
from .linalg import RESIDUAL_TOL, BlockSystem, Factorization, SolverError, block_insert, relative_residual
from .quadrature import gauss_lobatto_rule, gauss_rule

log = logging.getLogger(__name__)

FIELDS = ("u", "v", "w", "p")


# -- temporal reference data ------------------------------------------------

def lagrange_basis(nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """L_j(s_i) for Lagrange polynomials on ``nodes``; shape (len(s), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = len(nodes)
    out = np.ones((len(s), n))
    for j in range(n):
        for m in range(n):
            if m != j:
                out[:, j] *= (s - nodes[m]) / (nodes[j] - nodes[m])
    return out


def lagrange_derivative(nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """L_j'(s_i); shape (len(s), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = len(nodes)
    out = np.zeros((len(s), n))
    for j in range(n):
        for r in range(n):
            if r == j:
                continue
            term = np.full(len(s), 1.0 / (nodes[j] - nodes[r]))
            for m in range(n):
                if m != j and m != r:
                    term *= (s - nodes[m]) / (nodes[j] - nodes[m])
            out[:, j] += term
    return out


@dataclass(frozen=True)
class TemporalMatrices:
    """alpha[i, j] = int_0^1 L_j^GL' L_i^G ds and beta[i, j] = int_0^1 L_j^GL L_i^G ds."""

    k: int
    alpha: np.ndarray
    beta: np.ndarray
    gl_nodes: np.ndarray
    gauss_nodes: np.ndarray
    gauss_weights: np.ndarray


def temporal_matrices(k: int) -> TemporalMatrices:
    if k < 1:
        raise ValueError(f"cGP degree must be at least 1, got {k}")
    gl = gauss_lobatto_rule(k + 1).nodes
    g = gauss_rule(k)
    # L_i^G(s_q^G) = delta_iq, so Gauss quadrature collapses to one term per row
    alpha = g.weights[:, None] * lagrange_derivative(gl, g.nodes)
    beta = g.weights[:, None] * lagrange_basis(gl, g.nodes)
    return TemporalMatrices(k, alpha, beta, np.array(gl), np.array(g.nodes), np.array(g.weights))


# -- time mesh and states -----------------------------------------------------

@dataclass(frozen=True)
class TimeMesh:
    boundaries: np.ndarray
    taus: np.ndarray

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimeMesh":
        if n < 1 or T <= 0:
            raise ValueError("need T > 0 and at least one slab")
        tau = T / n
        return cls(np.arange(n + 1) * tau, np.full(n, tau))

    @classmethod
    def from_boundaries(cls, t) -> "TimeMesh":
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("slab boundaries must be strictly increasing")
        return cls(t, np.diff(t))

    @property
    def num_slabs(self) -> int:
        return len(self.taus)

    @property
    def T(self) -> float:
        return float(self.boundaries[-1])

    def gl_times(self, n: int, k: int) -> np.ndarray:
        """Gauss-Lobatto times of slab n (0-based)."""
        return self.boundaries[n] + self.taus[n] * gauss_lobatto_rule(k + 1).nodes

    def gauss_times(self, n: int, k: int) -> np.ndarray:
        return self.boundaries[n] + self.taus[n] * gauss_rule(k).nodes


@dataclass
class SlabState:
    """Coefficients (free dofs) of u, v, w, p at the k + 1 Gauss-Lobatto nodes.

    ``nodes[j]`` stacks (u, v, w, p) for node j; node 0 is a copy of the
    previous slab's last node.
    """

    index: int
    t0: float
    tau: float
    nodes: np.ndarray
    nv: int
    np_: int

    @property
    def k(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def t1(self) -> float:
        return self.t0 + self.tau

    def field(self, name: str) -> np.ndarray:
        """Node blocks (k + 1, n) of one field."""
        return self.nodes[:, field_slice(name, self.nv, self.np_)]

    def evaluate(self, t, name: str | None = None, derivative: bool = False) -> np.ndarray:
        """Lagrange evaluation on the slab's GL nodes at time(s) ``t``."""
        gl = gauss_lobatto_rule(self.k + 1).nodes
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - self.t0) / self.tau
        if derivative:
            L = lagrange_derivative(gl, s) / self.tau
        else:
            L = lagrange_basis(gl, s)
        data = self.nodes if name is None else self.field(name)
        out = L @ data
        return out[0] if np.ndim(t) == 0 else out


def field_slice(name: str, nv: int, np_: int) -> slice:
    i = FIELDS.index(name)
    if i < 3:
        return slice(i * nv, (i + 1) * nv)
    return slice(3 * nv, 3 * nv + np_)


def stack_state(u, v, w, p) -> np.ndarray:
    return np.concatenate([u, v, w, p])


@dataclass
class Trajectory:
    time_mesh: TimeMesh
    slabs: list[SlabState] = field(default_factory=list)

    @property
    def nv(self) -> int:
        return self.slabs[0].nv

    @property
    def np_(self) -> int:
        return self.slabs[0].np_

    def slab_index(self, t: float) -> int:
        T = self.time_mesh.boundaries
        if t < T[0] - 1e-14 or t > T[-1] + 1e-14:
            raise ValueError(f"t={t} outside [{T[0]}, {T[-1]}]")
        n = int(np.searchsorted(T, t, side="left")) - 1
        return min(max(n, 0), len(self.slabs) - 1)

    def evaluate(self, t: float, name: str | None = None, derivative: bool = False) -> np.ndarray:
        n = self.slab_index(t)
        return self.slabs[n].evaluate(float(t), name, derivative)

    def final(self) -> np.ndarray:
        return self.slabs[-1].nodes[-1]


# -- sources ------------------------------------------------------------------

class Sources(Protocol):
    def __call__(self, t: float) -> tuple[np.ndarray, ...]:
        """Momentum load (free vector dofs) and mass-balance load at time t.

        A third entry, if present, is a load on the Darcy rows (zero for the
        physical model; used by exactness tests).
        """


class ZeroSources:
    def __init__(self, ops: OperatorSet):
        self.nv, self.np_ = ops.nv, ops.np_

    def __call__(self, t):
        return np.zeros(self.nv), np.zeros(self.np_)


class FieldSources:
    """Loads from pointwise body force f(x, y, t) and source g(x, y, t)."""

    def __init__(self, ops: OperatorSet, f: Callable | None, g: Callable | None):
        self.ops, self.f, self.g = ops, f, g
        self._last: tuple[float, tuple] | None = None

    def __call__(self, t):
        if self._last is not None and self._last[0] == t:
            return self._last[1]
        F = self.ops.vector_load(self.f, t) if self.f is not None else np.zeros(self.ops.nv)
        G = self.ops.scalar_load(self.g, t) if self.g is not None else np.zeros(self.ops.np_)
        self._last = (t, (F, G))
        return F, G


# -- slab solver ----------------------------------------------------------------

def energy(ops: OperatorSet, X: np.ndarray) -> float:
    """1/2 a_h(u,u) + 1/2 <M_rho (v,w), (v,w)> + s0/2 ||p||^2 for a stacked state."""
    nv, np_ = ops.nv, ops.np_
    u, v, w, p = (X[field_slice(n, nv, np_)] for n in FIELDS)
    pr = ops.params
    Mv, Mw = ops.M @ v, ops.M @ w
    kin = pr.rho_bar * v @ Mv + 2.0 * pr.rho_f * v @ Mw + pr.rho_w * w @ Mw
    return 0.5 * (u @ (ops.A @ u) + kin + pr.s0 * p @ (ops.M_p @ p))


class SlabSolver:
    """Builds, factors (once per distinct tau) and solves the cGP(k) slab systems."""

    def __init__(self, ops: OperatorSet, k: int, check_pressure_mean: bool = False):
        self.ops = ops
        self.k = k
        self.tm = temporal_matrices(k)
        self.check_pressure_mean = check_pressure_mean
        self._factors: dict[float, ModalSlabFactorization] = {}
        self._mass_factor: Factorization | None = None
        self._matrices: dict[float, sp.csr_matrix] = {}
        self.mass_op, self.stiff_op = self._spatial_blocks()
        self._pmean = self._pressure_mean_functional()

    def _spatial_blocks(self):
        o, pr = self.ops, self.ops.params
        M, B, Bt = o.M, o.B, o.B.T.tocsr()
        mass = block_insert([
            [None, pr.rho_bar * M, pr.rho_f * M, None],
            [M, None, None, None],
            [None, pr.rho_f * M, pr.rho_w * M, None],
            [pr.alpha * B, None, None, pr.s0 * o.M_p],
        ])
        stiff = block_insert([
            [o.A, None, None, -pr.alpha * Bt],
            [None, -M, None, None],
            [None, None, o.M_Kinv, -Bt],
            [None, None, B, None],
        ])
        return mass, stiff

    def _pressure_mean_functional(self) -> np.ndarray:
        P = self.ops.pspace
        from .assembly import assemble_load

        return assemble_load(P, lambda x, y, t: np.ones_like(x), 0.0, quad_degree=2 * P.degree)

    @property
    def block_sizes(self):
        nv, np_ = self.ops.nv, self.ops.np_
        return (nv, nv, nv, np_)

    def matrix(self, tau: float) -> sp.csr_matrix:
        if tau not in self._matrices:
            a1 = sp.csr_matrix(self.tm.alpha[:, 1:])
            b1 = sp.csr_matrix(self.tm.beta[:, 1:])
            S = sp.kron(a1, self.mass_op) + tau * sp.kron(b1, self.stiff_op)
            self._matrices[tau] = S.tocsr()
        return self._matrices[tau]

    def factorization(self, tau: float) -> "ModalSlabFactorization":
        if tau not in self._factors:
            log.debug("factoring slab operators for tau=%g", tau)
            if self._mass_factor is None:
                self._mass_factor = Factorization(self.ops.M)
            self._factors[tau] = ModalSlabFactorization(self.ops, self.tm, tau, self._mass_factor)
        return self._factors[tau]

    def build_system(self, X0: np.ndarray, t0: float, tau: float, sources: Sources) -> BlockSystem:
        k = self.k
        gl_t = t0 + tau * self.tm.gl_nodes
        loads = []
        nv = self.ops.nv
        for t in gl_t:
            parts = sources(float(t))
            if not all(np.all(np.isfinite(x)) for x in parts):
                raise ValueError(f"non-finite source at t={t}")
            L = np.zeros(len(X0))
            L[:nv] = parts[0]
            L[3 * nv:] = parts[1]
            if len(parts) > 2:
                L[2 * nv:3 * nv] = parts[2]
            loads.append(L)
        loads = np.array(loads)
        mX0 = self.mass_op @ X0
        sX0 = self.stiff_op @ X0
        rhs = np.empty((k, len(X0)))
        for i in range(k):
            rhs[i] = tau * (self.tm.beta[i] @ loads) - self.tm.alpha[i, 0] * mX0 - tau * self.tm.beta[i, 0] * sX0
        return BlockSystem(self.matrix(tau), rhs.ravel(), self.block_sizes, k)

    def solve_slab(self, prev: np.ndarray, index: int, t0: float, tau: float, sources: Sources) -> SlabState:
        """Advance from the stacked state ``prev`` at t0 over one slab of length tau."""
        system = self.build_system(prev, t0, tau, sources)
        fac = self.factorization(tau)
        try:
            x = fac.solve_checked(system.matrix, system.rhs)
        except SolverError as exc:
            raise SolverError(f"slab {index}: {exc}") from exc
        nodes = np.empty((self.k + 1, len(prev)))
        nodes[0] = prev
        nodes[1:] = x.reshape(self.k, len(prev))
        state = SlabState(index, t0, tau, nodes, self.ops.nv, self.ops.np_)
        if self.check_pressure_mean:
            self._assert_pressure_mean(state)
        return state

    def _assert_pressure_mean(self, state: SlabState):
        p = state.field("p")[-1]
        mean = abs(self._pmean @ p)
        norm = np.sqrt(p @ (self.ops.M_p @ p))
        if mean > 1e-10 * max(norm, 1e-300):
            raise SolverError(
                f"slab {state.index}: pressure mean {mean:.3e} exceeds 1e-10 * ||p|| = {1e-10 * norm:.3e}"
            )

    def residual(self, state: SlabState, sources: Sources) -> float:
        """Relative residual of the assembled slab system for a computed state."""
        system = self.build_system(state.nodes[0], state.t0, state.tau, sources)
        return relative_residual(system.matrix, state.nodes[1:].ravel(), system.rhs)


class ModalSlabFactorization:
    """Direct solver for the coupled cGP(k) slab system.

    The slab matrix is kron(Ah, Mass) + tau kron(Bh, Stiff) with k x k temporal
    blocks Ah, Bh.  Writing inv(Ah) Bh = Q diag(lam) inv(Q) decouples it into k
    one-node systems Mass + z Stiff, z = tau lam (a real mode or a complex
    conjugate pair).  In each of them the kinematic row M u - z M v = r gives
    u = inv(M) r + z v, leaving a (v, w, p) system that is factored once.
    Conjugate modes reuse the factors of their partner.
    """

    def __init__(self, ops: OperatorSet, tm: TemporalMatrices, tau: float, mass_factor: Factorization):
        self.ops = ops
        self.tau = tau
        self.mass_factor = mass_factor
        Ah, Bh = tm.alpha[:, 1:], tm.beta[:, 1:]
        lam, Q = np.linalg.eig(np.linalg.solve(Ah, Bh))
        self.Q = Q
        self.left = np.linalg.solve(Q, np.linalg.inv(Ah))
        self.z = tau * lam
        self.modes: list[tuple[int, bool]] = []  # (index of factored mode, conjugate?)
        self.factors: dict[int, Factorization] = {}
        scale = np.abs(lam).max()
        for m, zm in enumerate(self.z):
            if abs(zm.imag) <= 1e-12 * tau * scale:
                self.z[m] = zm.real
                self.factors[m] = Factorization(self._reduced(zm.real))
                self.modes.append((m, False))
                continue
            partner = next((j for j in self.factors if abs(self.z[j] - np.conj(zm)) <= 1e-10 * tau * scale), None)
            if partner is not None:
                self.modes.append((partner, True))
            else:
                self.factors[m] = Factorization(self._reduced(zm))
                self.modes.append((m, False))

    def _reduced(self, z) -> sp.csr_matrix:
        o, pr = self.ops, self.ops.params
        M, B, Bt = o.M, o.B, o.B.T.tocsr()
        return block_insert([
            [pr.rho_bar * M + z * z * o.A, pr.rho_f * M, -z * pr.alpha * Bt],
            [pr.rho_f * M, pr.rho_w * M + z * o.M_Kinv, -z * Bt],
            [z * pr.alpha * B, z * B, pr.s0 * o.M_p],
        ])

    def _solve_mode(self, m: int, r: np.ndarray) -> np.ndarray:
        o, pr = self.ops, self.ops.params
        nv = o.nv
        z = self.z[m]
        r0, r1, r2, r3 = (r[field_slice(n, nv, o.np_)] for n in FIELDS)
        u1 = self.mass_factor.solve(r1)
        rhs = np.concatenate([r0 - z * (o.A @ u1), r2, r3 - pr.alpha * (o.B @ u1)])
        y = self.factors[m].solve(rhs)
        v = y[:nv]
        return np.concatenate([u1 + z * v, y])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        k = len(self.z)
        R = np.asarray(rhs, dtype=float).reshape(k, -1)
        Rt = self.left @ R
        Y = np.empty_like(Rt)
        for m, (src, conj) in enumerate(self.modes):
            Y[m] = np.conj(self._solve_mode(src, np.conj(Rt[m]))) if conj else self._solve_mode(src, Rt[m])
        return np.real(self.Q @ Y).ravel()

    def solve_checked(self, A, rhs: np.ndarray, tol: float = RESIDUAL_TOL, refine: int = 2) -> np.ndarray:
        """Solve and verify the residual against the assembled slab matrix ``A``."""
        x = self.solve(rhs)
        res = relative_residual(A, x, rhs)
        for _ in range(refine):
            if res <= 0.01 * tol:
                break
            x = x + self.solve(rhs - A @ x)
            res = relative_residual(A, x, rhs)
        self.last_residual = res
        if not np.isfinite(res) or res > tol:
            raise SolverError(f"slab residual {res:.3e} exceeds {tol:.1e}")
        return x


def run(
    time_mesh: TimeMesh,
    initial: np.ndarray,
    ops: OperatorSet,
    k: int,
    sources: Sources | None = None,
    *,
    solver: SlabSolver | None = None,
    start: int = 0,
    stop: int | None = None,
    callback: Callable[[SlabState], None] | None = None,
    check_pressure_mean: bool = False,
) -> Trajectory:
    """Integrate slabs ``start`` .. ``stop`` - 1 from the stacked state ``initial``.

    ``initial`` is the state at ``time_mesh.boundaries[start]``.
    """
    solver = solver or SlabSolver(ops, k, check_pressure_mean=check_pressure_mean)
    sources = sources or ZeroSources(ops)
    stop = time_mesh.num_slabs if stop is None else stop
    X = np.asarray(initial, dtype=float)
    if X.shape != (3 * ops.nv + ops.np_,):
        raise ValueError(f"initial state has shape {X.shape}, expected {(3 * ops.nv + ops.np_,)}")
    traj = Trajectory(time_mesh)
    for n in range(start, stop):
        try:
            st = solver.solve_slab(X, n, float(time_mesh.boundaries[n]), float(time_mesh.taus[n]), sources)
        except (SolverError, ValueError) as exc:
            raise SolverError(f"slab {n} failed: {exc}") from exc
        traj.slabs.append(st)
        if callback is not None:
            callback(st)
        X = st.nodes[-1]
    return traj


def initial_state(ops: OperatorSet, u0, v0, w0, p0) -> np.ndarray:
    """Interpolated initial data: BDM dof interpolants and cell-wise L2 projection."""
    V, P = ops.vspace, ops.pspace
    parts = [V.restrict(V.interpolate(f)) for f in (u0, v0, w0)]
    return stack_state(*parts, P.interpolate(p0))


# -- checkpoints ----------------------------------------------------------------

_HEADER_END = "END\n"


def save_checkpoint(path, state: SlabState, ell: int, level: int) -> None:
    """Plain-text header followed by little-endian float64 blocks (field, node)."""
    header = {
        "format": "biot-cgp-slab-1",
        "k": state.k,
        "ell": ell,
        "level": level,
        "tau": repr(float(state.tau)),
        "t0": repr(float(state.t0)),
        "slab": state.index,
        "nv": state.nv,
        "np": state.np_,
        "fields": ",".join(FIELDS),
    }
    with open(path, "wb") as fh:
        fh.write("".join(f"{k}={v}\n" for k, v in header.items()).encode("ascii"))
        fh.write(_HEADER_END.encode("ascii"))
        for name in FIELDS:
            for j in range(state.k + 1):
                fh.write(np.ascontiguousarray(state.field(name)[j], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[SlabState, dict]:
    raw = Path(path).read_bytes()
    end = raw.index(_HEADER_END.encode("ascii"))
    meta = dict(line.split("=", 1) for line in raw[:end].decode("ascii").splitlines())
    k, nv, np_ = int(meta["k"]), int(meta["nv"]), int(meta["np"])
    data = np.frombuffer(raw[end + len(_HEADER_END):], dtype="<f8")
    nodes = np.empty((k + 1, 3 * nv + np_))
    off = 0
    for name in FIELDS:
        sl = field_slice(name, nv, np_)
        size = sl.stop - sl.start
        for j in range(k + 1):
            nodes[j, sl] = data[off:off + size]
            off += size
    if off != len(data):
        raise ValueError(f"checkpoint {path}: {len(data) - off} trailing values")
    state = SlabState(int(meta["slab"]), float(meta["t0"]), float(meta["tau"]), nodes, nv, np_)
    return state, meta
