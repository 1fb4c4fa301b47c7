"""Manufactured benchmark solution on (0,1)^2 x (0,1].

With a(s) = s^2 (1 - s)^2 and phi(x, y) = a(x) a(y), the displacement and
flux are u = w = sin(pi t) grad(phi) and the pressure is
p = c(t) (phi - 1/900), c(t) = -rho_w pi cos(pi t) + (rho_f pi^2 - 1) sin(pi t).
Because u is a gradient, div eps(u) and grad div u both reduce to
grad(lap phi), which keeps the source terms short.
"""

from __future__ import annotations

import numpy as np

from .parameters import ModelParameters

PRESSURE_SHIFT = 1.0 / 900.0


def default_parameters(eta: float | None = None) -> ModelParameters:
    """Benchmark material data: E = 100, nu = 0.35, K = I."""
    return ModelParameters.from_young(
        100.0, 0.35,
        rho_bar=0.95, rho_f=1.0, rho_w=2.0, alpha=0.9, s0=0.01,
        K_inv=np.eye(2), eta=eta,
    )


def _a(s):
    return s**2 * (1 - s) ** 2


def _a1(s):
    return 4 * s**3 - 6 * s**2 + 2 * s


def _a2(s):
    return 12 * s**2 - 12 * s + 2


def _a3(s):
    return 24 * s - 12


def _vec(a, b):
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


def _tf(values, x, y, extra: int = 1):
    """Broadcast a time factor against (x, y) and append ``extra`` component axes."""
    shape = np.broadcast_shapes(np.shape(values), np.shape(x), np.shape(y))
    return np.broadcast_to(values, shape)[(...,) + (None,) * extra]


class ManufacturedSolution:
    """Closed-form fields and sources of the benchmark for given parameters."""

    fields = ("u", "v", "w", "p", "grad_u", "f", "g")

    def __init__(self, params: ModelParameters | None = None):
        self.params = params or default_parameters()

    # time factors
    def pressure_factor(self, t):
        pr = self.params
        return -pr.rho_w * np.pi * np.cos(np.pi * t) + (pr.rho_f * np.pi**2 - 1) * np.sin(np.pi * t)

    def pressure_factor_dt(self, t):
        pr = self.params
        return pr.rho_w * np.pi**2 * np.sin(np.pi * t) + (pr.rho_f * np.pi**2 - 1) * np.pi * np.cos(np.pi * t)

    # spatial profiles
    @staticmethod
    def phi(x, y):
        return _a(x) * _a(y)

    @staticmethod
    def profile(x, y):
        """grad(phi): the common spatial shape of u, v and w."""
        return _vec(_a1(x) * _a(y), _a(x) * _a1(y))

    @staticmethod
    def profile_grad(x, y):
        """Hessian of phi, i.e. the gradient of ``profile``; shape (..., 2, 2)."""
        xy = _a1(x) * _a1(y)
        row0 = _vec(_a2(x) * _a(y), xy)
        row1 = _vec(xy, _a(x) * _a2(y))
        return np.stack([row0, row1], axis=-2)

    @staticmethod
    def lap_phi(x, y):
        return _a2(x) * _a(y) + _a(x) * _a2(y)

    @staticmethod
    def grad_lap_phi(x, y):
        return _vec(_a3(x) * _a(y) + _a1(x) * _a2(y), _a2(x) * _a1(y) + _a(x) * _a3(y))

    # fields
    def u(self, x, y, t):
        return _tf(np.sin(np.pi * t), x, y) * self.profile(x, y)

    w = u

    def v(self, x, y, t):
        return _tf(np.pi * np.cos(np.pi * t), x, y) * self.profile(x, y)

    def p(self, x, y, t):
        return self.pressure_factor(t) * (self.phi(x, y) - PRESSURE_SHIFT)

    def grad_u(self, x, y, t):
        return _tf(np.sin(np.pi * t), x, y, 2) * self.profile_grad(x, y)

    def f(self, x, y, t):
        """rho_bar u_tt - 2 mu div eps(u) - lambda grad div u + alpha grad p + rho_f w_t."""
        pr = self.params
        S, C = np.sin(np.pi * t), np.cos(np.pi * t)
        coef = -pr.rho_bar * np.pi**2 * S + pr.rho_f * np.pi * C + pr.alpha * self.pressure_factor(t)
        return _tf(coef, x, y) * self.profile(x, y) - (2 * pr.mu + pr.lam) * _tf(S, x, y) * self.grad_lap_phi(x, y)

    def g(self, x, y, t):
        """s0 p_t + alpha div u_t + div w."""
        pr = self.params
        S, C = np.sin(np.pi * t), np.cos(np.pi * t)
        return (
            pr.s0 * self.pressure_factor_dt(t) * (self.phi(x, y) - PRESSURE_SHIFT)
            + (pr.alpha * np.pi * C + S) * self.lap_phi(x, y)
        )

    def darcy_residual(self, x, y, t):
        """rho_f u_tt + rho_w w_t + K^{-1} w + grad p; zero for K = I."""
        pr = self.params
        S, C = np.sin(np.pi * t), np.cos(np.pi * t)
        U = self.profile(x, y)
        coef = -pr.rho_f * np.pi**2 * S + pr.rho_w * np.pi * C + self.pressure_factor(t)
        return _tf(coef, x, y) * U + _tf(S, x, y) * np.einsum("ij,...j->...i", pr.K_inv, U)

    # lookup by name
    def eval_exact(self, name: str, x, y, t):
        if name not in self.fields:
            raise KeyError(f"unknown field {name!r}; expected one of {self.fields}")
        return getattr(self, name)(x, y, t)

    def eval_sources(self, x, y, t):
        return self.f(x, y, t), self.g(x, y, t)

    def initial_data(self):
        """(u0, v0, w0, p0) as callables of (x, y)."""
        return tuple(
            (lambda name: (lambda x, y: self.eval_exact(name, x, y, 0.0)))(n)
            for n in ("u", "v", "w", "p")
        )


def eval_exact(name: str, x, y, t, params: ModelParameters | None = None):
    return ManufacturedSolution(params).eval_exact(name, x, y, t)


def eval_sources(x, y, t, params: ModelParameters | None = None):
    return ManufacturedSolution(params).eval_sources(x, y, t)
