"""Material parameters of the dynamic Biot system."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def lame_from_young(E: float, nu: float) -> tuple[float, float]:
    """(lambda, mu) from Young's modulus and Poisson's ratio."""
    lam = nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def default_penalty(ell: int) -> float:
    """Interior penalty eta = 4 (l + 2)^2 for BDM_{l+1} displacements."""
    return 4.0 * (ell + 2) ** 2


@dataclass(frozen=True)
class ModelParameters:
    rho_bar: float
    rho_f: float
    rho_w: float
    alpha: float
    s0: float
    lam: float
    mu: float
    K_inv: np.ndarray = field(default_factory=lambda: np.eye(2))
    eta: float | None = None

    def __post_init__(self):
        K = np.array(self.K_inv, dtype=float)
        if K.ndim == 0:
            K = K * np.eye(2)
        K.setflags(write=False)
        object.__setattr__(self, "K_inv", K)
        self.validate()

    @classmethod
    def from_young(cls, E: float, nu: float, **kw) -> "ModelParameters":
        lam, mu = lame_from_young(E, nu)
        return cls(lam=lam, mu=mu, **kw)

    @property
    def density_matrix(self) -> np.ndarray:
        """M_rho = [[rho_bar, rho_f], [rho_f, rho_w]] coupling v and w."""
        return np.array([[self.rho_bar, self.rho_f], [self.rho_f, self.rho_w]])

    def penalty(self, ell: int) -> float:
        return self.eta if self.eta is not None else default_penalty(ell)

    def with_(self, **changes) -> "ModelParameters":
        return replace(self, **changes)

    def validate(self):
        checks = {
            "rho_bar > 0": self.rho_bar > 0,
            "rho_w > 0": self.rho_w > 0,
            "mu > 0": self.mu > 0,
            "lambda > 0": self.lam > 0,
            "s0 > 0": self.s0 > 0,
            "0 < alpha <= 1": 0 < self.alpha <= 1,
            "rho_bar rho_w - rho_f^2 > 0": self.rho_bar * self.rho_w - self.rho_f**2 > 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ValueError("invalid model parameters: " + ", ".join(bad))
        K = self.K_inv
        if K.shape != (2, 2) or not np.allclose(K, K.T, atol=1e-14):
            raise ValueError("K_inv must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(K).min() < -1e-14:
            raise ValueError("K_inv must be positive semidefinite")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("penalty eta must be positive")
