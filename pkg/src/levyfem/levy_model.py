"""Merton jump-diffusion parameters for two assets and the derived PIDE coefficients.

Jumps of the two log-prices are independent; each axis carries a Gaussian
Levy density ``k_i(y) = lambda_i * N(y; nu_i, gamma_i^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ModelParams",
    "kernel_density",
    "antiderivative_K",
    "drift_correction_chi",
    "jump_moment_Lambda",
    "diffusion_matrix",
    "drift_vector",
]


class UndefinedPointError(ValueError):
    """Raised when the tail anti-derivative is evaluated at z = 0."""


def _pair(v) -> tuple[float, float]:
    if np.isscalar(v):
        return (float(v), float(v))
    a, b = v
    return (float(a), float(b))


@dataclass(frozen=True)
class ModelParams:
    """Market and Levy parameters.

    Pairs are (asset 1, asset 2). Scalars passed for pair fields are
    broadcast to both assets.
    """

    r: float = 0.05
    sigma: tuple[float, float] = (0.2, 0.2)
    rho: float = 0.0
    lam: tuple[float, float] = (0.1, 0.1)
    nu: tuple[float, float] = (-0.9, -0.9)
    gamma: tuple[float, float] = (0.45, 0.45)
    T: float = 1.0
    K: float = 40.0
    w: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        for name in ("sigma", "lam", "nu", "gamma", "w"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if min(self.sigma) <= 0:
            raise ValueError("sigma must be positive")
        if min(self.gamma) <= 0:
            raise ValueError("gamma must be positive")
        if min(self.lam) < 0:
            raise ValueError("jump intensities must be nonnegative")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1 for a positive-definite diffusion")
        if self.T <= 0 or self.K <= 0:
            raise ValueError("T and K must be positive")
        if min(self.w) < 0:
            raise ValueError("weights must be nonnegative")

    def replace(self, **changes) -> "ModelParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ModelParams(**d)

    def axis(self, ax: int) -> tuple[float, float, float]:
        """(lambda, nu, gamma) of asset ``ax`` (1 or 2)."""
        if ax not in (1, 2):
            raise ValueError(f"axis must be 1 or 2, got {ax!r}")
        i = ax - 1
        return self.lam[i], self.nu[i], self.gamma[i]


def kernel_density(p: ModelParams, ax: int, y):
    lam, nu, gam = p.axis(ax)
    y = np.asarray(y, dtype=float)
    return lam * np.exp(-0.5 * ((y - nu) / gam) ** 2) / (math.sqrt(2 * math.pi) * gam)


def antiderivative_K(p: ModelParams, ax: int, z):
    """Signed tail mass of the Levy density.

    ``K(z) = int_z^inf k`` for z > 0 and ``-int_{-inf}^z k`` for z < 0.
    """
    lam, nu, gam = p.axis(ax)
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise UndefinedPointError("K is undefined at z = 0")
    s = (z - nu) / gam
    out = np.where(z > 0, lam * ndtr(-s), -lam * ndtr(s))
    return out if out.ndim else float(out)


def drift_correction_chi(p: ModelParams, ax: int) -> float:
    """``int (y - e^y + 1) k(y) dy`` in closed form."""
    lam, nu, gam = p.axis(ax)
    return lam * (nu + 1.0 - math.exp(nu + 0.5 * gam * gam))


def jump_moment_Lambda(p: ModelParams, ax: int) -> float:
    """``lambda * E[(e^Y - 1)^2]`` for Y ~ N(nu, gamma^2); always >= 0."""
    lam, nu, gam = p.axis(ax)
    m1 = math.exp(nu + 0.5 * gam * gam)
    m2 = math.exp(2.0 * nu + 2.0 * gam * gam)
    return lam * (m2 - 2.0 * m1 + 1.0)


def diffusion_matrix(p: ModelParams) -> np.ndarray:
    s1, s2 = p.sigma
    c = p.rho * s1 * s2
    return 0.5 * np.array([[s1 * s1, c], [c, s2 * s2]])


def drift_vector(p: ModelParams) -> np.ndarray:
    s1, s2 = p.sigma
    return np.array([p.r - 0.5 * s1 * s1, p.r - 0.5 * s2 * s2])
