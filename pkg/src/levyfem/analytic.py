"""Closed-form prices used as oracles, and a pointwise PIDE residual checker.

Two conventions appear here. Prices ``V(t, S)`` are in currency at calendar
time ``t``. Solver fields ``u(tau, x)`` use ``tau = T - t``, ``x = ln S`` and
``u = e^{r tau} V``, which is the form that satisfies ``u_tau = D[u] + J[u]``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .levy_model import (
    ModelParams,
    diffusion_matrix,
    drift_vector,
    jump_moment_Lambda,
    kernel_density,
)

__all__ = [
    "bs_polynomial_price",
    "elm_polynomial_price",
    "PolynomialField",
    "FiniteDifferenceField",
    "pide_residual_at",
    "merton_put_1d",
]


def _poly_price(p, t, S1, S2, L1, L2):
    s1, s2 = p.sigma
    tau = p.T - t
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    return (
        S1 * S1 * np.exp((p.r + s1 * s1 + L1) * tau)
        + S2 * S2 * np.exp((p.r + s2 * s2 + L2) * tau)
        + 2.0 * S1 * S2 * np.exp((p.r + p.rho * s1 * s2) * tau)
    )


def bs_polynomial_price(p: ModelParams, t, S1, S2):
    """Black-Scholes price of the payoff (S1 + S2)^2."""
    return _poly_price(p, t, S1, S2, 0.0, 0.0)


def elm_polynomial_price(p: ModelParams, t, S1, S2):
    """Merton jump-diffusion price of the payoff (S1 + S2)^2."""
    return _poly_price(p, t, S1, S2, jump_moment_Lambda(p, 1), jump_moment_Lambda(p, 2))


class PolynomialField:
    """Exact solver-convention solution for the (S1 + S2)^2 payoff.

    ``u(tau, x) = e^{2x1 + c1 tau} + e^{2x2 + c2 tau} + 2 e^{x1 + x2 + c12 tau}``.
    """

    def __init__(self, p: ModelParams, jumps: bool = True):
        s1, s2 = p.sigma
        L1 = jump_moment_Lambda(p, 1) if jumps else 0.0
        L2 = jump_moment_Lambda(p, 2) if jumps else 0.0
        self.c1 = 2 * p.r + s1 * s1 + L1
        self.c2 = 2 * p.r + s2 * s2 + L2
        self.c12 = 2 * p.r + p.rho * s1 * s2

    def _terms(self, tau, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return (
            np.exp(2 * x1 + self.c1 * tau),
            np.exp(2 * x2 + self.c2 * tau),
            2.0 * np.exp(x1 + x2 + self.c12 * tau),
        )

    def value(self, tau, x):
        a, b, c = self._terms(tau, x)
        return a + b + c

    __call__ = value

    def dtau(self, tau, x):
        a, b, c = self._terms(tau, x)
        return self.c1 * a + self.c2 * b + self.c12 * c

    def grad(self, tau, x):
        a, b, c = self._terms(tau, x)
        return np.stack([2 * a + c, 2 * b + c], axis=-1)

    def hess(self, tau, x):
        a, b, c = self._terms(tau, x)
        return np.stack(
            [np.stack([4 * a + c, c], axis=-1), np.stack([c, 4 * b + c], axis=-1)], axis=-2
        )


class FiniteDifferenceField:
    """Wraps a scalar ``f(tau, x)`` and supplies derivatives by central differences."""

    def __init__(self, f, h: float = 1e-4, ht: float = 1e-5):
        self.f = f
        self.h = h
        self.ht = ht

    def value(self, tau, x):
        return self.f(tau, np.asarray(x, dtype=float))

    __call__ = value

    def dtau(self, tau, x):
        ht = self.ht
        if tau - ht < 0:
            return (self.f(tau + ht, x) - self.f(tau, x)) / ht
        return (self.f(tau + ht, x) - self.f(tau - ht, x)) / (2 * ht)

    def grad(self, tau, x):
        x = np.asarray(x, dtype=float)
        h = self.h
        e = np.eye(2)
        return np.array([(self.f(tau, x + h * e[i]) - self.f(tau, x - h * e[i])) / (2 * h) for i in range(2)])

    def hess(self, tau, x):
        x = np.asarray(x, dtype=float)
        h = self.h
        e = np.eye(2)
        f0 = self.f(tau, x)
        H = np.empty((2, 2))
        for i in range(2):
            H[i, i] = (self.f(tau, x + h * e[i]) - 2 * f0 + self.f(tau, x - h * e[i])) / h**2
        H[0, 1] = H[1, 0] = (
            self.f(tau, x + h * (e[0] + e[1]))
            - self.f(tau, x + h * (e[0] - e[1]))
            - self.f(tau, x - h * (e[0] - e[1]))
            + self.f(tau, x - h * (e[0] + e[1]))
        ) / (4 * h * h)
        return H


def pide_residual_at(p: ModelParams, spec, tau: float, x, field=None) -> float:
    """Pointwise residual ``u_tau - D[u] - J[u]`` of a field at one point.

    ``field`` needs ``value``, ``grad``, ``hess`` and ``dtau`` methods. When it
    is omitted, the boundary function of ``spec`` is checked, with derivatives
    from central differences. The jump integral uses adaptive quadrature over
    ``nu +- 10 gamma``.
    """
    if field is None:
        from .payoff import boundary_g

        field = FiniteDifferenceField(lambda t, z: float(boundary_g(spec, t, z)))
    x = np.asarray(x, dtype=float)
    kappa = diffusion_matrix(p)
    alpha = drift_vector(p)
    g = np.asarray(field.grad(tau, x), dtype=float)
    H = np.asarray(field.hess(tau, x), dtype=float)
    u0 = float(field.value(tau, x))
    diff = float(np.sum(kappa * H) + alpha @ g)

    jump = 0.0
    for ax in (1, 2):
        lam, nu, gam = p.axis(ax)
        if lam == 0:
            continue
        e = np.zeros(2)
        e[ax - 1] = 1.0
        gi = g[ax - 1]

        def integrand(y):
            return (float(field.value(tau, x + y * e)) - u0 - math.expm1(y) * gi) * kernel_density(p, ax, y)

        tiny = 1e-15 * lam * (abs(u0) + abs(gi) + 1e-300)
        val, _ = integrate.quad(integrand, nu - 10 * gam, nu + 10 * gam, epsabs=tiny, epsrel=1e-12, limit=200)
        jump += val
    return float(field.dtau(tau, x)) - diff - jump


def merton_put_1d(S, K, T, r, sigma, lam, nu, gamma, n_terms: int = 60) -> float:
    """European put under one-asset Merton jump diffusion (Poisson-weighted BS series)."""
    m = math.exp(nu + 0.5 * gamma * gamma)
    lam_p = lam * m
    total = 0.0
    for n in range(n_terms):
        sig_n = math.sqrt(sigma * sigma + n * gamma * gamma / T)
        r_n = r - lam * (m - 1.0) + n * math.log(m) / T
        d1 = (math.log(S / K) + (r_n + 0.5 * sig_n * sig_n) * T) / (sig_n * math.sqrt(T))
        d2 = d1 - sig_n * math.sqrt(T)
        put = K * math.exp(-r_n * T) * norm.cdf(-d2) - S * norm.cdf(-d1)
        weight = math.exp(-lam_p * T + n * math.log(lam_p * T) - math.lgamma(n + 1)) if lam_p > 0 else float(n == 0)
        total += weight * put
    return total
