"""Two-asset payoffs, far-field boundary functions and their C^2 smoothing.

All functions of ``x`` work in log coordinates and accept arrays whose last
axis has length 2. The smoothed boundary function replaces the kinked
far-field function inside a band of half-width ``delta`` around the strike
curve by a quintic blend along the curve normal.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .analytic import PolynomialField
from .levy_model import ModelParams

__all__ = [
    "PayoffKind",
    "PayoffSpec",
    "CurvePoint",
    "ProjectionError",
    "payoff_value",
    "boundary_g",
    "project_to_curve",
    "blend_coefficients",
    "blend_eval",
    "smoothed_g",
    "smoothed_initial",
    "dump_initial_csv",
]


class PayoffKind(str, enum.Enum):
    BASKET_CALL = "basket_call"
    BASKET_PUT = "basket_put"
    WORST_OF_TWO = "worst_of_two"
    MAX_OF_TWO_PUT = "max_of_two_put"
    MIN_OF_TWO_PUT = "min_of_two_put"
    POLYNOMIAL = "polynomial"


_BASKET = (PayoffKind.BASKET_CALL, PayoffKind.BASKET_PUT)
_EXTREMUM = (PayoffKind.MAX_OF_TWO_PUT, PayoffKind.MIN_OF_TWO_PUT)


class ProjectionError(RuntimeError):
    """Raised when the foot point on the strike curve cannot be found."""


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind
    delta: float
    params: ModelParams
    _poly: PolynomialField | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.kind is not PayoffKind.POLYNOMIAL and not self.delta > 0:
            raise ValueError("smoothing width delta must be positive")
        if self.kind in _BASKET and min(self.params.w) <= 0:
            raise ValueError("basket payoffs need strictly positive weights")
        if self.kind is PayoffKind.POLYNOMIAL:
            object.__setattr__(self, "_poly", PolynomialField(self.params))


@dataclass(frozen=True)
class CurvePoint:
    x_o: np.ndarray
    n: float
    normal: np.ndarray


def _split(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def payoff_value(spec: PayoffSpec, S1, S2):
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if np.any(S1 < 0) or np.any(S2 < 0):
        raise ValueError("prices must be nonnegative")
    K = spec.params.K
    w1, w2 = spec.params.w
    kind = spec.kind
    if kind is PayoffKind.BASKET_CALL:
        return np.maximum(w1 * S1 + w2 * S2 - K, 0.0)
    if kind is PayoffKind.BASKET_PUT:
        return np.maximum(K - w1 * S1 - w2 * S2, 0.0)
    if kind is PayoffKind.WORST_OF_TWO:
        return np.maximum(np.minimum(S1, S2), 0.0)
    if kind is PayoffKind.MAX_OF_TWO_PUT:
        return np.maximum(K - np.maximum(S1, S2), 0.0)
    if kind is PayoffKind.MIN_OF_TWO_PUT:
        return np.maximum(K - np.minimum(S1, S2), 0.0)
    return (S1 + S2) ** 2


def boundary_g(spec: PayoffSpec, tau, x):
    """Far-field function; equals the transformed payoff at tau = 0.

    Linear combinations of ``e^{x_i}`` grow like ``e^{r tau}`` under the
    PIDE, so each asset enters as ``e^{x_i + r tau}``. The polynomial option
    uses its exact solution.
    """
    x1, x2 = _split(x)
    p = spec.params
    kind = spec.kind
    if kind is PayoffKind.POLYNOMIAL:
        return spec._poly.value(tau, np.stack([x1, x2], axis=-1))
    g = math.exp(p.r * tau)
    K = p.K
    w1, w2 = p.w
    if kind is PayoffKind.BASKET_PUT:
        return np.maximum(K - g * (w1 * np.exp(x1) + w2 * np.exp(x2)), 0.0)
    if kind is PayoffKind.BASKET_CALL:
        return np.maximum(g * (w1 * np.exp(x1) + w2 * np.exp(x2)) - K, 0.0)
    if kind is PayoffKind.WORST_OF_TWO:
        return g * np.exp(np.minimum(x1, x2))
    if kind is PayoffKind.MAX_OF_TWO_PUT:
        return np.maximum(K - g * np.exp(np.maximum(x1, x2)), 0.0)
    return np.maximum(K - g * np.exp(np.minimum(x1, x2)), 0.0)


# -- strike curve w1 e^{x1} + w2 e^{x2} = K e^{-r tau} ------------------------
#
# Points on the curve are parametrized by t in R through q = expit(t):
#   w1 e^{x1} = Kt q,  w2 e^{x2} = Kt (1 - q).
# The curve normal is proportional to (q, 1 - q) and the tangent to (1 - q, -q).


def _curve_point(t, c1, c2):
    # c_i = ln(Kt / w_i); ln q = -softplus(-t), ln(1-q) = -softplus(t)
    return c1 - np.logaddexp(0.0, -t), c2 - np.logaddexp(0.0, t)


def _project_basket(x1, x2, c1, c2, max_iter=50, tol=1e-12):
    """Vectorized Newton solve for the foot parameter t; returns (t, converged)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    # start from the point reached by moving along the diagonal
    t = (x1 - c1) - (x2 - c2)
    converged = np.zeros(t.shape, dtype=bool)
    for _ in range(max_iter):
        q = expit(t)
        a, b = _curve_point(t, c1, c2)
        phi = (x1 - a) * (1 - q) - (x2 - b) * q
        dphi = -((1 - q) ** 2) - q * q - q * (1 - q) * ((x1 - a) + (x2 - b))
        step = phi / dphi
        step = np.clip(step, -2.0, 2.0)
        t = t - step
        converged = np.abs(step) < tol * (1.0 + np.abs(t))
        if converged.all():
            break
    return t, converged


def _golden_nearest(x1, x2, c1, c2, lo, hi, iters=200):
    def d2(t):
        a, b = _curve_point(t, c1, c2)
        return (x1 - a) ** 2 + (x2 - b) ** 2

    gr = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = d2(c), d2(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = d2(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = d2(d)
        if b - a < 1e-14:
            break
    return 0.5 * (a + b)


def _curve_consts(spec, tau):
    p = spec.params
    Kt = p.K * math.exp(-p.r * tau)
    return math.log(Kt / p.w[0]), math.log(Kt / p.w[1])


def _basket_frame(t, x1, x2, c1, c2):
    q = expit(t)
    a, b = _curve_point(t, c1, c2)
    nrm = np.hypot(q, 1 - q)
    N1, N2 = q / nrm, (1 - q) / nrm
    n = (x1 - a) * N1 + (x2 - b) * N2
    return a, b, q, N1, N2, n


def project_to_curve(spec: PayoffSpec, tau: float, x) -> CurvePoint:
    """Foot point, unit normal and signed normal distance for one point ``x``.

    The distance is positive on the side where the basket exceeds the
    discounted strike.
    """
    x1, x2 = (float(v) for v in np.asarray(x, dtype=float))
    kind = spec.kind
    if kind in _EXTREMUM:
        k = math.log(spec.params.K) - spec.params.r * tau
        use_first = (x1 >= x2) if kind is PayoffKind.MAX_OF_TWO_PUT else (x1 <= x2)
        if use_first:
            return CurvePoint(np.array([k, x2]), x1 - k, np.array([1.0, 0.0]))
        return CurvePoint(np.array([x1, k]), x2 - k, np.array([0.0, 1.0]))
    if kind not in _BASKET:
        raise ValueError(f"{kind.value} has no strike curve")
    c1, c2 = _curve_consts(spec, tau)
    t, ok = _project_basket(np.array(x1), np.array(x2), c1, c2)
    t = float(t)
    if not bool(ok):
        t0 = (x1 - c1) - (x2 - c2)
        t = _golden_nearest(x1, x2, c1, c2, t0 - 40.0, t0 + 40.0)
        a, b, q, N1, N2, _ = _basket_frame(t, x1, x2, c1, c2)
        resid = (x1 - a) * (1 - q) - (x2 - b) * q
        if not np.isfinite(t) or abs(resid) > 1e-8:
            raise ProjectionError(f"no foot point found for x={x!r} (residual {resid:.3e})")
    a, b, q, N1, N2, n = _basket_frame(t, x1, x2, c1, c2)
    if abs(n) < 1e-15:
        n = 0.0
    return CurvePoint(np.array([float(a), float(b)]), float(n), np.array([float(N1), float(N2)]))


# -- blend polynomial p(n) = (n - delta)^3 (a + b (n + delta) + c (n + delta)^2) ---


def blend_coefficients(g_val, dg, d2g, delta):
    """Coefficients of the quintic that vanishes to second order at ``+delta``
    and matches value, first and second normal derivative at ``-delta``."""
    if not delta > 0:
        raise ZeroDivisionError("delta must be positive")
    d3 = delta**3
    a = -g_val / (8.0 * d3)
    b = -(1.5 * g_val / delta + dg) / (8.0 * d3)
    c = -(d2g + 3.0 * dg / delta + 3.0 * g_val / delta**2) / (16.0 * d3)
    return a, b, c


def blend_eval(coef, delta, n, deriv: int = 0):
    a, b, c = coef
    n = np.asarray(n, dtype=float)
    m = n + delta
    s = n - delta
    q = a + b * m + c * m * m
    if deriv == 0:
        return s**3 * q
    dq = b + 2 * c * m
    if deriv == 1:
        return 3 * s**2 * q + s**3 * dq
    if deriv == 2:
        return 6 * s * q + 6 * s**2 * dq + s**3 * 2 * c
    raise ValueError("deriv must be 0, 1 or 2")


def _basket_blend(spec, tau, x1, x2, idx):
    """Smoothed values for the basket points selected by ``idx`` (a candidate mask)."""
    delta = spec.delta
    K = spec.params.K
    c1, c2 = _curve_consts(spec, tau)
    px1, px2 = x1[idx], x2[idx]
    t, ok = _project_basket(px1, px2, c1, c2)
    if not ok.all():
        for k in np.flatnonzero(~ok):
            t0 = (px1[k] - c1) - (px2[k] - c2)
            t[k] = _golden_nearest(px1[k], px2[k], c1, c2, t0 - 40.0, t0 + 40.0)
    _, _, q, N1, N2, n = _basket_frame(t, px1, px2, c1, c2)
    inside = np.abs(n) < delta
    out = np.full(px1.shape, np.nan)
    if inside.any():
        q, N1, N2, n = q[inside], N1[inside], N2[inside], n[inside]
        s = -delta if spec.kind is PayoffKind.BASKET_PUT else delta
        # along x_o + s N: w_i e^{x_i + r tau} = K q_i e^{s N_i}
        e1 = q * np.exp(s * N1)
        e2 = (1 - q) * np.exp(s * N2)
        v0 = e1 + e2
        v1 = N1 * e1 + N2 * e2
        v2 = N1 * N1 * e1 + N2 * N2 * e2
        if spec.kind is PayoffKind.BASKET_PUT:
            coef = blend_coefficients(K * (1 - v0), -K * v1, -K * v2, delta)
            out[inside] = blend_eval(coef, delta, n)
        else:
            # mirror n -> -n so the active side sits at -delta
            coef = blend_coefficients(K * (v0 - 1), -K * v1, K * v2, delta)
            out[inside] = blend_eval(coef, delta, -n)
    return out


def _extremum_blend(spec, tau, x1, x2):
    delta = spec.delta
    K = spec.params.K
    k = math.log(K) - spec.params.r * tau
    m = np.maximum(x1, x2) if spec.kind is PayoffKind.MAX_OF_TWO_PUT else np.minimum(x1, x2)
    n = m - k
    e = math.exp(-delta)
    coef = blend_coefficients(K * (1 - e), -K * e, -K * e, delta)
    return n, blend_eval(coef, delta, n)


def smoothed_g(spec: PayoffSpec, tau, x):
    """Boundary function with the strike kink replaced by the C^2 blend."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(boundary_g(spec, tau, x), dtype=float)
    kind = spec.kind
    if kind is PayoffKind.POLYNOMIAL or kind is PayoffKind.WORST_OF_TWO:
        return g
    x1, x2 = np.broadcast_arrays(x[..., 0], x[..., 1])
    out = np.array(g, dtype=float, copy=True)
    if kind in _EXTREMUM:
        n, pv = _extremum_blend(spec, tau, x1, x2)
        band = np.abs(n) < spec.delta
        out[band] = pv[band]
        return out if out.ndim else float(out)
    c1, c2 = _curve_consts(spec, tau)
    # the diagonal offset t satisfies |t| <= dist(x, C) <= sqrt(2) |t|
    lse = np.logaddexp(x1 - c1, x2 - c2)
    cand = np.abs(lse) < spec.delta
    if cand.any():
        pv = _basket_blend(spec, tau, x1, x2, cand)
        sel = ~np.isnan(pv)
        tgt = np.flatnonzero(cand.ravel())[sel]
        out.reshape(-1)[tgt] = pv[sel]
    return out if out.ndim else float(out)


def smoothed_initial(spec: PayoffSpec, x):
    return smoothed_g(spec, 0.0, x)


def dump_initial_csv(spec: PayoffSpec, x1, x2, path) -> None:
    """Write (x1, x2, h_tilde) rows on the tensor grid ``x1 x x2``."""
    X1, X2 = np.meshgrid(np.asarray(x1, float), np.asarray(x2, float))
    h = smoothed_initial(spec, np.stack([X1, X2], axis=-1))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x1", "x2", "h_tilde"])
        for a, b, v in zip(X1.ravel(), X2.ravel(), np.ravel(h)):
            wr.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
