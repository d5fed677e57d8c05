"""Run configuration, pricing entry points, reference tables, convergence
studies and exports.

Reported polynomial prices are divided by 1000; put prices are in currency.
Exports carry no timings so identical inputs give identical bytes.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytic import PolynomialField, bs_polynomial_price, elm_polynomial_price, merton_put_1d
from .fem import build_mesh, error_norms
from .levy_model import ModelParams
from .payoff import PayoffKind, PayoffSpec, boundary_g, smoothed_g
from .timestepper import Scheme, SchemeConfig, build_operators, run

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "price",
    "POLY_ROWS",
    "PUT_ROWS",
    "reproduce_tables",
    "convergence_study",
    "fitted_order",
    "jensen_diagnostic",
    "ordering_holds",
    "export_surface",
    "import_surface",
    "write_rows",
    "atomic_write",
    "dumps_json",
]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# -- reference rows ------------------------------------------------------------
# (tau, rho, sigma1, sigma2, bs, jd, fem), prices in units of 1000
POLY_ROWS = {
    3: [
        (0.1, 0.3, 0.1, 0.1, 6.4363, 6.4899, 6.5695),
        (0.1, 0.3, 0.1, 0.2, 6.4421, 6.4958, 6.4785),
        (0.1, 0.3, 0.1, 0.3, 6.4511, 6.5050, 6.4434),
        (0.1, 0.3, 0.2, 0.2, 6.4488, 6.5026, 6.4977),
        (0.1, 0.3, 0.2, 0.3, 6.4589, 6.5128, 6.4611),
        (0.1, 0.3, 0.3, 0.3, 6.4699, 6.5239, 6.4646),
        (0.9, 0.3, 0.1, 0.1, 6.7339, 7.2753, 7.3561),
        (0.9, 0.3, 0.1, 0.2, 6.7892, 7.3380, 7.2909),
        (0.9, 0.3, 0.1, 0.3, 6.8781, 7.4398, 7.3828),
        (0.9, 0.3, 0.2, 0.2, 6.8536, 7.5208, 7.5093),
        (0.9, 0.3, 0.2, 0.3, 6.9518, 7.6412, 7.6183),
        (0.9, 0.3, 0.3, 0.3, 7.0593, 7.4098, 7.4093),
    ],
    4: [
        (0.1, -0.3, 0.1, 0.1, 6.4343, 6.4880, 6.5622),
        (0.1, -0.3, 0.1, 0.2, 6.4382, 6.4919, 6.5573),
        (0.1, -0.3, 0.1, 0.3, 6.4453, 6.4992, 6.4784),
        (0.1, -0.3, 0.2, 0.2, 6.4411, 6.4949, 6.4699),
        (0.1, -0.3, 0.2, 0.3, 6.4473, 6.5012, 6.4816),
        (0.1, -0.3, 0.3, 0.3, 6.4525, 6.5065, 6.4540),
        (0.9, -0.3, 0.1, 0.1, 6.7158, 7.2572, 7.1881),
        (0.9, -0.3, 0.1, 0.2, 6.7530, 7.3018, 7.2686),
        (0.9, -0.3, 0.1, 0.3, 6.8239, 7.3855, 7.3250),
        (0.9, -0.3, 0.2, 0.2, 6.7813, 7.3375, 7.2680),
        (0.9, -0.3, 0.2, 0.3, 6.8433, 7.4124, 7.4990),
        (0.9, -0.3, 0.3, 0.3, 6.8966, 7.4785, 7.4422),
    ],
}

# (tau, sigma1, sigma2, basket put, max-of-two put, min-of-two put), currency
PUT_ROWS = [
    (0.1, 0.1, 0.1, 1.8015, 1.7997, 1.8038),
    (0.1, 0.1, 0.2, 1.8342, 1.8329, 1.8389),
    (0.1, 0.1, 0.3, 1.9127, 1.9096, 1.9161),
    (0.1, 0.2, 0.2, 1.8857, 1.8806, 1.8901),
    (0.1, 0.2, 0.3, 1.9834, 1.9794, 1.9873),
    (0.1, 0.3, 0.3, 2.0723, 2.0702, 2.0782),
    (0.9, 0.1, 0.1, 0.6059, 0.6012, 0.7002),
    (0.9, 0.1, 0.2, 1.2413, 1.2392, 1.2485),
    (0.9, 0.1, 0.3, 1.9280, 1.9231, 1.9317),
    (0.9, 0.2, 0.2, 1.7769, 1.7700, 1.7810),
    (0.9, 0.2, 0.3, 2.4397, 2.4352, 2.4427),
    (0.9, 0.3, 0.3, 3.0011, 2.9923, 3.0123),
]

POLY_PARAMS = ModelParams(r=0.05, lam=0.1, nu=-0.9, gamma=0.45, K=80.0, w=(0.5, 0.5))
PUT_PARAMS = ModelParams(r=0.05, sigma=0.3, rho=0.3, lam=0.1, nu=-0.9, gamma=0.45, T=1.0, K=40.0, w=(0.5, 0.5))
SPOT = (40.0, 40.0)
POLY_GATE = 0.02
PUT_GATE = 0.05
# put tables smooth over a quarter of the longest edge; 2h biases short maturities
PUT_DELTA_FACTOR = 0.25


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    kind: PayoffKind = PayoffKind.BASKET_PUT
    spot: tuple[float, float] = SPOT
    M: float = 4.5
    n_per_side: int = 129
    dt: float = 0.01
    scheme: Scheme = Scheme.IMEX_CN
    delta: float | None = None  # None means 2h
    n_nodes: int = 128
    W: float = 8.0

    def resolved_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        return 2.0 * 2.0 * self.M * math.sqrt(2.0) / (self.n_per_side - 1)


_MODEL_KEYS = {
    "diffusion_volatility": "sigma",
    "mean_jump_size": "nu",
    "mean_jump_volatility": "gamma",
    "jump_intensity": "lam",
    "correlation": "rho",
    "interest_rate": "r",
    "strike": "K",
    "maturity": "T",
    "weights": "w",
}
_PAIR_FIELDS = {"sigma", "nu", "gamma", "lam", "w"}


def _floats(text: str, key: str):
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {text!r}") from e
    if not vals:
        raise ConfigError(f"{key}: empty value")
    return vals


def parse_config(text: str) -> RunConfig:
    """Parse INI text with ``[model]``, ``[payoff]`` and ``[discretization]`` sections.

    Unknown keys are rejected so typos do not silently fall back to defaults.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    unknown = set(cp.sections()) - {"model", "payoff", "discretization"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")

    model = {}
    spot = SPOT
    if cp.has_section("model"):
        for key, raw in cp.items("model"):
            if key == "underlying_price":
                v = _floats(raw, key)
                spot = (v[0], v[-1])
                continue
            if key not in _MODEL_KEYS:
                raise ConfigError(f"unknown model key {key!r}")
            name = _MODEL_KEYS[key]
            v = _floats(raw, key)
            if name in _PAIR_FIELDS:
                if len(v) > 2:
                    raise ConfigError(f"{key}: expected one or two values")
                model[name] = (v[0], v[-1])
            else:
                if len(v) != 1:
                    raise ConfigError(f"{key}: expected a single value")
                model[name] = v[0]
    try:
        params = ModelParams(**model)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e

    kw = {}
    if cp.has_section("payoff"):
        for key, raw in cp.items("payoff"):
            if key == "kind":
                try:
                    kw["kind"] = PayoffKind(raw.strip().lower())
                except ValueError as e:
                    raise ConfigError(f"unknown payoff kind {raw!r}") from e
            elif key == "delta":
                kw["delta"] = _floats(raw, key)[0]
            else:
                raise ConfigError(f"unknown payoff key {key!r}")
    conv = {"m": ("M", float), "n_per_side": ("n_per_side", int), "dt": ("dt", float),
            "quadrature_nodes": ("n_nodes", int), "window": ("W", float)}
    if cp.has_section("discretization"):
        for key, raw in cp.items("discretization"):
            if key == "scheme":
                try:
                    kw["scheme"] = Scheme(raw.strip().lower())
                except ValueError as e:
                    raise ConfigError(f"unknown scheme {raw!r}") from e
                continue
            if key not in conv:
                raise ConfigError(f"unknown discretization key {key!r}")
            name, typ = conv[key]
            try:
                kw[name] = typ(raw.strip())
            except ValueError as e:
                raise ConfigError(f"{key}: cannot parse {raw!r}") from e
    cfg = RunConfig(params=params, spot=spot, **kw)
    if cfg.M <= 0 or cfg.n_per_side < 3 or cfg.dt <= 0:
        raise ConfigError("need M > 0, n_per_side >= 3 and dt > 0")
    if min(spot) <= 0:
        raise ConfigError("underlying prices must be positive")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e


# -- pricing --------------------------------------------------------------------


def _solve(cfg: RunConfig):
    space = build_mesh(cfg.M, cfg.n_per_side)
    spec = PayoffSpec(cfg.kind, cfg.resolved_delta(), cfg.params)
    sc = SchemeConfig.for_horizon(cfg.params.T, cfg.dt, cfg.scheme)
    return run(space, spec, sc, n_nodes=cfg.n_nodes, W=cfg.W)


def price(cfg: RunConfig) -> dict:
    """Price at ``cfg.spot``; returns the value and the discretization metadata.

    For the polynomial claim the closed-form prices and the relative error
    against the jump-diffusion one are included.
    """
    surf = _solve(cfg)
    meta = {k: v for k, v in surf.meta.items() if k != "elapsed_s"}
    out = {"kind": cfg.kind.value, "S1": cfg.spot[0], "S2": cfg.spot[1],
           "price": float(surf.price(*cfg.spot)), **meta}
    if cfg.kind is PayoffKind.POLYNOMIAL:
        jd = float(elm_polynomial_price(cfg.params, 0.0, *cfg.spot))
        out.update(bs=float(bs_polynomial_price(cfg.params, 0.0, *cfg.spot)), jd=jd,
                   rel_err=abs(out["price"] - jd) / jd)
    return out


def _poly_row(row, n_per_side, dt, M, scheme, delta):
    tau, rho, s1, s2, ref_bs, ref_jd, ref_fem = row
    p = POLY_PARAMS.replace(sigma=(s1, s2), rho=rho, T=tau)
    cfg = RunConfig(params=p, kind=PayoffKind.POLYNOMIAL, M=M, n_per_side=n_per_side, dt=dt, scheme=scheme)
    fem = float(_solve(cfg).price(*SPOT)) / 1000.0
    jd = float(elm_polynomial_price(p, 0.0, *SPOT)) / 1000.0
    bs = float(bs_polynomial_price(p, 0.0, *SPOT)) / 1000.0
    rel = abs(fem - jd) / jd
    return {"tau": tau, "rho": rho, "sigma1": s1, "sigma2": s2, "bs": bs, "jd": jd, "fem": fem,
            "rel_err": rel, "pass": rel <= POLY_GATE, "ref_bs": ref_bs, "ref_jd": ref_jd, "ref_fem": ref_fem}


def ordering_holds(max_put: float, basket_put: float, min_put: float, slack: float = 0.0) -> bool:
    return max_put <= basket_put + slack and basket_put <= min_put + slack


def _put_row(row, n_per_side, dt, M, scheme, delta):
    tau, s1, s2, ref_b, ref_mx, ref_mn = row
    p = PUT_PARAMS.replace(sigma=(s1, s2), T=tau)
    out = {"tau": tau, "sigma1": s1, "sigma2": s2}
    for name, kind in (("basket_put", PayoffKind.BASKET_PUT), ("max_put", PayoffKind.MAX_OF_TWO_PUT),
                       ("min_put", PayoffKind.MIN_OF_TWO_PUT)):
        cfg = RunConfig(params=p, kind=kind, M=M, n_per_side=n_per_side, dt=dt, scheme=scheme, delta=delta)
        out[name] = float(_solve(cfg).price(*SPOT))
    out.update(ref_basket_put=ref_b, ref_max_put=ref_mx, ref_min_put=ref_mn)
    out["ordering"] = ordering_holds(out["max_put"], out["basket_put"], out["min_put"])
    out["max_rel_dev"] = max(abs(out[k] - out["ref_" + k]) / out["ref_" + k]
                             for k in ("basket_put", "max_put", "min_put"))
    out["pass"] = out["ordering"] and out["max_rel_dev"] <= PUT_GATE
    return out


def reproduce_tables(which: int, out_dir=None, n_per_side: int = 129, dt: float = 0.01, M: float = 4.5,
                     scheme=Scheme.IMEX_CN, delta: float | None = None, workers: int = 1) -> dict:
    """Price every row of a reference table and compare with the stored values.

    ``which`` is 3 or 4 (polynomial option, positive or negative correlation)
    or 6 (basket, max-of-two and min-of-two puts). ``delta`` defaults to
    ``2h`` for the polynomial tables (where it is unused) and to
    ``PUT_DELTA_FACTOR * h`` for the put table.
    """
    scheme = Scheme(scheme)
    if which in POLY_ROWS:
        rows, fn = POLY_ROWS[which], _poly_row
    elif which == 6:
        rows, fn = PUT_ROWS, _put_row
    else:
        raise ValueError("which must be 3, 4 or 6")
    h = 2.0 * M * math.sqrt(2.0) / (n_per_side - 1)
    if delta is None:
        delta = 2.0 * h if which in POLY_ROWS else PUT_DELTA_FACTOR * h
    args = (n_per_side, dt, M, scheme, delta)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda r: fn(r, *args), rows))
    else:
        results = [fn(r, *args) for r in rows]
    report = {
        "table": which,
        "settings": {"n_per_side": n_per_side, "dt": dt, "M": M, "scheme": scheme.value,
                     "delta": delta, "quadrature_nodes": 128, "window": 8.0},
        "rows": results,
        "passed": all(r["pass"] for r in results),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_rows(os.path.join(out_dir, f"table{which}.csv"), results)
        atomic_write(os.path.join(out_dir, f"table{which}.json"), dumps_json(report))
    return report


# -- convergence studies --------------------------------------------------------


def fitted_order(params, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(param)``."""
    x = np.log(np.asarray(params, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


CONVERGENCE_WINDOWS = {
    ("dt", Scheme.CN_FULL.value): (1.7, 2.3),
    ("dt", Scheme.IMEX_BE.value): (0.8, 1.3),
    ("h", "L2"): (1.7, 2.3),
    ("h", "H1"): (0.8, 1.3),
    ("delta", "sup"): (1.8, 2.2),
    ("delta", "price"): (1.8, 2.2),
}


def _conv_dt(levels, scheme, n_per_side=65, T=1.0):
    p = POLY_PARAMS.replace(sigma=0.2, rho=0.3, T=T)
    space = build_mesh(4.5, n_per_side)
    spec = PayoffSpec(PayoffKind.POLYNOMIAL, 1.0, p)
    ops = build_operators(space, spec)
    dts = [0.04 / 2**k for k in range(levels)]
    ref = run(space, spec, SchemeConfig.for_horizon(T, dts[-1] / 8, scheme), ops=ops).u
    scale = float(np.abs(ref).max())
    errs = []
    for dt in dts:
        u = run(space, spec, SchemeConfig.for_horizon(T, dt, scheme), ops=ops).u
        errs.append(float(np.abs(u - ref).max()) / scale)
    return {"param": dts, "errors": {scheme.value: errs}, "order": {scheme.value: fitted_order(dts, errs)}}


def _conv_h(levels, T=0.1, dt=0.005):
    p = POLY_PARAMS.replace(sigma=0.2, rho=0.3, T=T)
    exact = PolynomialField(p)
    sizes = [33, 65, 129, 257, 513][:levels]
    spec = PayoffSpec(PayoffKind.POLYNOMIAL, 1.0, p)
    hs, l2, h1 = [], [], []
    for n in sizes:
        space = build_mesh(4.5, n)
        surf = run(space, spec, SchemeConfig.for_horizon(T, dt, Scheme.CN_FULL))
        a, b = error_norms(space, surf.u, lambda x: exact.value(T, x), lambda x: exact.grad(T, x))
        hs.append(space.h)
        l2.append(a)
        h1.append(b)
    return {"param": hs, "n_per_side": sizes, "errors": {"L2": l2, "H1": h1},
            "order": {"L2": fitted_order(hs, l2), "H1": fitted_order(hs, h1)}}


def smoothing_sup_error(spec: PayoffSpec, tau: float = 0.0, n: int = 801, half_width: float = 1.0) -> float:
    """``max |g_tilde - g|`` over a dense grid centred on the at-the-money point."""
    c = math.log(spec.params.K) - spec.params.r * tau
    t = np.linspace(c - half_width, c + half_width, n)
    X = np.stack(np.meshgrid(t, t), axis=-1)
    return float(np.abs(smoothed_g(spec, tau, X) - boundary_g(spec, tau, X)).max())


def _conv_delta(levels, n_per_side=129):
    deltas = [0.2 / 2**k for k in range(levels)]
    errs = [smoothing_sup_error(PayoffSpec(PayoffKind.BASKET_PUT, d, PUT_PARAMS)) for d in deltas]
    # price ladder on one mesh against a run with half the smallest width
    space = build_mesh(4.5, n_per_side)
    sc = SchemeConfig.for_horizon(PUT_PARAMS.T, 0.01, Scheme.IMEX_CN)

    def put(d):
        return float(run(space, PayoffSpec(PayoffKind.BASKET_PUT, d, PUT_PARAMS), sc).price(*SPOT))

    ref = put(deltas[-1] / 2)
    perr = [abs(put(d) - ref) for d in deltas]
    return {"param": deltas, "errors": {"sup": errs, "price": perr},
            "order": {"sup": fitted_order(deltas, errs), "price": fitted_order(deltas, perr)}}


def _conv_M(levels, h0=0.1, window=1.5, T=1.0, dt=0.01):
    # strike 1 puts the kink through the origin, so the window sees the interesting region
    p = PUT_PARAMS.replace(K=1.0, T=T)
    Ms = [3.0, 3.5, 4.0, 4.5, 5.0][:levels]
    delta = 0.2
    spec = PayoffSpec(PayoffKind.BASKET_PUT, delta, p)
    sc = SchemeConfig.for_horizon(T, dt, Scheme.IMEX_CN)

    def solve(M):
        n = int(round(2 * M / h0)) + 1
        space = build_mesh(M, n)
        surf = run(space, spec, sc)
        sel = np.all(np.abs(space.vertices) <= window + 1e-9, axis=1)
        return space.vertices[sel], surf.u[sel]

    xr, ur = solve(6.0)
    errs = []
    for M in Ms:
        x, u = solve(M)
        if not np.allclose(x, xr, atol=1e-9):
            raise RuntimeError("window nodes do not line up across domain sizes")
        errs.append(float(np.abs(u - ur).max()))
    return {"param": Ms, "errors": {"window_max": errs},
            "monotone": bool(all(b < a for a, b in zip(errs, errs[1:])))}


def _conv_quad(levels, n_per_side=65):
    p = PUT_PARAMS
    space = build_mesh(4.5, n_per_side)
    spec = PayoffSpec(PayoffKind.BASKET_PUT, 2 * space.h, p)
    nodes = [16 * 2**k for k in range(levels)]
    prices = []
    for m in nodes:
        surf = run(space, spec, SchemeConfig.for_horizon(p.T, 0.01, Scheme.IMEX_CN), n_nodes=m)
        prices.append(float(surf.price(*SPOT)))
    diffs = [abs(b - a) / abs(b) for a, b in zip(prices, prices[1:])]
    return {"param": nodes, "prices": prices, "errors": {"successive_rel_change": diffs}}


def convergence_study(axis: str, levels: int = 4, scheme=None) -> dict:
    """Refinement study along one discretization axis.

    ``axis`` is one of ``h``, ``dt``, ``delta``, ``M``, ``quad``. The ``dt``
    axis measures against a run with a step eight times finer on the same
    mesh, so spatial error cancels. The ``delta`` axis reports both the sup
    distance between smoothed and kinked payoff and the at-the-money put
    price against a run with half the smallest width.
    """
    if levels < 3:
        raise ValueError("need at least three levels")
    if axis == "dt":
        out = {}
        schemes = [Scheme(scheme)] if scheme else [Scheme.CN_FULL, Scheme.IMEX_BE]
        for s in schemes:
            r = _conv_dt(levels, s)
            out.setdefault("param", r["param"])
            out.setdefault("errors", {}).update(r["errors"])
            out.setdefault("order", {}).update(r["order"])
    elif axis == "h":
        out = _conv_h(levels)
    elif axis == "delta":
        out = _conv_delta(levels)
    elif axis == "M":
        out = _conv_M(levels)
    elif axis == "quad":
        out = _conv_quad(levels)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    out["axis"] = axis
    checks = {}
    for key, order in out.get("order", {}).items():
        lo, hi = CONVERGENCE_WINDOWS.get((axis, key), (-np.inf, np.inf))
        checks[key] = bool(lo <= order <= hi)
    if "monotone" in out:
        checks["monotone"] = out["monotone"]
    out["checks"] = checks
    out["passed"] = all(checks.values())
    return out


# -- diagnostics ----------------------------------------------------------------


def jensen_diagnostic(p: ModelParams = PUT_PARAMS, spot=SPOT, n_per_side: int = 129, dt: float = 0.01,
                      tol: float = 0.01) -> dict:
    """Compare the basket put with the weighted portfolio of one-asset puts.

    The one-asset legs come from the Merton series with each leg struck at
    its own spot, which is how the strike decomposes when all legs are at
    the money.
    """
    cfg = RunConfig(params=p, kind=PayoffKind.BASKET_PUT, spot=spot, n_per_side=n_per_side, dt=dt)
    basket = float(_solve(cfg).price(*spot))
    legs = []
    for i in (1, 2):
        lam, nu, gam = p.axis(i)
        S = spot[i - 1]
        legs.append(merton_put_1d(S, S, p.T, p.r, p.sigma[i - 1], lam, nu, gam))
    portfolio = p.w[0] * legs[0] + p.w[1] * legs[1]
    return {"basket_put": basket, "portfolio": portfolio, "legs": legs,
            "holds": basket <= portfolio * (1.0 + tol)}


# -- exports ---------------------------------------------------------------------


def atomic_write(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_rows(path, rows) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0].keys()) if rows else []
    wr.writerow(keys)
    for r in rows:
        wr.writerow([_fmt(r[k]) for k in keys])
    atomic_write(path, buf.getvalue())


def export_surface(surface, path, S1=None, S2=None) -> None:
    """Write prices ``(S1, S2, V)`` as CSV, or JSON when ``path`` ends in ``.json``.

    ``S1`` and ``S2`` span the report grid (tensor product). Without them
    every mesh vertex is written. An empty grid gives a header-only CSV.
    """
    if S1 is None and S2 is None:
        pts = np.exp(surface.space.vertices)
    else:
        a, b = np.meshgrid(np.atleast_1d(np.asarray(S1, dtype=float)), np.atleast_1d(np.asarray(S2, dtype=float)))
        pts = np.column_stack([a.ravel(), b.ravel()])
    V = surface.price(pts[:, 0], pts[:, 1]) if len(pts) else np.empty(0)
    if str(path).endswith(".json"):
        meta = {k: v for k, v in surface.meta.items() if k != "elapsed_s"}
        doc = {"meta": meta, "kind": surface.spec.kind.value, "params": asdict(surface.spec.params),
               "tau": surface.tau, "S1": pts[:, 0].tolist(), "S2": pts[:, 1].tolist(),
               "V": np.asarray(V, dtype=float).tolist()}
        atomic_write(path, dumps_json(doc))
        return
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["S1", "S2", "V"])
    for (a, b), v in zip(pts, V):
        wr.writerow([_fmt(a), _fmt(b), _fmt(v)])
    atomic_write(path, buf.getvalue())


def import_surface(path) -> dict:
    """Read back an export as arrays ``S1``, ``S2``, ``V`` (plus metadata for JSON)."""
    if str(path).endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        for k in ("S1", "S2", "V"):
            doc[k] = np.asarray(doc[k], dtype=float)
        return doc
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    data = np.loadtxt(lines, delimiter=",", ndmin=2).reshape(-1, 3) if lines else np.empty((0, 3))
    return {"S1": data[:, 0], "S2": data[:, 1], "V": data[:, 2]}
