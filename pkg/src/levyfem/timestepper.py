"""Time integration of the localized PIDE on the P1 space.

The semi-discrete system is ``M u' = L u + M J[u]`` with ``L = -(A + C)``
(diffusion plus convection) and the jump term collocated at vertices and
paired through the mass matrix. Boundary rows are replaced by Dirichlet
pinning to the smoothed far-field function at the new time level.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FemSpace, assemble_convection, assemble_diffusion, assemble_mass, interpolate
from .jump import JumpOperator, build_quadratures
from .levy_model import ModelParams, diffusion_matrix, drift_vector
from .payoff import PayoffSpec, smoothed_g

__all__ = [
    "Scheme",
    "SchemeConfig",
    "SolveState",
    "OperatorSet",
    "PriceSurface",
    "LinearSolverError",
    "StepFailure",
    "build_operators",
    "initialize",
    "step",
    "run",
    "solve_linear",
]

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    CN_FULL = "crank_nicolson_full"
    IMEX_CN = "imex_cn"
    IMEX_BE = "imex_backward_euler"


class LinearSolverError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual


class StepFailure(RuntimeError):
    def __init__(self, step_index, residual, cause=None):
        super().__init__(f"step {step_index} failed, relative residual {residual:.3e}")
        self.step_index = step_index
        self.residual = residual
        self.__cause__ = cause


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme
    dt: float
    n_steps: int
    solver_tol: float = 1e-10
    solver_max_iter: int = 200

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError("n_steps must be a nonnegative integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def for_horizon(cls, T: float, dt: float, scheme=Scheme.IMEX_CN, **kw) -> "SchemeConfig":
        """Config whose steps exactly cover ``[0, T]``."""
        if T == 0:
            return cls(scheme, dt, 0, **kw)
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > 1e-12 * max(1.0, T):
            raise ValueError(f"T={T} is not a whole number of steps of size {dt}")
        return cls(scheme, T / n, n, **kw)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt


@dataclass
class SolveState:
    tau: float
    u: np.ndarray
    step_index: int = 0


@dataclass(eq=False)
class OperatorSet:
    space: FemSpace
    spec: PayoffSpec
    mass: sp.csr_matrix
    local: sp.csr_matrix  # L = -(A + C)
    jump: JumpOperator
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def boundary(self) -> np.ndarray:
        return self.space.boundary_mask

    def boundary_values(self, tau: float) -> np.ndarray:
        return np.asarray(smoothed_g(self.spec, tau, self.space.vertices[self.boundary]), dtype=float)

    def pinned(self, theta_dt: float) -> sp.csc_matrix:
        """``M - theta_dt * L`` with boundary rows replaced by identity rows."""
        A = (self.mass - theta_dt * self.local).tolil()
        idx = np.flatnonzero(self.boundary)
        A[idx, :] = 0.0
        A[idx, idx] = 1.0
        return A.tocsc()

    def factor(self, theta_dt: float):
        key = round(theta_dt, 15)
        if key not in self._lu:
            A = self.pinned(theta_dt)
            self._lu[key] = (A, spla.splu(A))
        return self._lu[key]


def build_operators(space: FemSpace, spec: PayoffSpec, n_nodes: int = 128, W: float = 8.0) -> OperatorSet:
    p = spec.params
    Mm = assemble_mass(space)
    L = -(assemble_diffusion(space, diffusion_matrix(p)) + assemble_convection(space, drift_vector(p)))
    quads = build_quadratures(p, n_nodes, W, align=space.h0)
    jump = JumpOperator(space, quads, lambda tau, x: smoothed_g(spec, tau, x))
    return OperatorSet(space, spec, Mm.tocsr(), L.tocsr(), jump)


def solve_linear(A, b, tol: float = 1e-10, max_iter: int = 200, precond=None, x0=None):
    """GMRES solve with a relative-residual guarantee.

    Without ``precond`` a sparse or dense matrix ``A`` is preconditioned by
    its own LU factorization.
    """
    b = np.asarray(b, dtype=float)
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros_like(b)
    if precond is None and not isinstance(A, spla.LinearOperator):
        lu = spla.splu(sp.csc_matrix(A))
        precond = spla.LinearOperator(A.shape, matvec=lu.solve)
    Aop = spla.aslinearoperator(A)
    x, info = spla.gmres(Aop, b, x0=x0, rtol=tol, atol=0.0, restart=min(50, b.size), maxiter=max_iter, M=precond)
    res = float(np.linalg.norm(Aop.matvec(x) - b)) / nb
    if info != 0 or not np.isfinite(res) or res > 10 * tol:
        raise LinearSolverError(f"GMRES did not converge (info={info})", res)
    return x


def initialize(space: FemSpace, spec: PayoffSpec) -> SolveState:
    u = np.asarray(smoothed_g(spec, 0.0, space.vertices), dtype=float)
    return SolveState(0.0, u, 0)


def _check(A, x, b, tol, k):
    nb = float(np.linalg.norm(b)) or 1.0
    res = float(np.linalg.norm(A @ x - b)) / nb
    if not np.isfinite(res) or res > tol:
        raise StepFailure(k, res)


def step(state: SolveState, ops: OperatorSet, cfg: SchemeConfig) -> SolveState:
    dt = cfg.dt
    t0, t1 = state.tau, state.tau + dt
    u0 = state.u
    bnd = ops.boundary
    g1 = ops.boundary_values(t1)
    Mm, L, J = ops.mass, ops.local, ops.jump
    k = state.step_index + 1

    if cfg.scheme is Scheme.CN_FULL:
        A, lu = ops.factor(0.5 * dt)
        aff = 0.5 * (J.affine(t0) + J.affine(t1))
        rhs = Mm @ u0 + 0.5 * dt * (L @ u0 + Mm @ J.matvec(u0)) + dt * (Mm @ aff)
        rhs[bnd] = g1
        interior = ~bnd

        def mv(x):
            y = A @ x
            y[interior] -= 0.5 * dt * (Mm @ J.matvec(x))[interior]
            return y

        op = spla.LinearOperator(A.shape, matvec=mv)
        pre = spla.LinearOperator(A.shape, matvec=lu.solve)
        try:
            u1 = solve_linear(op, rhs, cfg.solver_tol, cfg.solver_max_iter, precond=pre, x0=u0)
        except LinearSolverError as e:
            raise StepFailure(k, e.residual, e) from e
        u1[bnd] = g1  # GMRES meets the pinned rows only to tolerance
    else:
        theta = 0.5 if cfg.scheme is Scheme.IMEX_CN else 1.0
        A, lu = ops.factor(theta * dt)
        rhs = Mm @ u0 + dt * (Mm @ J.apply(u0, t0))
        if theta < 1.0:
            rhs += (1.0 - theta) * dt * (L @ u0)
        rhs[bnd] = g1
        u1 = lu.solve(rhs)
        _check(A, u1, rhs, max(cfg.solver_tol, 1e-10), k)
    return SolveState(t1, u1, k)


@dataclass(eq=False)
class PriceSurface:
    space: FemSpace
    spec: PayoffSpec
    cfg: SchemeConfig
    tau: float
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def field(self, x):
        """Solver-convention value ``u(tau, x)`` by P1 interpolation."""
        return interpolate(self.space, self.u, x, lambda pts: smoothed_g(self.spec, self.tau, pts))

    def price(self, S1, S2):
        """Option value in currency at spot ``(S1, S2)``; ``V = e^{-r tau} u``."""
        x = np.stack(np.broadcast_arrays(np.log(S1), np.log(S2)), axis=-1)
        return math.exp(-self.spec.params.r * self.tau) * self.field(x)


def _checkpoint(space, state, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"u_{state.step_index:06d}.csv")
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x1", "x2", "u"])
        for (a, b), v in zip(space.vertices, state.u):
            wr.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
    os.replace(tmp, path)


def run(space: FemSpace, spec: PayoffSpec, cfg: SchemeConfig, ops: OperatorSet | None = None,
        n_nodes: int = 128, W: float = 8.0, checkpoint_every: int = 0, checkpoint_dir=None) -> PriceSurface:
    """March from ``tau = 0`` to ``n_steps * dt``."""
    t_start = time.perf_counter()
    if ops is None:
        ops = build_operators(space, spec, n_nodes, W)
    state = initialize(space, spec)
    for _ in range(cfg.n_steps):
        state = step(state, ops, cfg)
        if checkpoint_every and checkpoint_dir and state.step_index % checkpoint_every == 0:
            _checkpoint(space, state, checkpoint_dir)
    elapsed = time.perf_counter() - t_start
    log.debug("run finished: %d steps in %.2fs", cfg.n_steps, elapsed)
    meta = {
        "scheme": cfg.scheme.value,
        "dt": cfg.dt,
        "n_steps": cfg.n_steps,
        "M": space.M,
        "n_per_side": space.n_per_side,
        "delta": spec.delta,
        "elapsed_s": elapsed,
    }
    return PriceSurface(space, spec, cfg, state.tau, state.u, meta)
