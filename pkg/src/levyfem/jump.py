"""Compensated jump integral on the P1 grid.

Each axis contributes

    J_i[u](x) = sum_j w_j [u(x + y_j e_i) - u(x) - (e^{y_j} - 1) d_i u(x)]

with Gauss-Legendre nodes ``y_j`` on a truncated window and weights that
already include the Levy density. Shifted points that stay in the box are
interpolated from the nodal field; points that leave it take the far-field
extension. Jumps act along grid lines only, so the operator is a pair of
``n x n`` line matrices applied from the left and the right.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from .fem import FemSpace, interpolate
from .levy_model import ModelParams, antiderivative_K, drift_correction_chi, kernel_density

__all__ = [
    "JumpQuadrature",
    "JumpOperator",
    "build_quadrature",
    "build_quadratures",
    "apply_jump",
    "assemble_jump_matrix",
    "nodal_gradient",
    "jump_direct_form",
    "jump_kchi_form",
    "dump_quadrature_csv",
]


@dataclass(frozen=True, eq=False)
class JumpQuadrature:
    ax: int
    nodes: np.ndarray
    weights: np.ndarray
    window: tuple[float, float]
    W: float

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def drift_mass(self) -> float:
        """``sum w (e^y - 1)``."""
        return float(self.weights @ np.expm1(self.nodes))

    def __len__(self):
        return self.nodes.size


def build_quadrature(p: ModelParams, ax: int, n_nodes: int = 128, W: float = 8.0,
                     align: float | None = None) -> JumpQuadrature:
    """Composite Gauss-Legendre rule on ``[nu - W gamma, nu + W gamma]``.

    Panels hold 8 points each when ``n_nodes`` is a multiple of 8, otherwise
    a single panel is used.

    With ``align = h`` the window is widened to multiples of ``h`` and every
    lattice cell becomes a panel with at least ``n_nodes / cells`` points
    (minimum 3). P1 data shifted along a grid line of spacing ``h`` is then
    smooth on each panel, so the rule stays spectrally accurate for it.
    """
    if int(n_nodes) != n_nodes or n_nodes < 8:
        raise ValueError("n_nodes must be an integer >= 8")
    if not W >= 6:
        raise ValueError("window multiplier W must be >= 6")
    if align is not None and not align > 0:
        raise ValueError("align must be positive")
    lam, nu, gam = p.axis(ax)
    lo, hi = nu - W * gam, nu + W * gam
    if align is not None:
        lo = math.floor(lo / align + 1e-9) * align
        hi = math.ceil(hi / align - 1e-9) * align
    if lam == 0:
        return JumpQuadrature(ax, np.empty(0), np.empty(0), (lo, hi), float(W))
    n_nodes = int(n_nodes)
    if align is None:
        per = 8 if n_nodes % 8 == 0 else n_nodes
        panels = n_nodes // per
    else:
        panels = int(round((hi - lo) / align))
        per = max(3, -(-n_nodes // panels))
    t, wt = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    y = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    w = (half[:, None] * wt[None, :]).ravel()
    return JumpQuadrature(ax, y, w * kernel_density(p, ax, y), (lo, hi), float(W))


def build_quadratures(p: ModelParams, n_nodes: int = 128, W: float = 8.0, align: float | None = None):
    return build_quadrature(p, 1, n_nodes, W, align), build_quadrature(p, 2, n_nodes, W, align)


def _diff_matrix(n: int, h: float) -> np.ndarray:
    D = np.zeros((n, n))
    k = np.arange(1, n - 1)
    D[k, k - 1] = -0.5 / h
    D[k, k + 1] = 0.5 / h
    D[0, 0], D[0, 1] = -1.0 / h, 1.0 / h
    D[-1, -2], D[-1, -1] = -1.0 / h, 1.0 / h
    return D


def nodal_gradient(space: FemSpace, u) -> np.ndarray:
    """Centered-difference gradient at vertices (one-sided on the boundary), shape (N, 2)."""
    U = space.to_grid(u)
    D = _diff_matrix(space.n_per_side, space.h0)
    g1 = U @ D.T
    g2 = D @ U
    return np.column_stack([g1.ravel(), g2.ravel()])


def _line_matrices(grid: np.ndarray, h0: float, q: JumpQuadrature):
    """Interior and exterior line matrices for one axis.

    Returns ``(Jin, Jout, ext)`` where ``ext`` are the coordinates of the
    extended lattice beyond both ends of ``grid``.
    """
    n = grid.size
    M = grid[-1]
    D = _diff_matrix(n, h0)
    if len(q) == 0:
        return np.zeros((n, n)), np.zeros((n, 0)), np.empty(0)
    y, w = q.nodes, q.weights
    nL = int(math.ceil(max(0.0, -y.min()) / h0)) + 1
    nR = int(math.ceil(max(0.0, y.max()) / h0)) + 1
    ext = np.concatenate([-M - h0 * np.arange(nL + 1), M + h0 * np.arange(nR + 1)])

    s = grid[:, None] + y[None, :]  # (n, nq)
    W = np.broadcast_to(w, s.shape)
    rows = np.broadcast_to(np.arange(n)[:, None], s.shape)
    tol = 1e-12 * max(1.0, M)

    Jin = np.zeros((n, n))
    Jout = np.zeros((n, ext.size))

    inside = np.abs(s) <= M + tol
    t = (np.clip(s[inside], -M, M) + M) / h0
    i = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
    f = t - i
    r, ww = rows[inside], W[inside]
    np.add.at(Jin, (r, i), ww * (1 - f))
    np.add.at(Jin, (r, i + 1), ww * f)

    left = s < -M - tol
    t = (-M - s[left]) / h0
    i = np.floor(t).astype(np.int64)
    f = t - i
    r, ww = rows[left], W[left]
    np.add.at(Jout, (r, i), ww * (1 - f))
    np.add.at(Jout, (r, i + 1), ww * f)

    right = s > M + tol
    t = (s[right] - M) / h0
    i = np.floor(t).astype(np.int64)
    f = t - i
    r, ww = rows[right], W[right]
    off = nL + 1
    np.add.at(Jout, (r, off + i), ww * (1 - f))
    np.add.at(Jout, (r, off + i + 1), ww * f)

    Jin -= q.mass * np.eye(n)
    Jin -= q.drift_mass * D
    return Jin, Jout, ext


class JumpOperator:
    """Assembled jump operator: ``J u = matvec(u) + affine(tau)``.

    ``extension(tau, pts)`` supplies field values outside the box; it is
    sampled on a lattice that continues the grid beyond each edge, and
    shifted points falling outside are linearly interpolated on it.
    """

    def __init__(self, space: FemSpace, quads, extension=None):
        self.space = space
        self.quads = tuple(quads)
        self.extension = extension
        g, h0 = space.grid, space.h0
        self.Jin1, self.Jout1, self.ext1 = _line_matrices(g, h0, self.quads[0])
        self.Jin2, self.Jout2, self.ext2 = _line_matrices(g, h0, self.quads[1])
        self._cache: dict[float, np.ndarray] = {}

    def matvec(self, u) -> np.ndarray:
        U = self.space.to_grid(u)
        return (U @ self.Jin1.T + self.Jin2 @ U).ravel()

    __call__ = matvec

    def matrix(self) -> sp.csr_matrix:
        n = self.space.n_per_side
        I = sp.identity(n, format="csr")
        A1 = sp.csr_matrix(self.Jin1)
        A2 = sp.csr_matrix(self.Jin2)
        A1.eliminate_zeros()
        A2.eliminate_zeros()
        A = (sp.kron(I, A1) + sp.kron(A2, I)).tocsr()
        A.eliminate_zeros()
        return A

    def affine(self, tau: float) -> np.ndarray:
        n = self.space.n_per_side
        if self.extension is None:
            return np.zeros(n * n)
        key = float(tau)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        g = self.space.grid
        out = np.zeros((n, n))
        if self.ext1.size:
            P = np.stack(np.broadcast_arrays(self.ext1[None, :], g[:, None]), axis=-1)  # [j, e]
            G1 = np.asarray(self.extension(tau, P), dtype=float)
            out += G1 @ self.Jout1.T
        if self.ext2.size:
            P = np.stack(np.broadcast_arrays(g[None, :], self.ext2[:, None]), axis=-1)  # [e, i]
            G2 = np.asarray(self.extension(tau, P), dtype=float)
            out += self.Jout2 @ G2
        vec = out.ravel()
        if len(self._cache) >= 4:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = vec
        return vec

    def apply(self, u, tau: float) -> np.ndarray:
        return self.matvec(u) + self.affine(tau)


def assemble_jump_matrix(space: FemSpace, quads, extension=None):
    """Sparse linear part and the affine callable ``tau -> vector``."""
    op = JumpOperator(space, quads, extension)
    return op.matrix(), op.affine


def apply_jump(space: FemSpace, quads, nodal, tau: float, extension=None) -> np.ndarray:
    """Reference evaluation of J at every vertex.

    Shifted points are evaluated one by one through ``interpolate``;
    outside the box ``extension(tau, pts)`` is called directly, or zero is
    used when it is None.
    """
    u = np.asarray(nodal, dtype=float)
    V = space.vertices
    grad = nodal_gradient(space, u)
    if extension is None:
        ext = lambda pts: np.zeros(pts.shape[:-1])  # noqa: E731
    else:
        ext = lambda pts: extension(tau, pts)  # noqa: E731
    out = np.zeros(u.size)
    for q in quads:
        if len(q) == 0:
            continue
        a = q.ax - 1
        shifted = np.repeat(V[:, None, :], len(q), axis=1)
        shifted[:, :, a] += q.nodes[None, :]
        vals = interpolate(space, u, shifted, ext)
        out += vals @ q.weights - q.mass * u - q.drift_mass * grad[:, a]
    return out


# -- 1-D oracles for smooth test functions ------------------------------------


def jump_direct_form(p: ModelParams, ax: int, f, df, x: float, window: float = 12.0) -> float:
    """``int (f(x+y) - f(x) - (e^y - 1) f'(x)) k(y) dy`` by adaptive quadrature."""
    lam, nu, gam = p.axis(ax)
    if lam == 0:
        return 0.0
    fx, dfx = f(x), df(x)

    def g(y):
        return (f(x + y) - fx - math.expm1(y) * dfx) * float(kernel_density(p, ax, y))

    lo, hi = nu - window * gam, nu + window * gam
    tiny = 1e-15 * lam * (abs(fx) + abs(dfx) + 1e-300)
    val, _ = integrate.quad(g, lo, hi, epsabs=tiny, epsrel=1e-12, limit=400)
    return val


def jump_kchi_form(p: ModelParams, ax: int, f, df, x: float, window: float = 12.0) -> float:
    """Same integral after integration by parts against the tail anti-derivative:

    ``int (f'(x+y) - f'(x)) K(y) dy + chi f'(x)``.
    """
    lam, nu, gam = p.axis(ax)
    if lam == 0:
        return 0.0
    dfx = df(x)

    def g(y):
        return (df(x + y) - dfx) * float(antiderivative_K(p, ax, y))

    lo, hi = min(nu - window * gam, -1e-300), max(nu + window * gam, 1e-300)
    tiny = 1e-15 * lam * (abs(dfx) + 1e-300)
    total = 0.0
    for a, b in ((lo, 0.0), (0.0, hi)):
        if b > a:
            val, _ = integrate.quad(g, a, b, epsabs=tiny, epsrel=1e-12, limit=400)
            total += val
    return total + drift_correction_chi(p, ax) * dfx


def dump_quadrature_csv(quads, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["axis", "node", "weight"])
        for q in quads:
            for y, w in zip(q.nodes, q.weights):
                wr.writerow([q.ax, repr(float(y)), repr(float(w))])
