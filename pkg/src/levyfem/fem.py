"""P1 finite elements on a uniformly triangulated square ``[-M, M]^2``.

Vertices are numbered row-major, ``v = j * n + i`` with ``i`` running along
``x1``. Every grid cell is cut along its (i, j) -> (i+1, j+1) diagonal.
All element integrals are exact for constant coefficients.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "FemSpace",
    "WeightEta",
    "build_mesh",
    "assemble_mass",
    "assemble_diffusion",
    "assemble_convection",
    "assemble_laplace",
    "interpolate",
    "eta_weight",
    "eta_decay",
    "weighted_norm",
    "error_norms",
    "garding_diagnostic",
    "dump_mesh_csv",
    "dump_operator_coo",
]


@dataclass(frozen=True, eq=False)
class FemSpace:
    M: float
    n_per_side: int
    grid: np.ndarray  # 1-D vertex coordinates along each axis
    vertices: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3)
    boundary_mask: np.ndarray  # (N,) bool
    h: float  # longest edge

    @property
    def h0(self) -> float:
        """Grid spacing along each axis."""
        return 2.0 * self.M / (self.n_per_side - 1)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def to_grid(self, u):
        """Reshape a nodal vector to ``(n, n)`` indexed ``[j, i]``."""
        n = self.n_per_side
        return np.asarray(u).reshape(n, n)

    def vertex_index(self, i: int, j: int) -> int:
        return j * self.n_per_side + i


def build_mesh(M: float, n_per_side: int) -> FemSpace:
    if not (M > 0 and math.isfinite(M)):
        raise ValueError("M must be positive")
    if int(n_per_side) != n_per_side or n_per_side < 3:
        raise ValueError("n_per_side must be an integer >= 3")
    n = int(n_per_side)
    grid = np.linspace(-M, M, n)
    X1, X2 = np.meshgrid(grid, grid)
    verts = np.column_stack([X1.ravel(), X2.ravel()])

    I, J = np.meshgrid(np.arange(n - 1), np.arange(n - 1))
    v00 = (J * n + I).ravel()
    v10 = v00 + 1
    v01 = v00 + n
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # interleave so each cell's two triangles are adjacent
    tris = np.empty((2 * lower.shape[0], 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper

    jj, ii = np.divmod(np.arange(n * n), n)
    bmask = (ii == 0) | (ii == n - 1) | (jj == 0) | (jj == n - 1)
    h = 2.0 * M * math.sqrt(2.0) / (n - 1)
    return FemSpace(float(M), n, grid, verts, tris, bmask, h)


def _geometry(space: FemSpace):
    """Triangle areas (T,) and P1 basis gradients (T, 2, 3)."""
    P = space.vertices[space.triangles]  # (T, 3, 2)
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of barycentric coordinates: rows of inv([e1 e2]) give grad(l1), grad(l2)
    inv = np.empty((P.shape[0], 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    G = np.empty((P.shape[0], 2, 3))
    G[:, :, 1] = inv[:, 0, :]
    G[:, :, 2] = inv[:, 1, :]
    G[:, :, 0] = -G[:, :, 1] - G[:, :, 2]
    return area, G


def _scatter(space: FemSpace, local: np.ndarray) -> sp.csr_matrix:
    t = space.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    N = space.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(space: FemSpace) -> sp.csr_matrix:
    area, _ = _geometry(space)
    return _scatter(space, area[:, None, None] * _MASS_REF[None])


def assemble_diffusion(space: FemSpace, kappa) -> sp.csr_matrix:
    """Matrix of ``(u, v) -> int grad(u)^T kappa grad(v)``."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (2, 2) or not np.allclose(kappa, kappa.T, rtol=0, atol=1e-14):
        raise ValueError("kappa must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(kappa).min() <= 0:
        raise ValueError("kappa must be positive definite")
    area, G = _geometry(space)
    local = np.einsum("t,tai,ab,tbj->tij", area, G, kappa, G)
    return _scatter(space, local)


def assemble_laplace(space: FemSpace) -> sp.csr_matrix:
    """Gram matrix of the H1 seminorm."""
    return assemble_diffusion(space, np.eye(2))


def assemble_convection(space: FemSpace, alpha) -> sp.csr_matrix:
    """Matrix of ``(u, v) -> -int (alpha . grad u) v``; row = test, column = trial."""
    alpha = np.asarray(alpha, dtype=float)
    area, G = _geometry(space)
    adg = np.einsum("a,taj->tj", alpha, G)  # (T, 3) alpha . grad(phi_j)
    local = -(area / 3.0)[:, None, None] * np.broadcast_to(adg[:, None, :], (area.size, 3, 3))
    return _scatter(space, np.ascontiguousarray(local))


def interpolate(space: FemSpace, nodal, point, extension=None):
    """Evaluate the P1 function at ``point`` (shape (..., 2)).

    Points outside the box are sent to ``extension(points)``; without an
    extension such points raise ``ValueError``.
    """
    u = np.asarray(nodal, dtype=float)
    if u.shape != (space.n_vertices,):
        raise ValueError("nodal vector length must equal the vertex count")
    pt = np.asarray(point, dtype=float)
    shape = pt.shape[:-1]
    pt = pt.reshape(-1, 2)
    M, n, h0 = space.M, space.n_per_side, space.h0
    tol = 1e-12 * max(1.0, M)
    inside = np.all(np.abs(pt) <= M + tol, axis=1)
    out = np.empty(pt.shape[0])
    if inside.any():
        q = np.clip(pt[inside], -M, M)
        s = (q + M) / h0
        ij = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
        f = s - ij
        fx, fy = f[:, 0], f[:, 1]
        v00 = ij[:, 1] * n + ij[:, 0]
        u00, u10, u01, u11 = u[v00], u[v00 + 1], u[v00 + n], u[v00 + n + 1]
        low = fx >= fy
        out[inside] = np.where(
            low,
            u00 + fx * (u10 - u00) + fy * (u11 - u10),
            u00 + fy * (u01 - u00) + fx * (u11 - u01),
        )
    if (~inside).any():
        if extension is None:
            raise ValueError("point outside the domain and no extension given")
        out[~inside] = np.asarray(extension(pt[~inside]), dtype=float).reshape(-1)
    out = out.reshape(shape)
    return out if out.ndim else float(out)


# -- exponential weights -----------------------------------------------------


@dataclass(frozen=True)
class WeightEta:
    eta1: float
    eta2: float

    def __post_init__(self):
        if not (self.eta1 > 1 and self.eta2 > 1):
            raise ValueError("both weight parameters must exceed 1")


def eta_weight(w: WeightEta, x):
    """Growing quadrant-wise linear weight: ``-eta1 * t`` for t < 0, ``eta2 * t`` for t >= 0, per axis."""
    x = np.asarray(x, dtype=float)

    def f(t):
        return np.where(t < 0, -w.eta1 * t, w.eta2 * t)

    out = f(x[..., 0]) + f(x[..., 1])
    return out if out.ndim else float(out)


def eta_decay(w: WeightEta | None, x):
    """Decaying weight exponent ``-(eta1 |x1| + eta2 |x2|)``; zero when ``w`` is None."""
    x = np.asarray(x, dtype=float)
    if w is None:
        out = np.zeros(x.shape[:-1])
    else:
        out = -(w.eta1 * np.abs(x[..., 0]) + w.eta2 * np.abs(x[..., 1]))
    return out if out.ndim else float(out)


# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_QBARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
        [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
    ]
)
_QW = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def _quad_points(space: FemSpace):
    P = space.vertices[space.triangles]  # (T, 3, 2)
    return np.einsum("qk,tkd->tqd", _QBARY, P)  # (T, Q, 2)


def weighted_norm(space: FemSpace, nodal, w: WeightEta | None = None, kind: str = "L2") -> float:
    """``||u e^eta||`` with the decaying weight, by element quadrature.

    For ``kind="H1"`` the squared norm is ``int (u^2 + |grad u|^2) e^{2 eta}``.
    """
    kind = kind.upper()
    if kind not in ("L2", "H1"):
        raise ValueError("kind must be 'L2' or 'H1'")
    u = np.asarray(nodal, dtype=float)
    area, G = _geometry(space)
    ut = u[space.triangles]  # (T, 3)
    uq = ut @ _QBARY.T  # (T, Q)
    wq = np.exp(2.0 * eta_decay(w, _quad_points(space)))
    integrand = uq**2
    if kind == "H1":
        grad = np.einsum("tai,ti->ta", G, ut)
        integrand = integrand + np.sum(grad**2, axis=1)[:, None]
    return float(math.sqrt(np.sum(area[:, None] * _QW[None] * integrand * wq)))


def error_norms(space: FemSpace, nodal, exact, exact_grad) -> tuple[float, float]:
    """L2 error and H1-seminorm error of a P1 field against a smooth function.

    ``exact`` and ``exact_grad`` take points of shape (..., 2).
    """
    u = np.asarray(nodal, dtype=float)
    area, G = _geometry(space)
    ut = u[space.triangles]
    xq = _quad_points(space)
    eu = ut @ _QBARY.T - exact(xq)
    grad = np.einsum("tai,ti->ta", G, ut)
    eg = grad[:, None, :] - exact_grad(xq)
    l2 = math.sqrt(np.sum(area[:, None] * _QW[None] * eu**2))
    h1 = math.sqrt(np.sum(area[:, None] * _QW[None] * np.sum(eg**2, axis=-1)))
    return l2, h1


def garding_diagnostic(space: FemSpace, kappa, alpha, n_samples: int = 100, seed: int = 0) -> dict:
    """Fit constants with ``a(u,u) + beta ||u||^2 >= c ||u||_H1^2`` on random
    interior fields.

    ``c`` is fixed at half the smallest eigenvalue of ``kappa``; ``beta`` is
    the smallest shift that makes every sample satisfy the inequality.
    """
    A = assemble_diffusion(space, kappa) + assemble_convection(space, alpha)
    Mm = assemble_mass(space)
    Lap = assemble_laplace(space)
    c = 0.5 * float(np.linalg.eigvalsh(np.asarray(kappa, float)).min())
    rng = np.random.default_rng(seed)
    betas = []
    for _ in range(n_samples):
        u = rng.standard_normal(space.n_vertices)
        u[space.boundary_mask] = 0.0
        a = float(u @ (A @ u))
        l2 = float(u @ (Mm @ u))
        h1 = l2 + float(u @ (Lap @ u))
        betas.append((c * h1 - a) / l2)
    beta = max(0.0, max(betas))
    return {"c": c, "beta": beta, "n_samples": n_samples}


def dump_mesh_csv(space: FemSpace, vertices_path, triangles_path) -> None:
    with open(vertices_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "x1", "x2", "boundary"])
        for k, ((a, b), bd) in enumerate(zip(space.vertices, space.boundary_mask)):
            wr.writerow([k, repr(float(a)), repr(float(b)), int(bd)])
    with open(triangles_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["v0", "v1", "v2"])
        wr.writerows(space.triangles.tolist())


def dump_operator_coo(A, path) -> None:
    """Write ``row col value`` lines, sorted by row then column."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]!r}\n")
