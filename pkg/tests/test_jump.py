import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyfem.fem import build_mesh
from levyfem.jump import (
    JumpOperator,
    _line_matrices,
    apply_jump,
    assemble_jump_matrix,
    build_quadrature,
    build_quadratures,
    dump_quadrature_csv,
    jump_direct_form,
    jump_kchi_form,
    nodal_gradient,
)
from levyfem.levy_model import ModelParams, jump_moment_Lambda

P = ModelParams()


def test_quadrature_moments():
    for ax in (1, 2):
        q = build_quadrature(P, ax, 128, 8.0)
        assert np.all(q.weights >= 0)
        assert q.mass == pytest.approx(0.1, abs=1e-10)
        assert q.drift_mass == pytest.approx(0.1 * (math.exp(-0.9 + 0.45**2 / 2) - 1), abs=1e-8)
        np.testing.assert_allclose(np.sort(q.nodes - (-0.9)), np.sort(-(q.nodes - (-0.9))), atol=1e-13)


def test_quadrature_zero_intensity_is_empty():
    q = build_quadrature(P.replace(lam=0.0), 1)
    assert len(q) == 0
    s = build_mesh(2.0, 9)
    u = np.random.default_rng(0).standard_normal(s.n_vertices)
    assert np.all(apply_jump(s, build_quadratures(P.replace(lam=0.0)), u, 0.0) == 0.0)


def test_quadrature_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_quadrature(P, 1, 4)
    with pytest.raises(ValueError):
        build_quadrature(P, 1, 64, 5.0)


def test_aligned_quadrature_covers_window():
    h = 0.07
    q = build_quadrature(P, 1, 128, 8.0, align=h)
    lo, hi = q.window
    assert lo <= -0.9 - 8 * 0.45 and hi >= -0.9 + 8 * 0.45
    assert lo / h == pytest.approx(round(lo / h)) and hi / h == pytest.approx(round(hi / h))
    assert q.mass == pytest.approx(0.1, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.01, 2.0), nu=st.floats(-1.5, 1.0), gam=st.floats(0.05, 0.8))
def test_quadrature_moments_property(lam, nu, gam):
    q = build_quadrature(ModelParams(lam=lam, nu=nu, gamma=gam), 1, 128, 8.0)
    assert q.mass == pytest.approx(lam, rel=1e-10)
    assert q.drift_mass == pytest.approx(lam * (math.exp(nu + gam * gam / 2) - 1), rel=1e-8, abs=1e-12)


def test_constants_annihilated():
    s = build_mesh(4.5, 33)
    qs = build_quadratures(P)
    c = 3.7
    u = np.full(s.n_vertices, c)
    out = apply_jump(s, qs, u, 0.0, lambda t, x: np.full(x.shape[:-1], c))
    assert np.abs(out).max() < 1e-10 * c


def test_matrix_plus_affine_kills_constants():
    s = build_mesh(3.0, 41)
    op = JumpOperator(s, build_quadratures(P, align=s.h0), lambda t, x: np.ones(x.shape[:-1]))
    assert np.abs(op.matrix() @ np.ones(s.n_vertices) + op.affine(0.0)).max() < 1e-14


def test_exponential_annihilated_at_deep_interior():
    p = ModelParams(nu=0.0, gamma=0.1, lam=0.1)
    s = build_mesh(2.0, 513)
    qs = build_quadratures(p, align=s.h0)
    op = JumpOperator(s, qs, lambda t, x: np.exp(x[..., 0]))
    u = np.exp(s.vertices[:, 0])
    out = op.apply(u, 0.0)
    deep = np.all(np.abs(s.vertices) < 2.0 - 8 * 0.1, axis=1)
    assert np.abs(out[deep]).max() < 1e-6 * u.max()


def test_quadratic_exponential_matches_oracle():
    # one grid line is enough: the operator acts axis by axis
    g = np.linspace(-4.5, 4.5, 2049)
    h0 = g[1] - g[0]
    q = build_quadrature(P, 1, 128, 8.0, align=h0)
    Jin, _, _ = _line_matrices(g, h0, q)
    out = Jin @ np.exp(2 * g)
    lam2 = jump_moment_Lambda(P, 1)
    lo, hi = q.window
    for x in np.linspace(-4.5 - lo + 0.1, 4.5 - hi - 0.1, 5):
        i = int(round((x + 4.5) / h0))
        ref = jump_direct_form(P, 1, lambda z: math.exp(2 * z), lambda z: 2 * math.exp(2 * z), g[i])
        assert ref == pytest.approx(lam2 * math.exp(2 * g[i]), rel=1e-9)
        assert out[i] == pytest.approx(ref, rel=1e-4)


def test_matrix_equals_reference_with_zero_extension():
    s = build_mesh(4.5, 33)
    qs = build_quadratures(P, align=s.h0)
    u = np.random.default_rng(5).standard_normal(s.n_vertices)
    A, affine = assemble_jump_matrix(s, qs)
    ref = apply_jump(s, qs, u, 0.0)
    assert np.abs(A @ u - ref).max() <= 1e-12 * np.abs(ref).max()
    assert np.all(affine(0.3) == 0.0)
    op = JumpOperator(s, qs)
    np.testing.assert_allclose(op.matvec(u), A @ u, rtol=0, atol=1e-13 * np.abs(ref).max())


def test_matrix_couples_only_grid_lines():
    s = build_mesh(2.0, 17)
    A = JumpOperator(s, build_quadratures(P, align=s.h0)).matrix().tocoo()
    n = s.n_per_side
    ri, rj = A.row % n, A.row // n
    ci, cj = A.col % n, A.col // n
    assert np.all((ri == ci) | (rj == cj))
    per_row = np.bincount(A.row, minlength=s.n_vertices)
    assert per_row.max() <= 2 * n


def test_affine_extension_close_to_reference():
    s = build_mesh(4.5, 65)
    qs = build_quadratures(P, align=s.h0)
    f = lambda t, x: np.exp(x[..., 0]) + 0.5 * np.exp(x[..., 1])  # noqa: E731
    u = f(0.0, s.vertices)
    op = JumpOperator(s, qs, f)
    ref = apply_jump(s, qs, u, 0.0, f)
    inner = ~s.boundary_mask
    assert np.abs(op.apply(u, 0.0) - ref)[inner].max() < 1e-3 * np.abs(u).max()


def test_quadrature_refinement_converges():
    s = build_mesh(4.5, 65)
    u = np.sin(s.vertices[:, 0]) * np.cos(0.5 * s.vertices[:, 1]) + np.exp(0.3 * s.vertices[:, 0])
    ext = lambda t, x: np.sin(x[..., 0]) * np.cos(0.5 * x[..., 1]) + np.exp(0.3 * x[..., 0])  # noqa: E731
    outs = {m: apply_jump(s, build_quadratures(P, m, align=s.h0), u, 0.0, ext) for m in (64, 128, 256)}
    for a, b in ((64, 128), (128, 256)):
        assert np.abs(outs[a] - outs[b]).max() < 1e-8 * np.abs(outs[b]).max()


@pytest.mark.parametrize("x", [-1.0, 0.0, 0.7, 2.0])
def test_kchi_form_matches_direct_form(x):
    for f, df in ((math.sin, math.cos), (lambda z: math.exp(2 * z), lambda z: 2 * math.exp(2 * z)),
                  (lambda z: math.exp(-z) + math.sin(3 * z), lambda z: -math.exp(-z) + 3 * math.cos(3 * z))):
        a = jump_direct_form(P, 1, f, df, x)
        b = jump_kchi_form(P, 1, f, df, x)
        assert b == pytest.approx(a, rel=1e-5)


def test_nodal_gradient_second_order_inside():
    errs = []
    for n in (33, 65):
        s = build_mesh(2.0, n)
        u = np.sin(s.vertices[:, 0]) + s.vertices[:, 1] ** 2
        g = nodal_gradient(s, u)
        inner = ~s.boundary_mask
        errs.append(np.abs(g[inner, 0] - np.cos(s.vertices[inner, 0])).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_dump_quadrature(tmp_path):
    path = tmp_path / "q.csv"
    dump_quadrature_csv(build_quadratures(P, 16), path)
    assert len(path.read_text().splitlines()) == 1 + 32
