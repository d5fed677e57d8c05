import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from levyfem.levy_model import (
    ModelParams,
    UndefinedPointError,
    antiderivative_K,
    diffusion_matrix,
    drift_correction_chi,
    drift_vector,
    jump_moment_Lambda,
    kernel_density,
)


def test_defaults_and_broadcast():
    p = ModelParams(sigma=0.3, lam=0.2)
    assert p.sigma == (0.3, 0.3)
    assert p.lam == (0.2, 0.2)
    assert p.axis(2) == (0.2, -0.9, 0.45)


@pytest.mark.parametrize(
    "kw",
    [dict(sigma=0.0), dict(gamma=-1.0), dict(lam=-0.1), dict(rho=1.0), dict(rho=-1.2), dict(T=0.0), dict(K=-1.0),
     dict(w=(-0.5, 0.5))],
)
def test_rejects_invalid(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_axis_rejects_bad_index():
    with pytest.raises(ValueError):
        ModelParams().axis(3)


def test_kernel_mass():
    p = ModelParams()
    val, _ = integrate.quad(lambda y: kernel_density(p, 1, y), -10, 10, epsabs=1e-14)
    assert val == pytest.approx(0.1, rel=1e-12)


def test_antiderivative_matches_quadrature():
    p = ModelParams()
    for z in (-2.0, -0.5, 0.3, 1.5):
        if z > 0:
            ref, _ = integrate.quad(lambda y: kernel_density(p, 1, y), z, np.inf)
        else:
            ref, _ = integrate.quad(lambda y: kernel_density(p, 1, y), -np.inf, z)
            ref = -ref
        assert antiderivative_K(p, 1, z) == pytest.approx(ref, rel=1e-9, abs=1e-15)


def test_antiderivative_undefined_at_zero():
    with pytest.raises(UndefinedPointError):
        antiderivative_K(ModelParams(), 1, 0.0)


def test_chi_and_Lambda_closed_forms():
    p = ModelParams()
    chi, _ = integrate.quad(lambda y: (y - math.expm1(y)) * kernel_density(p, 1, y), -10, 10, epsabs=1e-15)
    assert drift_correction_chi(p, 1) == pytest.approx(chi, rel=1e-10)
    lam, _ = integrate.quad(lambda y: math.expm1(y) ** 2 * kernel_density(p, 1, y), -10, 10, epsabs=1e-15)
    assert jump_moment_Lambda(p, 1) == pytest.approx(lam, rel=1e-10)
    assert jump_moment_Lambda(p, 1) == pytest.approx(0.034805108335, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0, 2), nu=st.floats(-2, 1), gam=st.floats(0.01, 1))
def test_Lambda_nonnegative(lam, nu, gam):
    assert jump_moment_Lambda(ModelParams(lam=lam, nu=nu, gamma=gam), 1) >= 0.0


def test_diffusion_and_drift():
    p = ModelParams(sigma=(0.2, 0.3), rho=0.5, r=0.04)
    k = diffusion_matrix(p)
    np.testing.assert_allclose(k, [[0.02, 0.015], [0.015, 0.045]])
    np.testing.assert_allclose(drift_vector(p), [0.04 - 0.02, 0.04 - 0.045])
