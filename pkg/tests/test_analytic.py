import math

import numpy as np
import pytest

from levyfem.analytic import (
    FiniteDifferenceField,
    PolynomialField,
    bs_polynomial_price,
    elm_polynomial_price,
    merton_put_1d,
    pide_residual_at,
)
from levyfem.levy_model import ModelParams
from levyfem.payoff import PayoffKind, PayoffSpec

P = ModelParams(sigma=(0.1, 0.1), rho=0.3, T=0.1, K=80.0)


def test_bs_row_value():
    assert bs_polynomial_price(P, 0.0, 40, 40) / 1000 == pytest.approx(6.4363, abs=5e-5)


def test_prices_at_expiry_equal_payoff():
    assert bs_polynomial_price(P, P.T, 40, 40) == pytest.approx(6400.0)
    assert elm_polynomial_price(P, P.T, 30, 50) == pytest.approx(6400.0)


def test_jumps_raise_price():
    assert elm_polynomial_price(P, 0.0, 40, 40) > bs_polynomial_price(P, 0.0, 40, 40)


def test_field_is_discounted_price():
    f = PolynomialField(P)
    x = np.log([40.0, 40.0])
    assert math.exp(-P.r * P.T) * f.value(P.T, x) == pytest.approx(elm_polynomial_price(P, 0.0, 40, 40), rel=1e-14)


def test_field_derivatives_match_differences():
    f = PolynomialField(P)
    fd = FiniteDifferenceField(f.value, h=1e-5, ht=1e-6)
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(f.grad(0.2, x), fd.grad(0.2, x), rtol=1e-8)
    np.testing.assert_allclose(f.hess(0.2, x), fd.hess(0.2, x), rtol=1e-5)
    assert f.dtau(0.2, x) == pytest.approx(fd.dtau(0.2, x), rel=1e-8)


def test_polynomial_field_solves_pide():
    spec = PayoffSpec(PayoffKind.POLYNOMIAL, 1.0, P)
    f = PolynomialField(P)
    for x in ([0.0, 0.0], [3.7, 3.6], [-1.0, 2.0]):
        res = pide_residual_at(P, spec, 0.05, x, field=f)
        assert abs(res) < 1e-9 * f.value(0.05, np.array(x))


def test_without_jumps_field_differs():
    assert PolynomialField(P, jumps=False).c1 < PolynomialField(P).c1


def test_merton_reduces_to_black_scholes():
    from scipy.stats import norm

    S, K, T, r, s = 40.0, 40.0, 1.0, 0.05, 0.3
    d1 = (math.log(S / K) + (r + 0.5 * s * s) * T) / (s * math.sqrt(T))
    d2 = d1 - s * math.sqrt(T)
    bs = K * math.exp(-r * T) * norm.cdf(-d2) - S * norm.cdf(-d1)
    assert merton_put_1d(S, K, T, r, s, 0.0, -0.9, 0.45) == pytest.approx(bs, rel=1e-12)


def test_merton_put_call_parity_bound():
    v = merton_put_1d(40, 40, 1.0, 0.05, 0.3, 0.1, -0.9, 0.45)
    assert 40 * math.exp(-0.05) - 40 < v < 40 * math.exp(-0.05)
