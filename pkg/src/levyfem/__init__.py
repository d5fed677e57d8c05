"""Finite-element pricing of two-asset options under Merton jump diffusion."""
from .analytic import PolynomialField, bs_polynomial_price, elm_polynomial_price, merton_put_1d, pide_residual_at
from .fem import FemSpace, WeightEta, build_mesh
from .harness import RunConfig, convergence_study, load_config, price, reproduce_tables
from .jump import JumpOperator, apply_jump, build_quadrature
from .levy_model import ModelParams
from .payoff import PayoffKind, PayoffSpec, boundary_g, smoothed_g
from .timestepper import Scheme, SchemeConfig, run

__all__ = [
    "ModelParams",
    "PayoffKind",
    "PayoffSpec",
    "boundary_g",
    "smoothed_g",
    "FemSpace",
    "WeightEta",
    "build_mesh",
    "build_quadrature",
    "apply_jump",
    "JumpOperator",
    "Scheme",
    "SchemeConfig",
    "run",
    "RunConfig",
    "load_config",
    "price",
    "reproduce_tables",
    "convergence_study",
    "PolynomialField",
    "bs_polynomial_price",
    "elm_polynomial_price",
    "merton_put_1d",
    "pide_residual_at",
]

__version__ = "0.1.0"
